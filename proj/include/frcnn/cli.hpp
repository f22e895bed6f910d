#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "frcnn/boxes.hpp"
#include "frcnn/evaluation.hpp"

namespace frcnn {

/// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

/// Per-image box lists keyed by manifest image path, in original image
/// coordinates. Proposal rows: image,rank,score,x1,y1,x2,y2.
using BoxTable = std::map<std::string, std::vector<ScoredBox>>;

std::string proposals_csv(const std::vector<std::string>& images,
                          const std::vector<std::vector<ScoredBox>>& boxes);
BoxTable read_proposals_csv(const std::filesystem::path& path);

/// Detection rows: image,class,score,x1,y1,x2,y2.
std::string detections_csv(const std::vector<std::string>& images,
                           const std::vector<std::vector<ScoredBox>>& boxes);
BoxTable read_detections_csv(const std::filesystem::path& path);

}  // namespace frcnn
