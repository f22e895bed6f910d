#include "frcnn/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "frcnn/checkpoint.hpp"
#include "frcnn/config.hpp"
#include "frcnn/training.hpp"

namespace fs = std::filesystem;

namespace frcnn {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty())
    throw DataError(where + ": expected a number, got '" + s + "'");
  return v;
}

BoxTable read_box_csv(const fs::path& path, const std::string& expected_header, bool has_class) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != expected_header)
    throw DataError(path.string() + ":1: expected header '" + expected_header + "'");
  BoxTable out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto cells = split_csv_line(line);
    if (cells.size() != 7) throw DataError(where + ": expected 7 columns");
    ScoredBox b;
    b.class_id = has_class ? static_cast<int>(to_double(cells[1], where)) : 0;
    b.score = to_double(cells[2], where);
    b.box = {to_double(cells[3], where), to_double(cells[4], where), to_double(cells[5], where),
             to_double(cells[6], where)};
    out[cells[0]].push_back(b);
  }
  return out;
}

std::string box_csv(const std::vector<std::string>& images,
                    const std::vector<std::vector<ScoredBox>>& boxes, const char* header,
                    bool with_class) {
  if (images.size() != boxes.size()) throw std::invalid_argument("box_csv: size mismatch");
  std::string s = std::string(header) + "\n";
  char buf[160];
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t r = 0; r < boxes[i].size(); ++r) {
      const ScoredBox& b = boxes[i][r];
      std::snprintf(buf, sizeof buf, ",%d,%.9g,%.6f,%.6f,%.6f,%.6f",
                    with_class ? b.class_id : static_cast<int>(r), b.score, b.box.x1, b.box.y1,
                    b.box.x2, b.box.y2);
      s += images[i] + buf + "\n";
    }
  }
  return s;
}

constexpr char kProposalHeader[] = "image,rank,score,x1,y1,x2,y2";
constexpr char kDetectionHeader[] = "image,class,score,x1,y1,x2,y2";

/// Runs f(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots, which keeps output order deterministic.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::size_t threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value config file");
  sub->add_option("--set", c.sets, "override one config key, KEY=VALUE (repeatable)");
  sub->add_option("--threads", c.threads, "worker threads for per-image inference")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

/// Config from --config (or `fallback` when given and present), then --set.
RunConfig resolve_config(const Common& c, const fs::path& fallback = {}) {
  RunConfig cfg;
  if (!c.config.empty())
    cfg.load_file(c.config);
  else if (!fallback.empty() && fs::exists(fallback))
    cfg.load_file(fallback);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

fs::path manifest_path(const fs::path& p) {
  return fs::is_directory(p) ? p / "manifest.jsonl" : p;
}

fs::path sibling_config(const fs::path& checkpoint) {
  return checkpoint.parent_path() / "config.txt";
}

void echo_into_dir(const fs::path& dir, const RunConfig& cfg) {
  write_text(dir / "config.txt", cfg.dump());
}

void echo_beside(const fs::path& file, const RunConfig& cfg) {
  write_text(fs::path(file.string() + ".config.txt"), cfg.dump());
}

void emit(const std::string& out, const std::string& text, const RunConfig& cfg) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
    echo_beside(out, cfg);
  }
}

std::vector<std::string> ids_of(const std::vector<Sample>& data) {
  std::vector<std::string> ids;
  for (const auto& s : data) ids.push_back(s.id);
  return ids;
}

std::vector<ScoredBox> to_original(std::vector<ScoredBox> boxes, double scale) {
  for (auto& b : boxes) b.box = b.box.scaled(1.0 / scale);
  return boxes;
}

bool is_onestage(const std::vector<NamedTensor>& tensors) {
  return std::any_of(tensors.begin(), tensors.end(),
                     [](const NamedTensor& t) { return t.name.rfind("dense.", 0) == 0; });
}

FasterRcnn load_two_stage(const RunConfig& cfg, const fs::path& ckpt) {
  const auto tensors = read_checkpoint(ckpt);
  if (is_onestage(tensors))
    throw std::runtime_error(ckpt.string() + " holds a one-stage model; a two-stage one is needed");
  Rng unused(0);
  FasterRcnn m = FasterRcnn::create(cfg.model, unused);
  m.import_tensors(tensors);
  return m;
}

std::vector<std::vector<ScoredBox>> propose_all(const FasterRcnn& m,
                                                const std::vector<Sample>& data,
                                                const ProposalParams& p, std::size_t threads,
                                                std::uint64_t seed) {
  std::vector<std::vector<ScoredBox>> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, "propose." + data[i].id);
    out[i] = propose(m, data[i], p, &rng);
  });
  return out;
}

std::vector<std::vector<Box>> gt_of(const std::vector<Sample>& data) {
  std::vector<std::vector<Box>> gt;
  for (const auto& s : data) gt.push_back(s.boxes);
  return gt;
}

std::string recall_rows(const std::string& variant, const std::vector<std::vector<ScoredBox>>& props,
                        const std::vector<std::vector<Box>>& gt, std::size_t n) {
  const auto grid = default_iou_grid();
  const RecallCurve c = recall_curve(props, gt, n, grid);
  std::string s;
  for (std::size_t t = 0; t < c.iou.size(); ++t)
    s += variant + "," + std::to_string(n) + "," + fmt(c.iou[t]) + "," + fmt(c.recall[t]) + "\n";
  std::cout << variant << " N=" << n << ": recall@0.5 " << fmt(c.at(0.5)) << ", recall@0.7 "
            << fmt(c.at(0.7)) << "\n";
  return s;
}

void log_training(const char* what, const LossLog& log) {
  std::cout << what << ": " << log.rows.size() << " iterations in " << fmt(log.seconds) << " s";
  if (log.skipped) std::cout << ", " << log.skipped << " skipped";
  std::cout << "\n";
}

std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> out;
  for (const auto& item : split_csv_line(s)) out.push_back(to_double(item, flag));
  if (out.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return out;
}

}  // namespace

std::string proposals_csv(const std::vector<std::string>& images,
                          const std::vector<std::vector<ScoredBox>>& boxes) {
  return box_csv(images, boxes, kProposalHeader, false);
}

BoxTable read_proposals_csv(const fs::path& path) {
  return read_box_csv(path, kProposalHeader, false);
}

std::string detections_csv(const std::vector<std::string>& images,
                           const std::vector<std::vector<ScoredBox>>& boxes) {
  return box_csv(images, boxes, kDetectionHeader, true);
}

BoxTable read_detections_csv(const fs::path& path) {
  return read_box_csv(path, kDetectionHeader, true);
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Desk-scale region proposal network and two-stage detector", "frcnn"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;
  std::function<int()> action;

  // gen-data
  std::size_t n_images = 0;
  std::uint64_t data_seed = 0;
  std::string out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
  gen->add_option("--n", n_images, "number of images")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", data_seed, "dataset seed")->required();
  gen->add_option("--out", out, "output directory")->required();
  add_common(gen, common);
  gen->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve_config(common);
      const auto m = gen_synthetic(n_images, out, data_seed, cfg.data);
      echo_into_dir(out, cfg);
      std::cout << "wrote " << m.entries.size() << " images to " << out << "\n";
      return kExitOk;
    };
  });

  // training subcommands share --data/--out
  std::string data;
  auto add_train = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--data", data, "training manifest or dataset directory")->required();
    sub->add_option("--out", out, "output directory")->required();
    add_common(sub, common);
    return sub;
  };

  add_train("train-rpn", "train backbone and proposal head (writes rpn.ckpt, loss.csv)")
      ->callback([&] {
        action = [&] {
          const RunConfig cfg = resolve_config(common);
          const auto samples = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
          Rng init = Rng::stream(cfg.seed, "init");
          TrainState st{FasterRcnn::create(cfg.model, init)};
          const LossLog log = train_rpn(samples, st, cfg.schedule("rpn"));
          fs::create_directories(out);
          write_checkpoint(fs::path(out) / "rpn.ckpt", st.model.export_tensors());
          write_text(fs::path(out) / "loss.csv", log.csv());
          echo_into_dir(out, cfg);
          log_training("train-rpn", log);
          return kExitOk;
        };
      });

  add_train("train-alt",
            "4-step alternating training (writes step1..4.ckpt, loss_step1..4.csv, model.ckpt)")
      ->callback([&] {
        action = [&] {
          const RunConfig cfg = resolve_config(common);
          const auto samples = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
          fs::create_directories(out);
          const std::array<TrainSchedule, 4> sch{cfg.schedule("step1"), cfg.schedule("step2"),
                                                 cfg.schedule("step3"), cfg.schedule("step4")};
          const auto r = alternate_4step(
              samples, cfg.model, sch, cfg.seed,
              [&](int step, FasterRcnn& m, const LossLog& log) {
                const std::string tag = "step" + std::to_string(step);
                write_checkpoint(fs::path(out) / (tag + ".ckpt"), m.export_tensors());
                write_text(fs::path(out) / ("loss_" + tag + ".csv"), log.csv());
                log_training(tag.c_str(), log);
              });
          FasterRcnn final_model = r.state.model;
          write_checkpoint(fs::path(out) / "model.ckpt", final_model.export_tensors());
          std::string sums = "step,backbone_checksum\n";
          char buf[40];
          for (int i = 0; i < 4; ++i) {
            std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)r.backbone_after[i]);
            sums += std::to_string(i + 1) + "," + buf + "\n";
          }
          write_text(fs::path(out) / "backbone_checksums.csv", sums);
          echo_into_dir(out, cfg);
          const bool shared = r.backbone_after[1] == r.backbone_after[2] &&
                              r.backbone_after[2] == r.backbone_after[3];
          std::cout << "shared backbone unchanged through steps 3-4: " << (shared ? "yes" : "NO")
                    << "\n";
          return shared ? kExitOk : kExitFailure;
        };
      });

  add_train("train-joint", "approximate joint training (writes model.ckpt, loss.csv)")
      ->callback([&] {
        action = [&] {
          const RunConfig cfg = resolve_config(common);
          const auto samples = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
          auto r = joint_train(samples, cfg.model, cfg.schedule("joint"), cfg.seed);
          fs::create_directories(out);
          write_checkpoint(fs::path(out) / "model.ckpt", r.state.model.export_tensors());
          write_text(fs::path(out) / "loss.csv", r.log.csv());
          echo_into_dir(out, cfg);
          log_training("train-joint", r.log);
          return kExitOk;
        };
      });

  add_train("train-onestage", "dense one-stage detector (writes onestage.ckpt, loss.csv)")
      ->callback([&] {
        action = [&] {
          const RunConfig cfg = resolve_config(common);
          const auto samples = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
          auto r = train_onestage(samples, cfg.model, cfg.schedule("onestage"), cfg.seed);
          fs::create_directories(out);
          write_checkpoint(fs::path(out) / "onestage.ckpt", r.model.export_tensors());
          write_text(fs::path(out) / "loss.csv", r.log.csv());
          echo_into_dir(out, cfg);
          log_training("train-onestage", r.log);
          return kExitOk;
        };
      });

  // inference
  std::string checkpoint;
  std::size_t top_n = 0;
  std::string mode = "full";
  auto* prop = app.add_subcommand("propose", "write proposals CSV (image,rank,score,x1,y1,x2,y2)");
  prop->add_option("--checkpoint", checkpoint,
                   "two-stage or RPN checkpoint; config.txt beside it is used when --config "
                   "is absent")
      ->required();
  prop->add_option("--data", data, "manifest or dataset directory")->required();
  prop->add_option("--out", out, "output CSV")->required();
  prop->add_option("--n", top_n, "proposals per image (0: proposals.test.post_nms_top)")
      ->capture_default_str();
  prop->add_option("--mode", mode, "full, no-cls (random unscored) or no-reg (raw anchors)")
      ->capture_default_str()
      ->check(CLI::IsMember({"full", "no-cls", "no-reg"}));
  add_common(prop, common);
  prop->callback([&] {
    action = [&] {
      RunConfig cfg = resolve_config(common, sibling_config(checkpoint));
      const auto samples = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
      const FasterRcnn m = load_two_stage(cfg, checkpoint);
      ProposalParams p = cfg.model.test_proposals;
      if (top_n) p.post_nms_top = top_n;
      p.use_cls = mode != "no-cls";
      p.use_reg = mode != "no-reg";
      auto props = propose_all(m, samples, p, common.threads, cfg.seed);
      for (std::size_t i = 0; i < samples.size(); ++i)
        props[i] = to_original(std::move(props[i]), samples[i].scale);
      write_text(out, proposals_csv(ids_of(samples), props));
      echo_beside(out, cfg);
      std::cout << "wrote proposals for " << samples.size() << " images to " << out << "\n";
      return kExitOk;
    };
  });

  auto* det = app.add_subcommand("detect", "write detections CSV (image,class,score,x1,y1,x2,y2)");
  det->add_option("--checkpoint", checkpoint,
                  "two-stage or one-stage checkpoint, told apart by tensor names; config.txt "
                  "beside it is used when --config is absent")
      ->required();
  det->add_option("--data", data, "manifest or dataset directory")->required();
  det->add_option("--out", out, "output CSV")->required();
  add_common(det, common);
  det->callback([&] {
    action = [&] {
      RunConfig cfg = resolve_config(common, sibling_config(checkpoint));
      const auto samples = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
      const auto tensors = read_checkpoint(checkpoint);
      std::vector<std::vector<ScoredBox>> dets(samples.size());
      Rng unused(0);
      if (is_onestage(tensors)) {
        OneStageModel m = OneStageModel::create(cfg.model, unused);
        m.import_tensors(tensors);
        parallel_for(samples.size(), common.threads,
                     [&](std::size_t i) { dets[i] = detect_image(m, samples[i]); });
      } else {
        FasterRcnn m = FasterRcnn::create(cfg.model, unused);
        m.import_tensors(tensors);
        parallel_for(samples.size(), common.threads,
                     [&](std::size_t i) { dets[i] = detect_image(m, samples[i]); });
      }
      for (std::size_t i = 0; i < samples.size(); ++i)
        dets[i] = to_original(std::move(dets[i]), samples[i].scale);
      write_text(out, detections_csv(ids_of(samples), dets));
      echo_beside(out, cfg);
      std::cout << "wrote detections for " << samples.size() << " images to " << out << "\n";
      return kExitOk;
    };
  });

  // evaluation
  std::string table, manifest;
  std::size_t recall_n = 300;
  double iou_thresh = 0.5;
  auto* er = app.add_subcommand("eval-recall", "recall-to-IoU CSV (tau,recall,n_proposals)");
  er->add_option("--proposals", table, "proposals CSV")->required();
  er->add_option("--manifest", manifest, "ground-truth manifest")->required();
  er->add_option("--n", recall_n, "proposal budget per image")->capture_default_str();
  er->add_option("--out", out, "output CSV (stdout when absent)");
  add_common(er, common);
  er->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve_config(common);
      const auto m = load_manifest(manifest_path(manifest), false);
      BoxTable props = read_proposals_csv(table);
      std::vector<std::vector<ScoredBox>> p;
      std::vector<std::vector<Box>> gt;
      for (const auto& e : m.entries) {
        auto& list = props[e.image];
        std::stable_sort(list.begin(), list.end(),
                         [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
        p.push_back(list);
        gt.emplace_back();
        for (const auto& o : e.objects) gt.back().push_back(o.box);
      }
      const auto curve = recall_curve(p, gt, recall_n, default_iou_grid());
      emit(out, recall_csv(curve), cfg);
      std::cerr << "recall@0.5 " << fmt(curve.at(0.5)) << ", recall@0.7 " << fmt(curve.at(0.7))
                << " over " << curve.num_gt << " boxes\n";
      return kExitOk;
    };
  });

  auto* em = app.add_subcommand("eval-map", "per-class AP and mAP CSV (class,ap)");
  em->add_option("--detections", table, "detections CSV")->required();
  em->add_option("--manifest", manifest, "ground-truth manifest")->required();
  em->add_option("--iou", iou_thresh, "match threshold")->capture_default_str();
  em->add_option("--out", out, "output CSV (stdout when absent)");
  add_common(em, common);
  em->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve_config(common);
      const auto m = load_manifest(manifest_path(manifest), false);
      const BoxTable dets = read_detections_csv(table);
      std::vector<std::vector<ScoredBox>> d;
      std::vector<GroundTruth> gt;
      for (const auto& e : m.entries) {
        const auto it = dets.find(e.image);
        d.push_back(it == dets.end() ? std::vector<ScoredBox>{} : it->second);
        gt.emplace_back();
        for (const auto& o : e.objects) {
          gt.back().boxes.push_back(o.box);
          gt.back().classes.push_back(o.class_id);
        }
      }
      const auto r = mean_ap(d, gt, cfg.model.detector.num_classes, iou_thresh);
      for (std::size_t c = 0; c < r.per_class.size(); ++c)
        if (!r.per_class[c]) std::cerr << "class " << c + 1 << " has no ground truth, excluded\n";
      emit(out, map_csv(r), cfg);
      std::cerr << "mAP@" << iou_thresh << " " << fmt(r.map) << "\n";
      return kExitOk;
    };
  });

  std::size_t warmup = 0, timed = 0;
  auto* be = app.add_subcommand("bench", "stage timing CSV (conv, proposal, region, total)");
  be->add_option("--checkpoint", checkpoint,
                 "two-stage checkpoint; config.txt beside it is used when --config is absent")
      ->required();
  be->add_option("--data", data, "manifest or dataset directory")->required();
  be->add_option("--warmup", warmup, "discarded images (0: bench.warmup)")->capture_default_str();
  be->add_option("--timed", timed, "timed images (0: bench.timed)")->capture_default_str();
  be->add_option("--out", out, "output CSV (stdout when absent)");
  add_common(be, common);
  be->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve_config(common, sibling_config(checkpoint));
      const auto samples = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
      const FasterRcnn m = load_two_stage(cfg, checkpoint);
      const auto r = bench(m, samples, warmup ? warmup : cfg.bench_warmup,
                           timed ? timed : cfg.bench_timed);
      emit(out, timing_csv(r), cfg);
      std::cerr << "conv " << fmt(r.conv_ms) << " ms, proposal " << fmt(r.proposal_ms)
                << " ms, region " << fmt(r.region_ms) << " ms, total " << fmt(r.total_ms)
                << " ms\n";
      return kExitOk;
    };
  });

  // ablations
  std::string train_data, budgets = "50,300,1000", lambdas = "0.1,1,3,10,100";
  auto* ab = app.add_subcommand(
      "ablate", "proposal ablations; writes <out>/ablate_<mode>.csv (variant,n_proposals,tau,recall)");
  ab->add_option("--mode", mode, "no-cls, no-reg, n-sweep, anchors or lambda")
      ->required()
      ->check(CLI::IsMember({"no-cls", "no-reg", "n-sweep", "anchors", "lambda"}));
  ab->add_option("--data", data, "evaluation manifest or dataset directory")->required();
  ab->add_option("--checkpoint", checkpoint, "trained model (no-cls, no-reg, n-sweep)");
  ab->add_option("--train", train_data, "training manifest (anchors, lambda)");
  ab->add_option("--budgets", budgets, "comma-separated proposal budgets")->capture_default_str();
  ab->add_option("--lambdas", lambdas, "comma-separated lambda values (lambda mode)")
      ->capture_default_str();
  ab->add_option("--out", out, "output directory")->required();
  add_common(ab, common);
  ab->callback([&] {
    action = [&] {
      const bool needs_ckpt = mode == "no-cls" || mode == "no-reg" || mode == "n-sweep";
      if (needs_ckpt && checkpoint.empty()) throw ConfigError("--mode " + mode + " needs --checkpoint");
      if (!needs_ckpt && train_data.empty()) throw ConfigError("--mode " + mode + " needs --train");
      const RunConfig cfg =
          resolve_config(common, needs_ckpt ? sibling_config(checkpoint) : fs::path{});
      const auto test = load_samples(load_manifest(manifest_path(data)), cfg.shorter_side);
      const auto gt = gt_of(test);
      std::vector<std::size_t> ns;
      for (double v : parse_list(budgets, "--budgets")) {
        if (v < 1) throw ConfigError("--budgets: values must be >= 1");
        ns.push_back(static_cast<std::size_t>(v));
      }
      const std::size_t max_n = *std::max_element(ns.begin(), ns.end());
      std::string csv = "variant,n_proposals,tau,recall\n";

      auto sweep = [&](const std::string& variant, const FasterRcnn& m, ProposalParams p,
                       bool per_budget) {
        if (per_budget) {
          for (std::size_t n : ns) {
            p.post_nms_top = n;
            csv += recall_rows(variant, propose_all(m, test, p, common.threads, cfg.seed), gt, n);
          }
        } else {
          p.post_nms_top = max_n;
          const auto props = propose_all(m, test, p, common.threads, cfg.seed);
          for (std::size_t n : ns) csv += recall_rows(variant, props, gt, n);
        }
      };

      if (needs_ckpt) {
        const FasterRcnn m = load_two_stage(cfg, checkpoint);
        const ProposalParams base = cfg.model.test_proposals;
        sweep("full", m, base, false);
        ProposalParams alt = base;
        if (mode == "no-cls") {
          alt.use_cls = false;
          sweep("no-cls", m, alt, true);
        } else if (mode == "no-reg") {
          alt.use_reg = false;
          sweep("no-reg", m, alt, false);
        }
      } else {
        const auto train = load_samples(load_manifest(manifest_path(train_data)), cfg.shorter_side);
        std::vector<std::pair<std::string, ModelConfig>> variants;
        if (mode == "anchors") {
          const auto& a = cfg.model.anchors;
          const std::vector<double> mid_scale{a.scales[a.scales.size() / 2]};
          const std::vector<double> square{1.0};
          auto with = [&](const std::string& name, std::vector<double> s, std::vector<double> r) {
            ModelConfig mc = cfg.model;
            mc.anchors.scales = std::move(s);
            mc.anchors.ratios = std::move(r);
            variants.emplace_back(name, mc);
          };
          with("1scale_1ratio", mid_scale, square);
          with("1scale_" + std::to_string(a.ratios.size()) + "ratio", mid_scale, a.ratios);
          with(std::to_string(a.scales.size()) + "scale_1ratio", a.scales, square);
          with(std::to_string(a.scales.size()) + "scale_" + std::to_string(a.ratios.size()) +
                   "ratio",
               a.scales, a.ratios);
        } else {
          for (double l : parse_list(lambdas, "--lambdas")) {
            ModelConfig mc = cfg.model;
            mc.loss.lambda = l;
            char name[32];
            std::snprintf(name, sizeof name, "lambda=%g", l);
            variants.emplace_back(name, mc);
          }
        }
        for (const auto& [name, mc] : variants) {
          Rng init = Rng::stream(cfg.seed, "init");
          TrainState st{FasterRcnn::create(mc, init)};
          log_training(name.c_str(), train_rpn(train, st, cfg.schedule("rpn")));
          sweep(name, st.model, mc.test_proposals, false);
        }
      }
      fs::create_directories(out);
      write_text(fs::path(out) / ("ablate_" + mode + ".csv"), csv);
      echo_into_dir(out, cfg);
      return kExitOk;
    };
  });

  auto* sc = app.add_subcommand("show-config", "print every config key with its effective value");
  add_common(sc, common);
  sc->callback([&] {
    action = [&] {
      std::cout << resolve_config(common).dump();
      return kExitOk;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action ? action() : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace frcnn
