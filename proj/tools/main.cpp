#include "frcnn/cli.hpp"

int main(int argc, char** argv) { return frcnn::run(argc, argv); }
