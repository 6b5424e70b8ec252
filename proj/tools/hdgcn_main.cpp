#include "hdgcn/cli/cli.hpp"

int main(int argc, char** argv) { return hdgcn::cli::run(argc, argv); }
