#include "zigam/cli.hpp"

int main(int argc, char** argv) { return zigam::run_cli(argc, argv); }
