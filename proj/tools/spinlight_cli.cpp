#include "spinlight/cli.hpp"

int main(int argc, char** argv) { return spinlight::run_cli(argc, argv); }
