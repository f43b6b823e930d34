#include <portmon/cli.hpp>

int main(int argc, char** argv) { return portmon::cli::run_cli(argc, argv); }
