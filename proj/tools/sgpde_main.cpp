#include <sgpde/cli.hpp>

int main(int argc, char** argv) { return sgpde::run_cli(argc, argv); }
