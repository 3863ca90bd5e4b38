#include "hydrocast/cli.hpp"

int main(int argc, char** argv) { return hydrocast::run_cli(argc, argv); }
