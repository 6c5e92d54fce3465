#include "neumat/cli.hpp"

int main(int argc, char** argv) { return neumat::run_cli(argc, argv); }
