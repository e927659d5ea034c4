#include "scavit/cli.hpp"

int main(int argc, char** argv) { return scavit::cli_main(argc, argv); }
