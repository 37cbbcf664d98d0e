#include "drbse/cli.hpp"

int main(int argc, char** argv) { return drbse::cli_main(argc, argv); }
