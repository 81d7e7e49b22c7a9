#include "synood/cli.hpp"

int main(int argc, char** argv) { return synood::cli_main(argc, argv); }
