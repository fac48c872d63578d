#include "hetpref/cli.hpp"

int main(int argc, char** argv) { return hetpref::run_cli(argc, argv); }
