#include "salsum/cli.hpp"

int main(int argc, char** argv) { return salsum::run_cli(argc, argv); }
