#include "rotot/cli.hpp"

int main(int argc, char** argv) { return rotot::run_cli(argc, argv); }
