#include "heatflow/cli.hpp"

int main(int argc, char** argv) { return heatflow::run_cli(argc, argv); }
