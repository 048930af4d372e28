#include "homlab/cli.hpp"

int main(int argc, char** argv) { return homlab::cli_main(argc, argv); }
