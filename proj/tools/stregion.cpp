#include "stregion/cli.hpp"

int main(int argc, char** argv) { return stregion::cli_main(argc, argv); }
