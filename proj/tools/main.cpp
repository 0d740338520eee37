#include "cli.hpp"

int main(int argc, char** argv) { return gall::cli_main(argc, argv); }
