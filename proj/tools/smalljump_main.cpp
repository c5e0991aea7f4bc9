#include "smalljump/cli.hpp"

int main(int argc, char** argv) { return smalljump::cli::run(argc, argv); }
