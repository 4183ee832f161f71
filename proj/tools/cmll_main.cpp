#include "cmll/cli.hpp"

int main(int argc, char** argv) { return cmll::cli::run(argc, argv); }
