#include "gyrocomp/cli.hpp"

int main(int argc, char** argv) { return gyrocomp::cli::run(argc, argv); }
