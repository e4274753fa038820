#include "brainet/cli.hpp"

int main(int argc, char** argv) { return brainet::cli::run(argc, argv); }
