#include "profgan/cli.hpp"

int main(int argc, char** argv) { return profgan::cli::run(argc, argv); }
