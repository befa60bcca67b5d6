#include "gibbsgof/cli.hpp"

int main(int argc, char** argv) { return gibbsgof::cli::run(argc, argv); }
