#include "cli.hpp"

int main(int argc, char** argv) { return triplet_embed::cli::run(argc, argv); }
