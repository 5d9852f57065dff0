#include "seqr/cli.hpp"

int main(int argc, char** argv) { return seqr::cli::run(argc, argv); }
