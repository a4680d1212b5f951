#include "adascreen/cli.hpp"

int main(int argc, char** argv) { return adascreen::cli::run(argc, argv); }
