#include "dpc/cli.hpp"

int main(int argc, char** argv) { return dpc::cli::run(argc, argv); }
