#include "mapsed/cli.hpp"

int main(int argc, char** argv) { return mapsed::cli::run(argc, argv); }
