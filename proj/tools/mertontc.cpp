#include "mertontc/cli.hpp"

int main(int argc, char** argv) { return mertontc::cli::main(argc, argv); }
