#include "chanform/cli.hpp"

int main(int argc, char** argv) { return chanform::cli::dispatch(argc, argv); }
