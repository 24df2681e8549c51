#include "multipass/cli.hpp"

int main(int argc, char** argv) { return multipass::cli::run_main(argc, argv); }
