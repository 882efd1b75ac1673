#include "pnp/cli.hpp"

int main(int argc, char** argv) { return pnp::cli::main_entry(argc, argv); }
