#include "cutcop/harness.hpp"

int main(int argc, char** argv) { return cutcop::cli_main(argc, argv); }
