#include "sbn/harness.hpp"

int main(int argc, char** argv) { return sbn::cli_main(argc, argv); }
