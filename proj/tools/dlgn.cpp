#include "dlgn/cli.hpp"

int main(int argc, char** argv) { return dlgn::run_cli(argc, argv); }
