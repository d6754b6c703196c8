#include <iostream>

#include "evgs/cli_app.hpp"

int main(int argc, char** argv) { return evgs::run_cli(argc, argv, std::cout, std::cerr); }
