#include <iostream>
#include <string>
#include <vector>

#include "specfid/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return specfid::run_cli(args, std::cout, std::cerr);
}
