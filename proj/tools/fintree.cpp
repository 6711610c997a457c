#include <iostream>
#include <string>
#include <vector>

#include "fintree/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return fintree::dispatch(args, std::cout, std::cerr);
}
