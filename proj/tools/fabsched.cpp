#include <iostream>

#include "fabsched/cli.hpp"

int main(int argc, char** argv) {
    return fabsched::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
