#include <iostream>
#include <string>
#include <vector>

#include "cvenhance/cli/app.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cvenhance::cli::run_cli(std::move(args), std::cout, std::cerr);
}
