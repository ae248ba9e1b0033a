// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/cli.hpp"

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return h1bkv::cli::run_cli(std::move(args), std::cout, std::cerr);
}
