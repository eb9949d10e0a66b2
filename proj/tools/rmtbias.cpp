// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "rmtbias/cli_app.hpp"

int main(int argc, char** argv) {
    return rmtbias::run_cli(argc, argv, std::cout, std::cerr);
}
