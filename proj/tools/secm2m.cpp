// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "secm2m/cli.hpp"

int main(int argc, char** argv) { return secm2m::cli::dispatch(argc, argv, std::cout, std::cerr); }
