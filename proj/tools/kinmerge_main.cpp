// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "kinmerge/cli.hpp"

int main(int argc, char** argv) { return kinmerge::cli_main(argc, argv, std::cout, std::cerr); }
