// SPDX-License-Identifier: Apache-2.0
#include "pucknet/cli.hpp"

int main(int argc, char** argv) { return pucknet::cli_main(argc, argv); }
