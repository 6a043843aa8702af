// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iostream>

namespace pucknet {

inline int cli_main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::cerr << "pucknet: no subcommands wired up yet\n";
    return 2;
}

} // namespace pucknet
