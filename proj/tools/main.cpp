// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/cli.hpp"

int main(int argc, char **argv) { return pseudobound::run_cli(argc, argv); }
