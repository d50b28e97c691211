// SPDX-License-Identifier: Apache-2.0
#include "camc/cli.hpp"

int main(int argc, char** argv) { return camc::cli::run_cli(argc, argv); }
