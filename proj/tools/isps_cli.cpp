// SPDX-License-Identifier: Apache-2.0
#include "isps/cli.hpp"

int main(int argc, char** argv) { return isps::cli::run_cli(argc, argv); }
