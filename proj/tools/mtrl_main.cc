// SPDX-License-Identifier: Apache-2.0

#include "mtrl/cli.h"

int main(int argc, char *argv[]) { return mtrl::cli_main(argc, argv); }
