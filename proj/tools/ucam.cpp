// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "ucam/cli.hpp"

int main(int argc, char** argv) {
  return ucam::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
