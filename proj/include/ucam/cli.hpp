// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef UCAM_CLI_HPP_
#define UCAM_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace ucam {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `ucam` tool. `args` excludes the program name.
/// Config precedence: defaults < --config file < UCAM_SEED < flags.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ucam

#endif  // UCAM_CLI_HPP_
