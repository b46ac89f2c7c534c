// SPDX-License-Identifier: Apache-2.0
//
// The knowmix command line, callable in-process.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace knowmix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;

/// Environment variable naming the output directory used when --out is absent.
inline constexpr const char* kOutDirEnv = "KNOWMIX_OUT_DIR";

/// Runs one invocation. \p args excludes the program name. Results go to
/// files or \p out, diagnostics to \p err. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace knowmix::cli
