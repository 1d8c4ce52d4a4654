/* Copyright 2026 The FMDConv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef FMDCONV_TOOLS_CLI_HPP_
#define FMDCONV_TOOLS_CLI_HPP_

#include <iosfwd>

namespace fmdconv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the fmdconv tool; writes to out/err instead of the process
/// streams so tests can drive it in-process.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fmdconv::cli

#endif  // FMDCONV_TOOLS_CLI_HPP_
