// Copyright 2026 The AMLNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AMLNET_TOOLS_CLI_HPP_
#define AMLNET_TOOLS_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace amlnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // config, contract and load failures
inline constexpr int kExitNumeric = 3;

// args[0] is the program name. Progress goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amlnet::cli

#endif  // AMLNET_TOOLS_CLI_HPP_
