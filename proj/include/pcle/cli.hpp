/*
 * pcle-toolkit
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCLE_CLI_HPP
#define PCLE_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace pcle::cli {

/**
 * Runs one toolkit command. `args` excludes the program name. Every command
 * except `serve` and `replay` writes `run.json` into its output directory.
 * Returns 0 on success; errors are reported on `err` without stack traces.
 */
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace pcle::cli

#endif // PCLE_CLI_HPP
