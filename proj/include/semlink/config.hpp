// SPDX-License-Identifier: Apache-2.0
//
// semlink: semantic image transmission simulator for MIMO-OFDM links
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef SEMLINK_CONFIG_HPP
#define SEMLINK_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace semlink::cli {

// key = value configuration with '#' comments and `include <path>` lines.
// Later assignments win; environment variables prefixed SEMLINK_ override
// file values (SEMLINK_SNR_LIST maps to key "snr.list").
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text,
                            const std::string& base_dir = ".");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::string str(const std::string& key, const std::string& def) const;
  double number(const std::string& key, double def) const;
  int integer(const std::string& key, int def) const;
  std::vector<double> list(const std::string& key) const;  // comma separated

  void apply_env(const char* prefix = "SEMLINK_");

  // sorted "key = value" lines; stable across runs
  std::string canonical() const;
  uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace semlink::cli

#endif
