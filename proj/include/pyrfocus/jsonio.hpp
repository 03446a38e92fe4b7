// Copyright 2026 The pyrfocus Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace pyrfocus {

using ojson = nlohmann::ordered_json;

/// Error carrying a message meant for the end user (bad input, missing file).
/// The CLI maps this to exit code 1; anything else is an internal error (2).
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Round a double through a 9-significant-digit decimal representation.
/// Every float placed in JSON output goes through this, which keeps dumps
/// byte-identical across runs and platforms.
inline double sig9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::stod(buf);
}

inline ojson load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open " + path);
  ojson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw UserError(path + ": " + e.what());
  }
  return j;
}

inline void save_json(const std::string& path, const ojson& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace pyrfocus
