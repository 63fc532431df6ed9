/*
Copyright 2026 The Hetplan Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#ifndef HETPLAN_UTIL_HPP_
#define HETPLAN_UTIL_HPP_

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "hetplan/types.hpp"

// Invariant check that survives in release builds; failures surface as
// InternalError (CLI exit code 5) rather than UB.
#define HP_CHECK(cond, msg)                                              \
  do {                                                                   \
    if (!(cond)) {                                                       \
      throw ::hetplan::InternalError(std::string("invariant violated: ") \
                                     + (msg) + " [" #cond "]");          \
    }                                                                    \
  } while (0)

namespace hetplan {

constexpr uint64_t kFnvOffset = 14695981039346656037ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::string to_hex64(uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline uint64_t parse_hex64(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

// Shortest decimal form that round-trips a double (used for text tables).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v, const std::string& sep) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << sep;
    os << v[i];
  }
  return os.str();
}

}  // namespace hetplan

#endif  // HETPLAN_UTIL_HPP_
