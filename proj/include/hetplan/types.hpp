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
#ifndef HETPLAN_TYPES_HPP_
#define HETPLAN_TYPES_HPP_

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hetplan {

// Error taxonomy. Each class maps to a distinct process exit code in the CLI
// (see c_api.h): parse=2, infeasible=3, unrecoverable=4, internal=5.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

class UnrecoverableError : public std::runtime_error {
 public:
  explicit UnrecoverableError(const std::string& msg) : std::runtime_error(msg) {}
};

class InternalError : public std::runtime_error {
 public:
  explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgumentError : public std::runtime_error {
 public:
  explicit InvalidArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

// A physical GPU: node plus 0-based rank within the node.
struct DeviceId {
  int node_id = 0;
  int local_rank = 0;

  auto operator<=>(const DeviceId&) const = default;

  std::string str() const {
    return "n" + std::to_string(node_id) + "r" + std::to_string(local_rank);
  }
};

}  // namespace hetplan

#endif  // HETPLAN_TYPES_HPP_
