// Copyright 2026 The sbo Authors. All rights reserved.
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

#ifndef SBO_ERRORS_HPP_
#define SBO_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sbo {

// Bad input to a pure function (shape mismatch, out-of-domain parameter).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called on an object whose state does not allow it.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Factorization or solve failed.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// Vote arrived out of order for the current round or phase.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Same agent voted twice in one phase.
class ConflictError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NotFoundError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Config validation failure with one message per offending field.
class ValidationError : public ArgumentError {
 public:
  explicit ValidationError(std::vector<std::pair<std::string, std::string>> fields)
      : ArgumentError(Summarize(fields)), fields_(std::move(fields)) {}
  const std::vector<std::pair<std::string, std::string>>& fields() const { return fields_; }

 private:
  static std::string Summarize(const std::vector<std::pair<std::string, std::string>>& f) {
    std::string s = "invalid config:";
    for (const auto& [field, msg] : f) s += " " + field + " (" + msg + ");";
    return s;
  }
  std::vector<std::pair<std::string, std::string>> fields_;
};

}  // namespace sbo

#endif  // SBO_ERRORS_HPP_
