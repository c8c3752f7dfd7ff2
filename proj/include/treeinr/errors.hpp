// Copyright 2026 The treeinr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TREEINR_ERRORS_HPP
#define TREEINR_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace treeinr {

/// Bad configuration: non-divisible dims, infeasible budgets, invalid options.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested parameter budget cannot afford a width-1 network.
/// `minimal_budget` is the smallest total that would succeed.
class InfeasibleBudgetError : public ConfigError {
 public:
  InfeasibleBudgetError(const std::string& what, std::size_t minimal_budget,
                        double max_feasible_ratio = 0.0)
      : ConfigError(what),
        minimal_budget_(minimal_budget),
        max_feasible_ratio_(max_feasible_ratio) {}

  std::size_t minimal_budget() const noexcept { return minimal_budget_; }
  /// Only meaningful when raised by the ratio planner; 0 otherwise.
  double max_feasible_ratio() const noexcept { return max_feasible_ratio_; }

 private:
  std::size_t minimal_budget_;
  double max_feasible_ratio_;
};

/// Raw input that cannot be a volume (size mismatch, NaN samples).
class MalformedInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind { BadMagic, BadVersion, CrcMismatch, Truncated, BadHeader };

inline const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::BadMagic: return "bad-magic";
    case FormatErrorKind::BadVersion: return "bad-version";
    case FormatErrorKind::CrcMismatch: return "crc-mismatch";
    case FormatErrorKind::Truncated: return "truncated";
    case FormatErrorKind::BadHeader: return "bad-header";
  }
  return "unknown";
}

/// A .tinc or .tvol file failed to parse.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

/// Training produced a non-finite loss.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace treeinr

#endif  // TREEINR_ERRORS_HPP
