// Copyright 2026 The fedval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef FEDVAL_UTIL_ERRORS_H_
#define FEDVAL_UTIL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fedval {

// Root of every error thrown by the library. The CLI maps ConfigError to exit
// code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor or model shape contract violated.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced or supplied.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

// A release would exceed the configured privacy budget cap.
class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

// Operation requires a property the model does not have (e.g. a second
// derivative through ReLU).
class UnsupportedOpError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedval

#endif  // FEDVAL_UTIL_ERRORS_H_
