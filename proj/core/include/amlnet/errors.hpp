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

#ifndef AMLNET_ERRORS_HPP_
#define AMLNET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace amlnet {

// Base of every error thrown by the library. The CLI maps NumericError to
// exit code 3 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or index contract violated by a caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, long row = -1)
      : Error(row >= 0 ? what + " (row " + std::to_string(row) + ")" : what),
        row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class SizingError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class DegenerateSeriesError : public Error {
 public:
  DegenerateSeriesError(const std::string& what, int series)
      : Error(what), series_(series) {}
  int series() const { return series_; }

 private:
  int series_;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace amlnet

#endif  // AMLNET_ERRORS_HPP_
