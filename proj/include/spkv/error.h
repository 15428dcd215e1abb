// include/spkv/error.h

// Copyright 2026  spkv authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKV_ERROR_H_
#define SPKV_ERROR_H_

#include <stdexcept>
#include <string>

namespace spkv {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

// Bad arguments, configuration keys or preconditions on call parameters.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string &what)
      : Error(ExitCode::kUsage, what) {}
};

// Malformed or inconsistent data (files, labels, ids, dimensions).
class DataError : public Error {
 public:
  explicit DataError(const std::string &what) : Error(ExitCode::kData, what) {}
};

// Numerical failure: zero variance, singular matrices, non-finite values.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string &what)
      : Error(ExitCode::kNumerical, what) {}
};

}  // namespace spkv

#endif  // SPKV_ERROR_H_
