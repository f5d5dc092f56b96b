// Copyright (c) the qlic project authors. All rights reserved.
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

#ifndef QLIC_ERRORS_HPP_
#define QLIC_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qlic {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed serialized data. Carries the byte offset of the failure so
// callers can report where a file or stream went bad.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t at)
      : Error(what + " (at byte " + std::to_string(at) + ")"), offset(at) {}
  std::size_t offset;
};

// Tensor / layer geometry mismatch (channel counts, dims, shifts).
struct ShapeError : Error {
  using Error::Error;
};

// Filesystem-level failure (open, read, write).
struct IoError : Error {
  using Error::Error;
};

}  // namespace qlic

#endif  // QLIC_ERRORS_HPP_
