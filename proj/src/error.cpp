// Copyright 2026 The idealmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "idealmix/error.hpp"

namespace idealmix {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kNumericalFailure: return "numerical-failure";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kReferenceOverlap: return "reference-overlap";
    case ErrorKind::kOracleInvalid: return "oracle-invalid";
    case ErrorKind::kSizeGuard: return "size-guard";
  }
  return "unknown";
}

}  // namespace idealmix
