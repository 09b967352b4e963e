// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace beamkit {

// Numeric failure: non-convergence, singular pivot, degenerate gain.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File could not be read, written or parsed.
struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad command-level request (unknown filter name, empty filter list).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace beamkit
