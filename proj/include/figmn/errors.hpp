#pragma once

#include <stdexcept>

namespace figmn {

// Cholesky pivot fell below tolerance; the matrix is not usable as a
// covariance/precision block. Callers decide recovery.
struct NotPositiveDefinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A density, determinant or distance became non-finite and no local
// safeguard applied.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Inference or posterior query on a mixture with zero components.
struct EmptyModel : std::logic_error {
    using std::logic_error::logic_error;
};

// step() called on an environment whose episode already ended.
struct StepAfterEnd : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace figmn
