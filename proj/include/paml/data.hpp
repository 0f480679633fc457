#pragma once

#include "paml/common.hpp"

namespace paml {

/// One task's raw observations plus its descriptor. The descriptor is a
/// low-dimensional vector in the observed/partial/noisy regimes and a
/// flattened grayscale image in the pixel regime.
struct TaskDataset {
    Matrix inputs;      // M x D_in (state and control, raw units)
    Matrix targets;     // M x D_out (finite differences, raw units)
    Vector descriptor;  // dim(psi); empty in pixel mode
    Vector image;       // flattened row-major pixels in [0,1]; empty otherwise

    Index size() const { return inputs.rows(); }
};

}  // namespace paml
