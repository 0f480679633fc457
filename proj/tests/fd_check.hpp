#pragma once

// Central finite-difference gradient oracle for tape-built objectives.
// Independent of the reverse pass: re-evaluates the forward function at
// perturbed leaf values.

#include "paml/tape.hpp"

#include <cmath>
#include <functional>

namespace paml::testing {

using diff::Tape;
using diff::Var;

struct FdReport {
    double max_rel_error = 0.0;
    Index worst_row = -1, worst_col = -1;
};

/// Central differences of tape output w.r.t. one leaf, compared against the
/// reverse-mode gradient. Relative error uses max(1, |fd|) per entry.
inline FdReport fd_check_leaf(Tape& tape, Var out, Var leaf, double step = 1e-5) {
    tape.evaluate(out);
    tape.backward(out);
    const Matrix grad = tape.gradient(leaf);
    const Matrix base = tape.value(leaf);
    FdReport rep;
    for (Index i = 0; i < base.rows(); ++i) {
        for (Index j = 0; j < base.cols(); ++j) {
            Matrix pert = base;
            pert(i, j) = base(i, j) + step;
            tape.set_value(leaf, pert);
            const double up = tape.evaluate(out);
            pert(i, j) = base(i, j) - step;
            tape.set_value(leaf, pert);
            const double down = tape.evaluate(out);
            const double fd = (up - down) / (2.0 * step);
            const double rel = std::abs(fd - grad(i, j)) / std::max(1.0, std::abs(fd));
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_row = i;
                rep.worst_col = j;
            }
        }
    }
    tape.set_value(leaf, base);
    tape.evaluate(out);
    return rep;
}

}  // namespace paml::testing
