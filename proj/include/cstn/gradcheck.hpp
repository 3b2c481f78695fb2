#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cstn/tensor.hpp"

namespace cstn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // "leaf 3 [17]"
    int64_t checks = 0;

    bool ok(double tol = 1e-3) const { return max_rel_err < tol; }
};

// Compares tape gradients against central finite differences.
//
// fn builds a fresh graph from the leaves and returns the output tensor (any
// shape). The harness contracts the output with fixed random coefficients to a
// scalar functional, runs backward once, then perturbs leaf elements one at a
// time. The perturbation step is re-measured after float rounding, and the
// functional is accumulated in double so the quotient stays meaningful at
// eps = 1e-3. Precise gemm is forced for the duration.
//
// max_per_leaf = 0 checks every element, otherwise a random subsample.
GradCheckReport gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          std::vector<Tensor> leaves, double eps = 1e-3,
                          int64_t max_per_leaf = 0, uint64_t seed = 0x5eed);

struct OpCheck {
    std::string op;
    GradCheckReport report;
};

// Runs the finite-difference check over every differentiable operation at
// small sizes. Shared by the unit tests, the gradcheck CLI command, and the
// acceptance suite.
std::vector<OpCheck> gradcheck_all_ops(uint64_t seed = 1234);

}  // namespace cstn
