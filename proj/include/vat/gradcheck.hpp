#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vat/tape.hpp"

namespace vat {

// Builds a scalar-valued graph from one input leaf. Called repeatedly on
// fresh tapes, so it must be a pure function of the input value.
using ScalarGraphBuilder = std::function<NodeId(Tape&, NodeId)>;

// Central-finite-difference check of the tape gradient of build() w.r.t. x.
// Returns the max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const ScalarGraphBuilder& build, const Tensor& x, double eps = 1e-5);

struct GradCheckCase {
    std::string name;
    // Runs `instances` randomized checks and returns the worst relative error.
    std::function<double(std::uint64_t seed, int instances)> run;
};

// The named check for every differentiable op plus composite losses and the
// full training loss on a small model. Shared by tests, the CLI `gradcheck`
// subcommand, and the acceptance suite.
std::vector<GradCheckCase> gradcheck_suite();

}  // namespace vat
