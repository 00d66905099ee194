#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cfgain/propagate.hpp"

// Gain synthesis for one time step: minimize
//
//   J(theta) = w1 * tr(C(theta)) + w2 * det(C(theta))
//
// over the gain box, where C comes from the moment map. The solver is a
// projected quasi-Newton descent with central finite-difference gradients
// (step 1e-6*(1+|theta_i|)), backtracking line search (factor 0.5,
// sufficient decrease 1e-4), iteration cap 500, and convergence when the
// projected-gradient infinity norm drops below 1e-8. Multi-start: the
// first start is 0 projected into the box, the rest are uniform in the
// box from the seed; ties within 1e-12 in J prefer the smaller-norm
// theta, then the lower start index.

namespace cfgain::opt {

double objective(const prop::MomentMap& map, std::span<const double> theta, double w1, double w2);

struct StartRecord {
    Eigen::VectorXd start;
    Eigen::VectorXd theta;
    double objective;
    bool converged;
    int iterations;
};

struct OptimizationResult {
    Eigen::VectorXd theta;
    double objective;
    bool converged;
    int bestStart = 0;
    std::vector<StartRecord> records;
};

OptimizationResult optimize_gains(const prop::MomentMap& map,
                                  const std::vector<prop::GainBounds>& box, double w1, double w2,
                                  int starts, std::uint64_t seed);

} // namespace cfgain::opt
