#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cfgain/propagate.hpp"

// Comparison controllers: the zero-feedback schedule ("plain") and a
// finite-horizon time-varying LQR on the dynamics linearized along the
// nominal trajectory with noises held at their means.

namespace cfgain::base {

struct LinearizedStep {
    Eigen::MatrixXd A; // d f / d x at (x*(k), u*(k), E[w])
    Eigen::MatrixXd B; // d f / d u
};

LinearizedStep linearize(const prop::ScenarioSpec& s, int k);

struct LqrSchedule {
    std::vector<Eigen::MatrixXd> K; // [T] n_u x n_x
    std::vector<Eigen::MatrixXd> P; // [T+1] n_x x n_x cost-to-go
};

// Backward Riccati recursion with P(T) = Qf,
//   K(k) = (R + B'P(k+1)B)^{-1} B'P(k+1)A
//   P(k) = Q + A'P(k+1)A - A'P(k+1)B K(k).
// The feedback convention is u(k) = -K(k)(x - x*(k)) + u*(k).
LqrSchedule lqr_schedule(const std::vector<LinearizedStep>& steps, const Eigen::MatrixXd& Q,
                         const Eigen::MatrixXd& R, const Eigen::MatrixXd& Qf);

// LQR gains for a scenario with Q = R = Qf = I, expressed in the shared
// schedule convention (G(k) = -K(k)).
prop::GainSchedule lqr_gain_schedule(const prop::ScenarioSpec& s);

prop::GainSchedule plain_schedule(const prop::ScenarioSpec& s);

} // namespace cfgain::base
