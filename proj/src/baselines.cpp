#include "cfgain/baselines.hpp"

#include <cmath>

namespace cfgain::base {

namespace {

constexpr double kConditionLimit = 1e12;

std::vector<double> eval_dynamics(const prop::ScenarioSpec& s, std::vector<double>& values) {
    std::vector<double> f(s.dynamics.size());
    for (std::size_t i = 0; i < s.dynamics.size(); ++i) f[i] = s.dynamics[i].eval(values);
    return f;
}

} // namespace

LinearizedStep linearize(const prop::ScenarioSpec& s, int k) {
    const auto ku = static_cast<std::size_t>(k);
    std::vector<double> values(static_cast<std::size_t>(s.symbols.size()), 0.0);
    s.assign(values, s.nominalStates[ku], s.nominalControls[ku], s.noise_means());

    LinearizedStep step;
    step.A.resize(s.nx(), s.nx());
    step.B.resize(s.nx(), s.nu());

    auto column = [&](int varId, double at) {
        const double h = 1e-6 * (1.0 + std::abs(at));
        const auto slot = static_cast<std::size_t>(varId);
        values[slot] = at + h;
        const auto up = eval_dynamics(s, values);
        values[slot] = at - h;
        const auto down = eval_dynamics(s, values);
        values[slot] = at;
        Eigen::VectorXd col(s.nx());
        for (int i = 0; i < s.nx(); ++i) col(i) = (up[static_cast<std::size_t>(i)] -
                                                   down[static_cast<std::size_t>(i)]) /
                                                  (2.0 * h);
        return col;
    };

    for (int j = 0; j < s.nx(); ++j)
        step.A.col(j) = column(s.states[static_cast<std::size_t>(j)].id,
                               s.nominalStates[ku][static_cast<std::size_t>(j)]);
    for (int j = 0; j < s.nu(); ++j)
        step.B.col(j) = column(s.controls[static_cast<std::size_t>(j)].id,
                               s.nominalControls[ku][static_cast<std::size_t>(j)]);
    return step;
}

LqrSchedule lqr_schedule(const std::vector<LinearizedStep>& steps, const Eigen::MatrixXd& Q,
                         const Eigen::MatrixXd& R, const Eigen::MatrixXd& Qf) {
    const Eigen::Index nx = Q.rows();
    const Eigen::Index nu = R.rows();
    if (Q.cols() != nx || R.cols() != nu || Qf.rows() != nx || Qf.cols() != nx)
        throw InconsistentDimensions("lqr_schedule: weight dimensions");
    for (const auto& st : steps)
        if (st.A.rows() != nx || st.A.cols() != nx || st.B.rows() != nx || st.B.cols() != nu)
            throw InconsistentDimensions("lqr_schedule: linearization dimensions");

    const int T = static_cast<int>(steps.size());
    LqrSchedule sched;
    sched.K.resize(static_cast<std::size_t>(T));
    sched.P.resize(static_cast<std::size_t>(T) + 1);
    sched.P.back() = Qf;

    for (int k = T - 1; k >= 0; --k) {
        const auto ku = static_cast<std::size_t>(k);
        const auto& A = steps[ku].A;
        const auto& B = steps[ku].B;
        const Eigen::MatrixXd& Pnext = sched.P[ku + 1];
        const Eigen::MatrixXd M = R + B.transpose() * Pnext * B;

        Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        const double smax = sv(0);
        const double smin = sv(sv.size() - 1);
        if (smin <= 0.0 || smax / smin > kConditionLimit)
            throw SingularInnovation("lqr_schedule: innovation matrix ill-conditioned", k);

        sched.K[ku] = svd.solve(B.transpose() * Pnext * A);
        Eigen::MatrixXd P =
            Q + A.transpose() * Pnext * A - A.transpose() * Pnext * B * sched.K[ku];
        sched.P[ku] = 0.5 * (P + P.transpose());
    }
    return sched;
}

prop::GainSchedule lqr_gain_schedule(const prop::ScenarioSpec& s) {
    std::vector<LinearizedStep> steps;
    steps.reserve(static_cast<std::size_t>(s.horizon));
    for (int k = 0; k < s.horizon; ++k) steps.push_back(linearize(s, k));

    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(s.nx(), s.nx());
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(s.nu(), s.nu());
    const auto lqr = lqr_schedule(steps, Q, R, Q);

    prop::GainSchedule schedule;
    schedule.gains.reserve(lqr.K.size());
    for (const auto& K : lqr.K) schedule.gains.push_back(-K);
    schedule.extraCoeffs.assign(static_cast<std::size_t>(s.horizon), {});
    return schedule;
}

prop::GainSchedule plain_schedule(const prop::ScenarioSpec& s) {
    prop::GainSchedule schedule;
    schedule.gains.assign(static_cast<std::size_t>(s.horizon),
                          Eigen::MatrixXd::Zero(s.nu(), s.nx()));
    schedule.extraCoeffs.assign(static_cast<std::size_t>(s.horizon), {});
    return schedule;
}

} // namespace cfgain::base
