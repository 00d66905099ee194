#include "cfgain/optimize.hpp"

#include <cmath>

#include "cfgain/rng.hpp"

namespace cfgain::opt {

namespace {

constexpr int kMaxIterations = 500;
constexpr int kMaxBacktracks = 60;
constexpr double kArmijo = 1e-4;
constexpr double kConvergenceTol = 1e-8;
constexpr double kTieTol = 1e-12;

double determinant(const Eigen::MatrixXd& c) {
    switch (c.rows()) {
    case 1:
        return c(0, 0);
    case 2:
        return c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    case 3:
        return c(0, 0) * (c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1)) -
               c(0, 1) * (c(1, 0) * c(2, 2) - c(1, 2) * c(2, 0)) +
               c(0, 2) * (c(1, 0) * c(2, 1) - c(1, 1) * c(2, 0));
    default:
        return Eigen::PartialPivLU<Eigen::MatrixXd>(c).determinant();
    }
}

Eigen::VectorXd project(const std::vector<prop::GainBounds>& box, Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto& b = box[static_cast<std::size_t>(i)];
        v(i) = std::min(std::max(v(i), b.lower), b.upper);
    }
    return v;
}

double eval(const prop::MomentMap& map, const Eigen::VectorXd& theta, double w1, double w2) {
    return objective(map, {theta.data(), static_cast<std::size_t>(theta.size())}, w1, w2);
}

Eigen::VectorXd fd_gradient(const prop::MomentMap& map, const Eigen::VectorXd& theta, double w1,
                            double w2) {
    Eigen::VectorXd grad(theta.size());
    Eigen::VectorXd probe = theta;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double h = 1e-6 * (1.0 + std::abs(theta(i)));
        probe(i) = theta(i) + h;
        const double up = eval(map, probe, w1, w2);
        probe(i) = theta(i) - h;
        const double down = eval(map, probe, w1, w2);
        probe(i) = theta(i);
        grad(i) = (up - down) / (2.0 * h);
    }
    return grad;
}

StartRecord descend(const prop::MomentMap& map, const std::vector<prop::GainBounds>& box,
                    double w1, double w2, Eigen::VectorXd start) {
    StartRecord rec;
    rec.start = start;
    rec.converged = false;
    rec.iterations = 0;

    const Eigen::Index n = start.size();
    Eigen::VectorXd theta = project(box, std::move(start));
    double J = eval(map, theta, w1, w2);
    Eigen::VectorXd grad = fd_gradient(map, theta, w1, w2);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);

    for (int iter = 0; iter < kMaxIterations; ++iter) {
        const Eigen::VectorXd pg = theta - project(box, theta - grad);
        if (pg.lpNorm<Eigen::Infinity>() < kConvergenceTol) {
            rec.converged = true;
            break;
        }
        rec.iterations = iter + 1;

        Eigen::VectorXd d = -H * grad;
        if (grad.dot(d) > -1e-12 * grad.norm() * d.norm()) {
            H.setIdentity();
            d = -grad;
        }

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd cand;
        double Jc = J;
        for (int bt = 0; bt < kMaxBacktracks; ++bt) {
            cand = project(box, theta + t * d);
            const Eigen::VectorXd step = cand - theta;
            if (step.isZero(0.0)) break;
            Jc = eval(map, cand, w1, w2);
            if (Jc <= J + kArmijo * grad.dot(step)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // No decrease representable along this direction; stationary
            // to numerical precision.
            rec.converged = true;
            break;
        }

        Eigen::VectorXd gradNew = fd_gradient(map, cand, w1, w2);
        const Eigen::VectorXd s = cand - theta;
        const Eigen::VectorXd y = gradNew - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::VectorXd Hy = H * y;
            H -= rho * (Hy * s.transpose() + s * Hy.transpose());
            H += rho * rho * (y.dot(Hy)) * (s * s.transpose());
            H += rho * (s * s.transpose());
        }
        theta = std::move(cand);
        J = Jc;
        grad = std::move(gradNew);
    }

    rec.theta = std::move(theta);
    rec.objective = J;
    return rec;
}

} // namespace

double objective(const prop::MomentMap& map, std::span<const double> theta, double w1,
                 double w2) {
    const auto state = prop::eval_moments(map, theta);
    const Eigen::MatrixXd c = state.covariance();
    return w1 * c.trace() + w2 * determinant(c);
}

OptimizationResult optimize_gains(const prop::MomentMap& map,
                                  const std::vector<prop::GainBounds>& box, double w1, double w2,
                                  int starts, std::uint64_t seed) {
    if (starts < 1) throw Error("optimize_gains: need at least one start");
    const auto n = static_cast<Eigen::Index>(box.size());
    if (map.parameterIds().size() != box.size())
        throw InconsistentDimensions("optimize_gains: box size does not match parameter count");

    std::vector<Eigen::VectorXd> initial;
    initial.reserve(static_cast<std::size_t>(starts));
    initial.push_back(project(box, Eigen::VectorXd::Zero(n)));
    RngStream rng(seed);
    for (int i = 1; i < starts; ++i) {
        Eigen::VectorXd v(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& b = box[static_cast<std::size_t>(j)];
            v(j) = rng.uniform(b.lower, b.upper);
        }
        initial.push_back(std::move(v));
    }

    OptimizationResult result;
    result.records.reserve(initial.size());
    for (auto& start : initial)
        result.records.push_back(descend(map, box, w1, w2, std::move(start)));

    std::size_t best = 0;
    for (std::size_t i = 1; i < result.records.size(); ++i) {
        const auto& cur = result.records[i];
        const auto& inc = result.records[best];
        if (cur.objective < inc.objective - kTieTol)
            best = i;
        else if (std::abs(cur.objective - inc.objective) <= kTieTol &&
                 cur.theta.norm() < inc.theta.norm())
            best = i;
    }
    result.theta = result.records[best].theta;
    result.objective = result.records[best].objective;
    result.converged = result.records[best].converged;
    result.bestStart = static_cast<int>(best);
    return result;
}

} // namespace cfgain::opt
