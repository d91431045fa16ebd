#pragma once

#include <Eigen/Dense>

#include <functional>

namespace envkit {

struct GoldenResult {
    double x = 0.0;
    double f = 0.0;
};

/// Golden-section minimization of a unimodal f on [lo, hi]; f may return +inf.
GoldenResult golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-10,
                            int max_iter = 200);

struct CompassOptions {
    double initial_step = 0.5;
    double min_step = 1e-9;
    int max_evals = 20000;
};

struct CompassResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int evals = 0;
};

/// Derivative-free compass (coordinate pattern) search. Polls +-step along each
/// coordinate, moves on the first strict improvement and halves the step after a
/// failed sweep. f may return +inf; the returned f is the best value evaluated.
CompassResult compass_search(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                             const CompassOptions& opts = {});

} // namespace envkit
