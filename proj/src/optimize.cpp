#include "envkit/optimize.hpp"

#include <cmath>

namespace envkit {

GoldenResult golden_section(const std::function<double(double)>& f, double lo, double hi, double tol,
                            int max_iter) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return fc <= fd ? GoldenResult{c, fc} : GoldenResult{d, fd};
}

CompassResult compass_search(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                             const CompassOptions& opts) {
    CompassResult r;
    r.x = std::move(x0);
    r.f = f(r.x);
    r.evals = 1;
    double step = opts.initial_step;
    const auto n = r.x.size();
    while (step >= opts.min_step && r.evals < opts.max_evals) {
        bool improved = false;
        for (Eigen::Index k = 0; k < n && r.evals < opts.max_evals; ++k) {
            for (double sign : {1.0, -1.0}) {
                Eigen::VectorXd y = r.x;
                y(k) += sign * step;
                const double fy = f(y);
                ++r.evals;
                if (fy < r.f) {
                    r.x = std::move(y);
                    r.f = fy;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved)
            step *= 0.5;
    }
    return r;
}

} // namespace envkit
