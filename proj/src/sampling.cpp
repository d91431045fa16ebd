#include "envkit/sampling.hpp"

#include "envkit/errors.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/random/sobol.hpp>

#include <cmath>
#include <random>

namespace envkit {

SampleSpec sample_spec_from_json(const nlohmann::json& j, SampleSpec s) {
    if (!j.is_object())
        throw ConfigError("sample spec must be a JSON object");
    try {
        if (j.contains("m"))
            s.m = j["m"].get<int>();
        if (j.contains("N"))
            s.n = j["N"].get<int>();
        if (j.contains("radius"))
            s.radius = j["radius"].get<double>();
        if (j.contains("count"))
            s.count = j["count"].get<int>();
        if (j.contains("structured"))
            s.structured = j["structured"].get<int>();
        if (j.contains("seed"))
            s.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sample spec: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const SampleSpec& s) {
    return {{"m", s.m},           {"N", s.n},     {"radius", s.radius}, {"count", s.count},
            {"structured", s.structured}, {"seed", s.seed}};
}

namespace {

void sobol_ball(const SampleSpec& spec, std::vector<Mat>& out) {
    const int d = spec.m * spec.n;
    boost::random::sobol engine(static_cast<std::size_t>(d + 1));
    std::mt19937_64 shift_rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> shift(static_cast<std::size_t>(d + 1));
    for (double& s : shift)
        s = unit(shift_rng);

    const double scale = std::ldexp(1.0, -53);
    std::vector<double> u(static_cast<std::size_t>(d + 1));
    for (int k = 0; k < spec.count; ++k) {
        for (int c = 0; c <= d; ++c) {
            const double raw = static_cast<double>(engine() >> 11) * scale;
            double x = raw + shift[c];
            if (x >= 1.0)
                x -= 1.0;
            u[c] = std::clamp(x, 1e-12, 1.0 - 1e-12);
        }
        Mat F(spec.m, spec.n);
        for (int c = 0; c < d; ++c)
            F(c / spec.n, c % spec.n) = std::sqrt(2.0) * boost::math::erf_inv(2.0 * u[c] - 1.0);
        const double norm = F.norm();
        const double r = spec.radius * std::pow(u[d], 1.0 / d);
        if (norm > 0.0)
            F *= r / norm;
        out.push_back(F);
    }
}

void structured(const SampleSpec& spec, std::vector<Mat>& out) {
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    const int m = spec.m;
    const int n = spec.n;
    const double half_side = spec.radius / std::sqrt(static_cast<double>(std::min(m, n)));
    std::uniform_real_distribution<double> diag_entry(-half_side, half_side);
    std::uniform_real_distribution<double> entry(-spec.radius / std::sqrt(double(m * n)),
                                                 spec.radius / std::sqrt(double(m * n)));
    std::uniform_real_distribution<double> target(-0.1, 0.1);

    for (int k = 0; k < spec.structured; ++k) {
        Mat F = Mat::Zero(m, n);
        switch (k % 3) {
        case 0:
            for (int i = 0; i < std::min(m, n); ++i)
                F(i, i) = diag_entry(rng);
            break;
        case 1:
            F = exact_rank_one(m, n, spec.radius / 2.0, rng);
            break;
        default: {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    F(i, j) = entry(rng);
            if (n > m)
                break;
            const SvdFactorization f = svd_ascending(F);
            double others = 1.0;
            for (int i = 1; i < n; ++i)
                others *= f.sv(i);
            if (others < 1e-8)
                break;
            double t = target(rng);
            Vec d = f.sv;
            if (m == n) {
                const double sign_p = f.P.determinant() < 0.0 ? -1.0 : 1.0;
                d(0) = t / (sign_p * others);
            } else {
                d(0) = std::abs(t) / others;
            }
            F = compose_from_diag(f, d);
            break;
        }
        }
        out.push_back(F);
    }
}

} // namespace

std::vector<Mat> generate_samples(const SampleSpec& spec) {
    if (spec.m < 1 || spec.n < 1 || spec.m > kMaxDim || spec.n > kMaxDim)
        throw ConfigError("sample spec: dims outside 1..4");
    if (spec.count < 0 || spec.structured < 0 || spec.count + spec.structured == 0)
        throw ConfigError("sample spec: empty sample set");
    if (!(spec.radius > 0.0) || !std::isfinite(spec.radius))
        throw ConfigError("sample spec: radius must be positive");
    std::vector<Mat> out;
    out.reserve(static_cast<std::size_t>(spec.count + spec.structured));
    sobol_ball(spec, out);
    structured(spec, out);
    return out;
}

} // namespace envkit
