#include "envkit/conditions.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"
#include "envkit/parallel.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace envkit {

std::string ConditionReport::verdict() const {
    if (!passed())
        return "fail";
    if (condition_id == "ample")
        return "evidence of p-ampleness";
    return "pass at sampled resolution";
}

void ConditionReport::add_violation(Violation v) {
    ++violation_count;
    if (violations.size() < kMaxViolationRecords)
        violations.push_back(std::move(v));
}

nlohmann::json to_json(const ConditionReport& r) {
    nlohmann::json viol = nlohmann::json::array();
    for (const auto& v : r.violations) {
        viol.push_back({{"sample_index", v.sample_index},
                        {"matrix", matrix_to_json(v.matrix)},
                        {"value", ext_to_json(v.value)},
                        {"bound", std::isfinite(v.bound) ? nlohmann::json(v.bound) : nlohmann::json("inf")},
                        {"reason", v.reason}});
    }
    nlohmann::json constants = nlohmann::json::object();
    for (const auto& [k, v] : r.constants)
        constants[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(v > 0 ? "inf" : "-inf");
    nlohmann::json out = {{"condition_id", r.condition_id},
                          {"seed", r.seed},
                          {"samples_checked", r.samples_checked},
                          {"violation_count", r.violation_count},
                          {"verdict", r.verdict()},
                          {"violations", viol},
                          {"constants", constants}};
    if (!r.note.empty())
        out["note"] = r.note;
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Evaluated {
    std::vector<Mat> samples;
    std::vector<ExtReal> values;
};

Evaluated evaluate(const Density& W, SampleSpec spec) {
    spec.m = W.m();
    spec.n = W.n();
    Evaluated e;
    e.samples = generate_samples(spec);
    e.values.resize(e.samples.size());
    parallel_for(e.samples.size(), [&](std::size_t i) { e.values[i] = W(e.samples[i]); });
    return e;
}

ConditionReport start(const std::string& id, const SampleSpec& spec, std::size_t n) {
    ConditionReport r;
    r.condition_id = id;
    r.seed = spec.seed;
    r.samples_checked = n;
    return r;
}

void require_square(const Density& W, const char* what) {
    if (W.m() != W.n())
        throw DimensionError(std::string(what) + ": density must be square, got " + std::to_string(W.m()) + "x" +
                             std::to_string(W.n()));
}

void require_plane(const Density& W, const char* what) {
    if (W.m() != 3 || W.n() != 2)
        throw DimensionError(std::string(what) + ": density must be 3x2, got " + std::to_string(W.m()) + "x" +
                             std::to_string(W.n()));
}

/// Shared body of the (D) and (P) implication checks.
ConditionReport implication(const Density& W, double alpha, double beta, const SampleSpec& sampler,
                            const std::string& id, double (*measure)(const Mat&)) {
    if (!(alpha > 0.0))
        throw ConfigError(id + ": alpha must be > 0");
    if (!(beta >= 0.0))
        throw ConfigError(id + ": beta must be >= 0");
    const Evaluated e = evaluate(W, sampler);
    ConditionReport r = start(id, sampler, e.samples.size());
    double fit = 0.0;
    std::size_t in_region = 0;
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        const Mat& F = e.samples[i];
        if (measure(F) < alpha)
            continue;
        ++in_region;
        const double weight = growth_weight(F, W.p());
        fit = std::max(fit, e.values[i].value() / weight);
        const double bound = beta * weight;
        if (e.values[i].is_infinite() || e.values[i].value() > bound)
            r.add_violation({i, F, e.values[i], bound, "W exceeds beta (1 + |F|^p)"});
    }
    r.constants["alpha"] = alpha;
    r.constants["beta"] = beta;
    r.constants["beta_fit"] = fit;
    r.constants["beta_safe"] = 1.01 * fit;
    r.constants["samples_in_region"] = static_cast<double>(in_region);
    return r;
}

double abs_det(const Mat& F) {
    return std::abs(det(F));
}

} // namespace

ConditionReport check_coercivity(const Density& W, const SampleSpec& sampler) {
    const Evaluated e = evaluate(W, sampler);
    ConditionReport r = start("coercive", sampler, e.samples.size());
    double C = kInf;
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        const Mat& F = e.samples[i];
        if (F.norm() < 0.1 || e.values[i].is_infinite())
            continue;
        const double ratio = e.values[i].value() / norm_pow(F, W.p());
        C = std::min(C, ratio);
        if (ratio <= 0.0)
            r.add_violation({i, F, e.values[i], 0.0, "W/|F|^p <= 0"});
    }
    r.constants["C_fit"] = C;
    r.constants["C_safe"] = 0.99 * C;
    return r;
}

ConditionReport check_growth_p(const Density& W, const SampleSpec& sampler) {
    const Evaluated e = evaluate(W, sampler);
    ConditionReport r = start("growth_p", sampler, e.samples.size());
    double c = 0.0;
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        if (e.values[i].is_infinite()) {
            r.add_violation({i, e.samples[i], e.values[i], kInf, "W = +inf"});
            continue;
        }
        c = std::max(c, e.values[i].value() / growth_weight(e.samples[i], W.p()));
    }
    r.constants["c_fit"] = c;
    r.constants["c_safe"] = 1.01 * c;
    return r;
}

ConditionReport check_condition_D(const Density& W, double alpha, double beta, const SampleSpec& sampler) {
    require_square(W, "check_condition_D");
    return implication(W, alpha, beta, sampler, "D", &abs_det);
}

ConditionReport check_condition_P(const Density& W0, double alpha, double beta, const SampleSpec& sampler) {
    require_plane(W0, "check_condition_P");
    return implication(W0, alpha, beta, sampler, "P", &cross_product_norm);
}

ConditionReport check_strong_dc(const Density& W, const SampleSpec& sampler) {
    require_square(W, "check_strong_dc");
    const Evaluated e = evaluate(W, sampler);
    ConditionReport r = start("D1", sampler, e.samples.size());
    std::array<double, kDeltaLadder.size()> ladder{};
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        const Mat& F = e.samples[i];
        const double d = det(F);
        const bool forbidden = !(d > 0.0);
        if (forbidden != e.values[i].is_infinite()) {
            r.add_violation({i, F, e.values[i], forbidden ? kInf : 0.0,
                             forbidden ? "finite at det F <= 0" : "+inf at det F > 0"});
            continue;
        }
        if (forbidden)
            continue;
        const double ratio = e.values[i].value() / growth_weight(F, W.p());
        for (std::size_t k = 0; k < kDeltaLadder.size(); ++k)
            if (d >= kDeltaLadder[k])
                ladder[k] = std::max(ladder[k], ratio);
    }
    bool monotone = true;
    for (std::size_t k = 0; k < kDeltaLadder.size(); ++k) {
        r.constants["c_delta_" + format_double(kDeltaLadder[k])] = ladder[k];
        if (k > 0 && ladder[k] < ladder[k - 1])
            monotone = false;
    }
    r.constants["ladder_monotone"] = monotone ? 1.0 : 0.0;
    return r;
}

ConditionReport check_cross_dc(const Density& W0, const SampleSpec& sampler) {
    require_plane(W0, "check_cross_dc");
    const Evaluated e = evaluate(W0, sampler);
    ConditionReport r = start("P01", sampler, e.samples.size());
    std::size_t degenerate = 0;
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        const bool forbidden = cross_product_norm(e.samples[i]) == 0.0;
        degenerate += forbidden ? 1 : 0;
        if (forbidden != e.values[i].is_infinite())
            r.add_violation({i, e.samples[i], e.values[i], forbidden ? kInf : 0.0,
                             forbidden ? "finite at zero cross product" : "+inf at nonzero cross product"});
    }
    r.constants["degenerate_samples"] = static_cast<double>(degenerate);
    return r;
}

ConditionReport check_condition_P1(const Density& W0, const SampleSpec& sampler) {
    require_plane(W0, "check_condition_P1");
    const Evaluated e = evaluate(W0, sampler);
    ConditionReport r = start("P1", sampler, e.samples.size());
    std::array<double, kDeltaLadder.size()> ladder{};
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        const double v = cross_product_norm(e.samples[i]);
        if (v < kDeltaLadder.back())
            continue;
        if (e.values[i].is_infinite()) {
            r.add_violation({i, e.samples[i], e.values[i], kInf, "+inf inside |xi_1 ^ xi_2| >= alpha"});
            continue;
        }
        const double ratio = e.values[i].value() / growth_weight(e.samples[i], W0.p());
        for (std::size_t k = 0; k < kDeltaLadder.size(); ++k)
            if (v >= kDeltaLadder[k])
                ladder[k] = std::max(ladder[k], ratio);
    }
    for (std::size_t k = 0; k < kDeltaLadder.size(); ++k)
        r.constants["beta_alpha_" + format_double(kDeltaLadder[k])] = ladder[k];
    return r;
}

ConditionReport check_continuity(const Density& W, const SampleSpec& sampler, const std::string& id) {
    const Evaluated e = evaluate(W, sampler);
    ConditionReport r = start(id, sampler, e.samples.size());
    constexpr double kStep = 1e-7;
    const double blowup_floor = 1.0 / std::sqrt(kStep);

    std::vector<Mat> moved(e.samples.size());
    std::mt19937_64 rng(sampler.seed ^ 0x5851f42d4c957f2dULL);
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        Mat E(W.m(), W.n());
        for (int a = 0; a < E.rows(); ++a)
            for (int b = 0; b < E.cols(); ++b)
                E(a, b) = normal(rng);
        E /= E.norm();
        moved[i] = e.samples[i] + kStep * (1.0 + e.samples[i].norm()) * E;
    }
    std::vector<ExtReal> near(moved.size());
    parallel_for(moved.size(), [&](std::size_t i) { near[i] = W(moved[i]); });

    double worst = 0.0;
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        const ExtReal a = e.values[i];
        const ExtReal b = near[i];
        if (a.is_infinite() && b.is_infinite())
            continue;
        if (a.is_finite() && b.is_finite()) {
            const double rel = std::abs(a.value() - b.value()) / (1.0 + std::min(a.value(), b.value()));
            worst = std::max(worst, rel);
            if (rel > 1e-3)
                r.add_violation({i, e.samples[i], a, b.value(), "jump under a perturbation of size 1e-7"});
            continue;
        }
        const double finite_side = a.is_finite() ? a.value() : b.value();
        if (finite_side < blowup_floor)
            r.add_violation({i, e.samples[i], a, finite_side, "finite value next to +inf without blow-up"});
    }
    r.constants["max_relative_jump"] = worst;
    r.constants["step"] = kStep;
    return r;
}

ConditionReport check_ampleness(const Density& W, const UpperEstimator& estimate, const SampleSpec& sampler) {
    SampleSpec inner = sampler;
    inner.m = W.m();
    inner.n = W.n();
    SampleSpec outer = inner;
    outer.radius = 2.0 * inner.radius;

    auto fit = [&](const SampleSpec& spec, ConditionReport& r, std::size_t offset, Mat& argmax) {
        const std::vector<Mat> samples = generate_samples(spec);
        std::vector<ExtReal> values(samples.size());
        parallel_for(samples.size(), [&](std::size_t i) { values[i] = estimate(samples[i]); });
        double c = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (values[i].is_infinite()) {
                r.add_violation({offset + i, samples[i], values[i], kInf, "upper estimate is +inf"});
                continue;
            }
            const double ratio = values[i].value() / growth_weight(samples[i], W.p());
            if (ratio > c) {
                c = ratio;
                argmax = samples[i];
            }
        }
        r.samples_checked += samples.size();
        return c;
    };

    ConditionReport r = start("ample", sampler, 0);
    Mat arg_inner;
    Mat arg_outer;
    const double c_inner = fit(inner, r, 0, arg_inner);
    const double c_outer = fit(outer, r, r.samples_checked, arg_outer);
    const double ratio = c_inner > 0.0 ? c_outer / c_inner : (c_outer > 0.0 ? kInf : 1.0);
    r.constants["c_R"] = c_inner;
    r.constants["c_2R"] = c_outer;
    r.constants["ratio"] = ratio;
    r.constants["R"] = inner.radius;
    if (ratio > 1.25 && r.violation_count == 0)
        r.add_violation({0, arg_outer, ExtReal(c_outer * growth_weight(arg_outer, W.p())),
                         1.25 * c_inner * growth_weight(arg_outer, W.p()), "fit grows by more than 1.25 from R to 2R"});
    r.note = "evidence from a radius ladder, not a proof";
    return r;
}

} // namespace envkit
