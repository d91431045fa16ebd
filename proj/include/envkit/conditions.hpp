#pragma once

#include "envkit/density.hpp"
#include "envkit/sampling.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace envkit {

/// Fixed delta ladder for the c_delta fit (and the alpha ladder for beta_alpha).
inline constexpr std::array<double, 4> kDeltaLadder{1.0, 0.5, 0.1, 0.01};

/// Largest number of violation records kept in a report; the count is always exact.
inline constexpr std::size_t kMaxViolationRecords = 100;

struct Violation {
    std::size_t sample_index = 0;
    Mat matrix;
    ExtReal value;
    double bound = 0.0;
    std::string reason;
};

/// Outcome of a sampled condition check. Verdicts are "pass at sampled
/// resolution", never a proof.
struct ConditionReport {
    std::string condition_id;
    std::uint64_t seed = 0;
    std::size_t samples_checked = 0;
    std::size_t violation_count = 0;
    std::vector<Violation> violations; ///< first kMaxViolationRecords, by sample index
    std::map<std::string, double> constants;
    std::string note;

    [[nodiscard]] bool passed() const { return violation_count == 0; }
    [[nodiscard]] std::string verdict() const;
    void add_violation(Violation v);
};

nlohmann::json to_json(const ConditionReport& r);

/// Fits C = inf W/|F|^p over finite samples with |F| >= 0.1; violations where the ratio is <= 0.
ConditionReport check_coercivity(const Density& W, const SampleSpec& sampler);

/// Fits c = sup W/(1 + |F|^p); every +inf sample is a violation.
ConditionReport check_growth_p(const Density& W, const SampleSpec& sampler);

/// |det F| >= alpha implies W(F) <= beta (1 + |F|^p). Square densities only.
ConditionReport check_condition_D(const Density& W, double alpha, double beta, const SampleSpec& sampler);

/// |xi_1 ^ xi_2| >= alpha implies W0(xi) <= beta (1 + |xi|^p). 3x2 densities only.
ConditionReport check_condition_P(const Density& W0, double alpha, double beta, const SampleSpec& sampler);

/// W(F) = +inf iff det F <= 0, plus the c_delta ladder over det F >= delta.
ConditionReport check_strong_dc(const Density& W, const SampleSpec& sampler);

/// W0(xi) = +inf iff |xi_1 ^ xi_2| = 0. 3x2 densities only.
ConditionReport check_cross_dc(const Density& W0, const SampleSpec& sampler);

/// beta_alpha ladder over |xi_1 ^ xi_2| >= alpha, for alpha in kDeltaLadder.
/// A violation is a +inf value inside the region of some rung.
ConditionReport check_condition_P1(const Density& W0, const SampleSpec& sampler);

/// Continuity heuristic in the extended sense (id "D0" or "P0"): compares W at each
/// sample with W at a tiny deterministic perturbation. A finite pair must agree to
/// 1e-3 relative; a finite/infinite pair is a violation when the finite side is
/// below 1/sqrt(h), since a continuous W must blow up next to its +inf set.
ConditionReport check_continuity(const Density& W, const SampleSpec& sampler, const std::string& id = "D0");

/// Upper estimator of the cell-problem envelope used for the ampleness fit.
using UpperEstimator = std::function<ExtReal(const Mat&)>;

/// Fits c_R = sup estimate/(1 + |F|^p) on the ball of radius R = sampler.radius and
/// c_2R on the ball of radius 2R. Evidence of p-ampleness when c_2R / c_R <= 1.25.
ConditionReport check_ampleness(const Density& W, const UpperEstimator& estimate, const SampleSpec& sampler);

} // namespace envkit
