#pragma once

#include "envkit/cell_problem.hpp"
#include "envkit/convex_reference.hpp"
#include "envkit/density.hpp"
#include "envkit/envelope.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace envkit {

/// Settings of the inner minimization over the third column.
struct ReduceConfig {
    std::vector<double> scales{0.25, 0.5, 1.0, 2.0, 4.0}; ///< log grid s for the seeds s Phi |xi_1 ^ xi_2|^2
    int max_evals = 4000;                                  ///< compass budget per seed
    double min_step = 1e-10;
    int polished_seeds = 2; ///< best seeds refined by the local search
};

ReduceConfig reduce_config_from_json(const nlohmann::json& j, ReduceConfig defaults = {});
nlohmann::json to_json(const ReduceConfig& c);

/// Result of one membrane query inf_zeta W(xi | zeta).
struct ReducedValue {
    ExtReal value;
    Eigen::Vector3d zeta = Eigen::Vector3d::Zero();
    bool feasible = false; ///< false: no finite W(xi | zeta) was found
    int evaluations = 0;
};

/// 3x2 density W0, either native or obtained by reducing a 3x3 density.
struct PlaneDensity {
    Density density;
    std::string provenance; ///< "native" or "reduced_from:<name>"
    std::shared_ptr<const Density> base;
    ReduceConfig cfg;

    /// Full query record; for native densities zeta is unused.
    [[nodiscard]] ReducedValue query(const Mat& xi) const;
};

/// W0(xi) = inf_zeta W(xi | zeta) by multistart compass search. Strong-DC densities
/// give +inf exactly when the columns of xi have a vanishing cross product.
ReducedValue reduce_at(const Density& W, const Mat& xi, const ReduceConfig& cfg = {});

/// Wraps reduce_at as a density (isotropic when W is).
PlaneDensity reduce_density(const Density& W, const ReduceConfig& cfg = {});

/// Wraps a native 3x2 density.
PlaneDensity native_plane_density(const Density& W0);

/// Defaults are sized for reduced densities, where every evaluation is an inner solve.
struct BracketConfig {
    OptConfig opt{16, 16, 10.0, 24, 2, 1, 200};
    int iterations = 4;
    BoxConfig box{Mat(), 1.0, 9}; ///< center is replaced by xi
    double tol_bracket = 1e-6;
};

struct Bracket {
    double lower = 0.0;
    ExtReal upper;
    bool consistent = true; ///< upper >= lower - tol_bracket (1 + lower)
};

/// Lower: box-relative convex reference around xi. Upper: rank-one envelope of W0.
Bracket qw0_bracket(const PlaneDensity& W0, const Mat& xi, const BracketConfig& cfg);

nlohmann::json to_json(const Bracket& b);

struct CommutationConfig {
    MeshConfig outer_mesh{{2}, 40, 0.25, 1e-5, false}; ///< 2d cell problem on the membrane side
    int inner_resolution = 2;                           ///< 3d cell problem relaxing W before reduction
    int inner_sweeps = 20;
    double inner_min_step = 1e-4;
    ReduceConfig reduce{{0.5, 1.0, 2.0}, 600, 1e-7, 1};
    double flag_threshold = 0.05;
};

struct CommutationSample {
    Mat xi;
    ExtReal path_a; ///< cell estimate of [cell estimate of W]_0
    ExtReal path_b; ///< cell estimate of W_0
    double gap = 0.0;
    bool flagged = false;
};

struct CommutationReport {
    std::vector<CommutationSample> samples;
    double max_gap = 0.0;
    std::size_t flagged = 0;
    double threshold = 0.05;
};

/// Diagnostic comparison of the two reduction orders at each sample xi. Both paths
/// are upper estimates with their own slack, so this is never a certificate.
CommutationReport commutation_check(const Density& W, const std::vector<Mat>& xi_samples,
                                    const CommutationConfig& cfg = {});

nlohmann::json to_json(const CommutationReport& r);

} // namespace envkit
