#pragma once

#include "envkit/density.hpp"
#include "envkit/laminate.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace envkit {

/// Any extended-real function of a matrix (a density or a tabulated envelope).
using Evaluable = std::function<ExtReal(const Mat&)>;

/// Settings of the rank-one step search.
struct OptConfig {
    int directions_a = 0;         ///< unit directions a; 0 picks 64 (N = 2) or 128 (N = 3)
    int directions_b = 0;         ///< unit directions of b; 0 picks 32 (m = 2) or 64 (m = 3)
    double b_max_factor = 10.0;   ///< |b| <= b_max_factor (1 + |F|)
    int inner_samples = 24;       ///< line samples per side inside the local window
    int outer_samples = 8;        ///< log-spaced line samples per side beyond the window
    int refine_lines = 3;         ///< best lines polished by local search
    int refine_evals = 400;       ///< evaluation budget per polished line
    double tol_conv = 1e-5;       ///< relative convergence tolerance between iterates
    double tol_opt = 1e-6;        ///< relative tolerance for reproducing optimizer values
    double min_gain = 1e-9;       ///< relative gain below which a split is not taken
    int inner_directions_a = 8;   ///< direction counts for nested levels without a table
    int inner_directions_b = 8;
    int max_recursive_depth = 2;  ///< nested levels without a table
    int table_points = 41;        ///< nodes per axis of automatic tables
    std::size_t max_tree_leaves = std::size_t{1} << 18;
    std::uint64_t seed = 0;
};

OptConfig opt_config_from_json(const nlohmann::json& j, OptConfig defaults = {});
nlohmann::json to_json(const OptConfig& cfg);

enum class StepStatus { interior, boundary_t0, boundary_t1, all_infinite };
std::string to_string(StepStatus s);

/// Best split (1 - t) h(F - t a(x)b) + t h(F + (1 - t) a(x)b) found by the search.
struct RankOneStepResult {
    ExtReal value;
    double t = 0.0;
    Vec a;
    Vec b;
    int direction_index = -1;
    StepStatus status = StepStatus::boundary_t0;
};

/// Deterministic unit directions on a hemisphere of R^dim (axes first).
std::vector<Vec> sphere_design(int dim, int count);

/// One Kohn-Strang step of h at F. `h_step` sets the line sampling spacing; pass 0
/// to derive it from |F|. The result never exceeds h(F).
RankOneStepResult rank_one_step(const Evaluable& h, const Mat& F, const OptConfig& cfg, double h_step = 0.0);

/// Same search with explicit direction designs.
RankOneStepResult rank_one_step(const Evaluable& h, const Mat& F, const OptConfig& cfg, double h_step,
                                const std::vector<Vec>& design_a, const std::vector<Vec>& design_b);

/// Axis-aligned grid of matrices, one axis per entry (row-major).
struct GridAxis {
    double lo = 0.0;
    double hi = 0.0;
    int count = 1;
    [[nodiscard]] double step() const { return count > 1 ? (hi - lo) / (count - 1) : 0.0; }
    [[nodiscard]] double at(int k) const { return count > 1 ? lo + k * step() : lo; }
};

struct GridSpec {
    int m = 2;
    int n = 2;
    std::vector<GridAxis> axes; ///< m * n axes, row-major

    /// Diagonal grid: entry (i, i) ranges over [lo, hi] with `count` nodes, the rest are 0.
    static GridSpec diagonal(int m, int n, double lo, double hi, int count);

    [[nodiscard]] std::size_t node_count() const;
    [[nodiscard]] Mat node(std::size_t index) const;
    /// Varying axes are exactly the diagonal ones and every fixed entry is zero.
    [[nodiscard]] bool is_diagonal() const;
    /// Indices (row-major) of axes with count > 1.
    [[nodiscard]] std::vector<int> varying_axes() const;
};

/// {"m", "N", "diagonal": {lo, hi, count}} or {"m", "N", "axes": [{lo, hi, count}, ...]}.
GridSpec grid_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GridSpec& g);

/// Per-node iterate sequences R_0 W .. R_k W over a grid.
struct EnvelopeTable {
    GridSpec grid;
    std::vector<std::vector<ExtReal>> values; ///< values[node][iteration]
    std::vector<bool> converged;
    int iterations = 0;

    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Output of rank_one_envelope at a single matrix.
struct EnvelopeResult {
    ExtReal value;
    std::vector<ExtReal> iterates; ///< R_0 W(F), R_1 W(F), ...
    LaminateTree tree;
    bool converged = false;
    bool tree_exact = true; ///< false if the tree was truncated at max_tree_leaves
    int iterations = 0;
    std::string mode;       ///< "table" or "nested"
};

nlohmann::json to_json(const EnvelopeResult& r);

/// Kohn-Strang iteration engine for one density.
///
/// Isotropic densities of shape 2x2, 3x2 or 3x3 with a diagonal grid are tabulated
/// on signed singular values; other grids tabulate the raw entries. Off-node values
/// come from multilinear interpolation along the grid axes, which is itself a
/// laminate of node values and so stays an upper bound. Interpolation is never used
/// across a +inf node or outside the grid: the density is evaluated exactly there.
/// Without a grid, nested levels are evaluated recursively with a smaller design.
class RankOneEngine {
public:
    RankOneEngine(Density W, OptConfig cfg);
    RankOneEngine(Density W, GridSpec grid, OptConfig cfg);
    ~RankOneEngine();
    RankOneEngine(RankOneEngine&&) noexcept;
    RankOneEngine& operator=(RankOneEngine&&) noexcept;

    /// Iterates at F until convergence or max_iters, then expands the laminate tree.
    EnvelopeResult envelope(const Mat& F, int max_iters);

    /// Fills the table up to max_iters levels (stops early once no node changes).
    EnvelopeTable table(int max_iters);

    /// Value of the tabulated level at an arbitrary matrix (requires a grid).
    ExtReal table_value(const Mat& F, int level);

    [[nodiscard]] bool has_grid() const;
    [[nodiscard]] const Density& density() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper: picks an automatic grid for tabulable densities.
EnvelopeResult rank_one_envelope(const Density& W, const Mat& F, int max_iters, const OptConfig& cfg = {});

/// Batched Kohn-Strang table; throws ResourceError beyond 1e6 nodes.
EnvelopeTable envelope_table(const Density& W, const GridSpec& grid, int max_iters, const OptConfig& cfg = {});

/// Automatic grid used by rank_one_envelope for a tabulable density at F.
GridSpec auto_grid(const Density& W, const Mat& F, const OptConfig& cfg);

/// True when the density can be tabulated on signed singular values.
bool tabulable(const Density& W);

} // namespace envkit
