#pragma once

#include "envkit/density.hpp"
#include "envkit/envelope.hpp"

#include <json.hpp>

#include <array>
#include <memory>
#include <vector>

namespace envkit {

/// Regular simplicial triangulation of the unit cell (0,1)^N, N = 2 or 3.
///
/// N = 2 splits every square along its (0,0)-(1,1) diagonal; N = 3 uses the
/// Kuhn split of every cube into 6 tetrahedra. Refining the resolution by a
/// factor 2 nests every fine simplex inside a coarse one.
struct CellMesh {
    int dim = 2;
    int resolution = 1; ///< cells per axis (h = 1 / resolution)
    std::vector<Vec> nodes;
    std::vector<bool> boundary;
    std::vector<std::array<int, 4>> simplices; ///< first dim + 1 entries used
    std::vector<double> volumes;
    /// Per simplex: (dim + 1) x dim matrix whose rows are the barycentric gradients.
    std::vector<Eigen::MatrixXd> grads;
    /// Simplices incident to each node.
    std::vector<std::vector<int>> incident;

    [[nodiscard]] std::size_t node_count() const { return nodes.size(); }
    [[nodiscard]] std::size_t simplex_count() const { return simplices.size(); }
};

/// Builds the mesh; throws ConfigError unless dim is 2 or 3 and resolution >= 1.
std::shared_ptr<const CellMesh> make_cell_mesh(int dim, int resolution);

/// Continuous piecewise-affine field on a CellMesh with values in R^m, zero on the boundary.
struct AffineTestField {
    std::shared_ptr<const CellMesh> mesh;
    int m = 2;
    Eigen::MatrixXd values; ///< node_count x m

    /// Zero field.
    AffineTestField(std::shared_ptr<const CellMesh> mesh, int m);

    /// Constant gradient (m x N) on simplex s.
    [[nodiscard]] Mat gradient(int s) const;
    /// Zero trace and vanishing cell average of the gradient, within tol.
    [[nodiscard]] bool valid(double tol = kTolLin) const;
    /// Nodal interpolation of this field on a nested finer mesh.
    [[nodiscard]] AffineTestField refine_to(std::shared_ptr<const CellMesh> fine) const;
};

/// Exact cell energy  sum_s |s| W(F + grad phi|_s).
ExtReal cell_energy(const Density& W, const Mat& F, const AffineTestField& phi);

struct MeshConfig {
    std::vector<int> resolutions{2, 4, 8}; ///< warm-started ladder, coarse to fine
    int max_sweeps = 100;                  ///< coordinate sweeps per seed and resolution
    double initial_step = 0.25;            ///< relative to 1 + |F|, in units of h
    double min_step = 1e-8;
    bool laminate_seeds = true;            ///< also start from axis laminate fields
};

MeshConfig mesh_config_from_json(const nlohmann::json& j, MeshConfig defaults = {});
nlohmann::json to_json(const MeshConfig& c);

struct ZEstimate {
    ExtReal value;                 ///< best cell energy over every resolution
    std::vector<ExtReal> per_level; ///< best value after each resolution (nonincreasing)
    AffineTestField field;          ///< optimal field on the finest mesh
};

/// Upper estimate of the cell-problem envelope Z W(F) over Aff_0 fields on the
/// meshes of mesh_cfg. Seeds: the zero field and fine laminate (sawtooth) fields
/// along the coordinate axes built from rank-one steps of W.
ZEstimate z_envelope_estimate(const Density& W, const Mat& F, const MeshConfig& mesh_cfg = {},
                              const OptConfig& opt_cfg = {});

/// Zero-seeded cell estimate on a single mesh: coordinate search from phi = 0 with
/// step initial_step (1 + |F|) h halved down to min_step.
ExtReal cell_estimate(const Density& W, const Mat& F, const std::shared_ptr<const CellMesh>& mesh,
                      double initial_step, double min_step, int max_sweeps);

/// One tile family of the covering: region weight |V_i|, matrix F_i and field phi_i.
struct TilePiece {
    double weight = 1.0;
    Mat F;
    AffineTestField field;
};

/// Tiled energy sum_i |V_i| int_Y W(F_i + grad phi_i) computed through the
/// covering of each region by n^N copies of Y scaled by 1/n. Throws
/// PreconditionError if the assembled sum departs from the closed form by more
/// than kTolLin (1 + |closed form|).
ExtReal tile_test_field(const Density& W, const std::vector<TilePiece>& pieces, int n);

} // namespace envkit
