#include "envkit/cell_problem.hpp"

#include "envkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace envkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Energy of a set of simplices in lexicographic form: (#infinite, finite sum).
struct LocalEnergy {
    int infinite = 0;
    double finite = 0.0;

    void add(double volume, ExtReal w) {
        if (w.is_infinite())
            ++infinite;
        else
            finite += volume * w.value();
    }
    [[nodiscard]] bool improves_on(const LocalEnergy& o) const {
        if (infinite != o.infinite)
            return infinite < o.infinite;
        return finite < o.finite - 1e-14 * (1.0 + std::abs(o.finite));
    }
};

int node_index(const std::array<int, 3>& c, int r, int dim) {
    int idx = 0;
    for (int k = dim - 1; k >= 0; --k)
        idx = idx * (r + 1) + c[static_cast<std::size_t>(k)];
    return idx;
}

} // namespace

std::shared_ptr<const CellMesh> make_cell_mesh(int dim, int resolution) {
    if (dim != 2 && dim != 3)
        throw ConfigError("cell mesh: dimension must be 2 or 3");
    if (resolution < 1)
        throw ConfigError("cell mesh: resolution must be >= 1");
    auto mesh = std::make_shared<CellMesh>();
    mesh->dim = dim;
    mesh->resolution = resolution;
    const int r = resolution;
    const int per_axis = r + 1;
    const int total = dim == 2 ? per_axis * per_axis : per_axis * per_axis * per_axis;
    mesh->nodes.resize(static_cast<std::size_t>(total));
    mesh->boundary.resize(static_cast<std::size_t>(total));
    for (int idx = 0; idx < total; ++idx) {
        Vec x(dim);
        int rest = idx;
        bool on_boundary = false;
        for (int k = 0; k < dim; ++k) {
            const int i = rest % per_axis;
            rest /= per_axis;
            x(k) = static_cast<double>(i) / r;
            on_boundary = on_boundary || i == 0 || i == r;
        }
        mesh->nodes[static_cast<std::size_t>(idx)] = x;
        mesh->boundary[static_cast<std::size_t>(idx)] = on_boundary;
    }

    if (dim == 2) {
        for (int j = 0; j < r; ++j)
            for (int i = 0; i < r; ++i) {
                const int v00 = node_index({i, j, 0}, r, 2);
                const int v10 = node_index({i + 1, j, 0}, r, 2);
                const int v01 = node_index({i, j + 1, 0}, r, 2);
                const int v11 = node_index({i + 1, j + 1, 0}, r, 2);
                mesh->simplices.push_back({v00, v10, v11, -1});
                mesh->simplices.push_back({v00, v11, v01, -1});
            }
    } else {
        std::array<int, 3> perm{0, 1, 2};
        std::vector<std::array<int, 3>> perms;
        do {
            perms.push_back(perm);
        } while (std::next_permutation(perm.begin(), perm.end()));
        for (int k = 0; k < r; ++k)
            for (int j = 0; j < r; ++j)
                for (int i = 0; i < r; ++i)
                    for (const auto& p : perms) {
                        std::array<int, 3> c{i, j, k};
                        std::array<int, 4> simplex{};
                        simplex[0] = node_index(c, r, 3);
                        for (int q = 0; q < 3; ++q) {
                            c[static_cast<std::size_t>(p[static_cast<std::size_t>(q)])] += 1;
                            simplex[static_cast<std::size_t>(q + 1)] = node_index(c, r, 3);
                        }
                        mesh->simplices.push_back(simplex);
                    }
    }

    mesh->incident.resize(static_cast<std::size_t>(total));
    for (std::size_t s = 0; s < mesh->simplices.size(); ++s) {
        const auto& sx = mesh->simplices[s];
        Eigen::MatrixXd E(dim, dim);
        const Vec& x0 = mesh->nodes[static_cast<std::size_t>(sx[0])];
        for (int q = 0; q < dim; ++q)
            E.col(q) = mesh->nodes[static_cast<std::size_t>(sx[static_cast<std::size_t>(q + 1)])] - x0;
        const Eigen::MatrixXd Einv = E.inverse();
        Eigen::MatrixXd g(dim + 1, dim);
        g.bottomRows(dim) = Einv;
        g.row(0) = -Einv.colwise().sum();
        mesh->grads.push_back(g);
        mesh->volumes.push_back(std::abs(E.determinant()) / (dim == 2 ? 2.0 : 6.0));
        for (int q = 0; q <= dim; ++q)
            mesh->incident[static_cast<std::size_t>(sx[static_cast<std::size_t>(q)])].push_back(static_cast<int>(s));
    }
    return mesh;
}

AffineTestField::AffineTestField(std::shared_ptr<const CellMesh> mesh_, int m_)
    : mesh(std::move(mesh_)), m(m_), values(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mesh->node_count()), m_)) {}

Mat AffineTestField::gradient(int s) const {
    const int dim = mesh->dim;
    const auto& sx = mesh->simplices[static_cast<std::size_t>(s)];
    const auto& g = mesh->grads[static_cast<std::size_t>(s)];
    Mat G = Mat::Zero(m, dim);
    for (int q = 0; q <= dim; ++q)
        G += values.row(sx[static_cast<std::size_t>(q)]).transpose() * g.row(q);
    return G;
}

bool AffineTestField::valid(double tol) const {
    for (std::size_t i = 0; i < mesh->node_count(); ++i)
        if (mesh->boundary[i] && values.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() != 0.0)
            return false;
    Mat mean = Mat::Zero(m, mesh->dim);
    for (std::size_t s = 0; s < mesh->simplex_count(); ++s)
        mean += mesh->volumes[s] * gradient(static_cast<int>(s));
    return mean.norm() <= tol * (1.0 + values.norm());
}

AffineTestField AffineTestField::refine_to(std::shared_ptr<const CellMesh> fine) const {
    if (fine->dim != mesh->dim || fine->resolution % mesh->resolution != 0)
        throw ConfigError("refine_to: meshes are not nested");
    AffineTestField out(fine, m);
    const int dim = mesh->dim;
    const int r = mesh->resolution;
    for (std::size_t i = 0; i < fine->node_count(); ++i) {
        if (fine->boundary[i])
            continue;
        const Vec& x = fine->nodes[i];
        // Locate the coarse cell, then the simplex containing x within it.
        std::array<int, 3> cell{0, 0, 0};
        for (int k = 0; k < dim; ++k)
            cell[static_cast<std::size_t>(k)] = std::min(r - 1, static_cast<int>(std::floor(x(k) * r + 1e-12)));
        const int per_cell = dim == 2 ? 2 : 6;
        int flat = 0;
        for (int k = dim - 1; k >= 0; --k)
            flat = flat * r + cell[static_cast<std::size_t>(k)];
        bool done = false;
        for (int q = 0; q < per_cell && !done; ++q) {
            const int s = flat * per_cell + q;
            const auto& sx = mesh->simplices[static_cast<std::size_t>(s)];
            const auto& g = mesh->grads[static_cast<std::size_t>(s)];
            const Vec& x0 = mesh->nodes[static_cast<std::size_t>(sx[0])];
            Eigen::VectorXd lambda(dim + 1);
            const Eigen::VectorXd dx = (x - x0).cast<double>();
            lambda.tail(dim) = g.bottomRows(dim) * dx;
            lambda(0) = 1.0 - lambda.tail(dim).sum();
            if (lambda.minCoeff() < -1e-12)
                continue;
            Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(m);
            for (int k = 0; k <= dim; ++k)
                v += lambda(k) * values.row(sx[static_cast<std::size_t>(k)]);
            out.values.row(static_cast<Eigen::Index>(i)) = v;
            done = true;
        }
        if (!done)
            throw LinAlgError("refine_to: node outside every coarse simplex");
    }
    return out;
}

ExtReal cell_energy(const Density& W, const Mat& F, const AffineTestField& phi) {
    if (F.rows() != phi.m || F.cols() != phi.mesh->dim)
        throw DimensionError("cell_energy: matrix shape does not match the field");
    ExtReal total;
    for (std::size_t s = 0; s < phi.mesh->simplex_count(); ++s)
        total += W(F + phi.gradient(static_cast<int>(s))).scaled(phi.mesh->volumes[s]);
    return total;
}

MeshConfig mesh_config_from_json(const nlohmann::json& j, MeshConfig c) {
    if (!j.is_object())
        throw ConfigError("mesh config must be a JSON object");
    try {
        if (j.contains("resolutions"))
            c.resolutions = j["resolutions"].get<std::vector<int>>();
        c.max_sweeps = j.value("max_sweeps", c.max_sweeps);
        c.initial_step = j.value("initial_step", c.initial_step);
        c.min_step = j.value("min_step", c.min_step);
        c.laminate_seeds = j.value("laminate_seeds", c.laminate_seeds);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("mesh config: ") + e.what());
    }
    if (c.resolutions.empty())
        throw ConfigError("mesh config: empty resolution ladder");
    for (std::size_t i = 0; i < c.resolutions.size(); ++i) {
        const int r = c.resolutions[i];
        if (r < 1 || r > 8)
            throw ConfigError("mesh config: resolutions must lie in 1..8");
        if (i > 0 && r % c.resolutions[i - 1] != 0)
            throw ConfigError("mesh config: each resolution must refine the previous one");
    }
    return c;
}

nlohmann::json to_json(const MeshConfig& c) {
    return {{"resolutions", c.resolutions},
            {"max_sweeps", c.max_sweeps},
            {"initial_step", c.initial_step},
            {"min_step", c.min_step},
            {"laminate_seeds", c.laminate_seeds}};
}

namespace {

/// Coordinate search over free nodal values, re-evaluating only incident simplices.
class FieldOptimizer {
public:
    FieldOptimizer(const Density& W, const Mat& F, AffineTestField field)
        : W_(W), F_(F), field_(std::move(field)) {
        const auto& mesh = *field_.mesh;
        grads_.resize(mesh.simplex_count());
        energy_.resize(mesh.simplex_count());
        for (std::size_t s = 0; s < mesh.simplex_count(); ++s) {
            grads_[s] = field_.gradient(static_cast<int>(s));
            energy_[s] = W_(F_ + grads_[s]);
        }
    }

    void run(double step, double min_step, int max_sweeps) {
        const auto& mesh = *field_.mesh;
        std::vector<int> free_nodes;
        for (std::size_t i = 0; i < mesh.node_count(); ++i)
            if (!mesh.boundary[i])
                free_nodes.push_back(static_cast<int>(i));
        std::vector<Mat> trial;
        std::vector<ExtReal> trial_e;
        for (int sweep = 0; sweep < max_sweeps && step >= min_step; ++sweep) {
            bool moved = false;
            for (int v : free_nodes) {
                const auto& inc = mesh.incident[static_cast<std::size_t>(v)];
                for (int c = 0; c < field_.m; ++c) {
                    for (double sign : {1.0, -1.0}) {
                        const double delta = sign * step;
                        LocalEnergy before, after;
                        trial.resize(inc.size());
                        trial_e.resize(inc.size());
                        for (std::size_t q = 0; q < inc.size(); ++q) {
                            const auto s = static_cast<std::size_t>(inc[q]);
                            const auto& sx = mesh.simplices[s];
                            int local = 0;
                            while (sx[static_cast<std::size_t>(local)] != v)
                                ++local;
                            trial[q] = grads_[s];
                            trial[q].row(c) += delta * mesh.grads[s].row(local);
                            trial_e[q] = W_(F_ + trial[q]);
                            before.add(mesh.volumes[s], energy_[s]);
                            after.add(mesh.volumes[s], trial_e[q]);
                        }
                        if (after.improves_on(before)) {
                            field_.values(v, c) += delta;
                            for (std::size_t q = 0; q < inc.size(); ++q) {
                                grads_[static_cast<std::size_t>(inc[q])] = trial[q];
                                energy_[static_cast<std::size_t>(inc[q])] = trial_e[q];
                            }
                            moved = true;
                            break;
                        }
                    }
                }
            }
            if (!moved)
                step *= 0.5;
        }
    }

    [[nodiscard]] ExtReal energy() const {
        // Recompute from scratch so the reported value is the exact quadrature.
        return cell_energy(W_, F_, field_);
    }
    [[nodiscard]] const AffineTestField& field() const { return field_; }

private:
    const Density& W_;
    Mat F_;
    AffineTestField field_;
    std::vector<Mat> grads_;
    std::vector<ExtReal> energy_;
};

/// Sawtooth field b g(y_k) whose gradient alternates between the two laminate phases.
AffineTestField laminate_seed(std::shared_ptr<const CellMesh> mesh, int m, int axis, double t, const Vec& b) {
    const int r = mesh->resolution;
    int best_p = 2, best_j = 1;
    double best_err = kInf;
    for (int p = 2; p <= std::max(2, r); ++p)
        for (int j = 1; j < p; ++j) {
            const double err = std::abs(t - static_cast<double>(j) / p);
            if (err < best_err - 1e-12) {
                best_err = err;
                best_p = p;
                best_j = j;
            }
        }
    const double ts = static_cast<double>(best_j) / best_p;
    const double h = 1.0 / r;
    AffineTestField field(mesh, m);
    for (std::size_t i = 0; i < mesh->node_count(); ++i) {
        if (mesh->boundary[i])
            continue;
        const int k = static_cast<int>(std::lround(mesh->nodes[i](axis) * r)) % best_p;
        const double g = k <= best_j ? (1.0 - ts) * k * h : ts * (best_p - k) * h;
        field.values.row(static_cast<Eigen::Index>(i)) = g * b.transpose();
    }
    return field;
}

} // namespace

ZEstimate z_envelope_estimate(const Density& W, const Mat& F, const MeshConfig& mesh_cfg, const OptConfig& opt_cfg) {
    const int m = W.m();
    const int dim = W.n();
    if (F.rows() != m || F.cols() != dim)
        throw DimensionError("z_envelope_estimate: matrix shape does not match the density");
    if (dim != 2 && dim != 3)
        throw DimensionError("z_envelope_estimate: cell problems need N = 2 or 3");
    const MeshConfig cfg = mesh_config_from_json(to_json(mesh_cfg));

    // Laminate directions along the coordinate axes, from one rank-one step of W.
    struct SeedSplit {
        int axis;
        double t;
        Vec b;
    };
    std::vector<SeedSplit> splits;
    if (cfg.laminate_seeds) {
        const Evaluable h = [&W](const Mat& X) { return W(X); };
        const auto design_b = sphere_design(m, m == 2 ? 32 : 64);
        OptConfig step_cfg = opt_cfg;
        step_cfg.refine_lines = 0;
        for (int axis = 0; axis < dim; ++axis) {
            Vec a = Vec::Zero(dim);
            a(axis) = 1.0;
            const auto res = rank_one_step(h, F, step_cfg, 0.0, {a}, design_b);
            if (res.status == StepStatus::interior)
                splits.push_back({axis, res.t, res.b});
        }
    }

    ZEstimate out{W(F), {}, AffineTestField(make_cell_mesh(dim, cfg.resolutions.front()), m)};
    std::optional<AffineTestField> warm;
    for (int r : cfg.resolutions) {
        auto mesh = make_cell_mesh(dim, r);
        std::vector<AffineTestField> seeds;
        if (warm)
            seeds.push_back(warm->refine_to(mesh));
        seeds.emplace_back(mesh, m);
        for (const auto& s : splits)
            seeds.push_back(laminate_seed(mesh, m, s.axis, s.t, s.b));

        const double step = cfg.initial_step * (1.0 + F.norm()) / r;
        std::optional<AffineTestField> best_field;
        ExtReal best = ExtReal::infinity();
        for (auto& seed : seeds) {
            FieldOptimizer opt(W, F, std::move(seed));
            opt.run(step, cfg.min_step, cfg.max_sweeps);
            const ExtReal e = opt.energy();
            if (!best_field || e < best) {
                best = e;
                best_field = opt.field();
            }
        }
        warm = *best_field;
        if (best <= out.value) {
            out.value = best;
            out.field = *best_field;
        }
        out.per_level.push_back(out.value);
    }
    return out;
}

ExtReal cell_estimate(const Density& W, const Mat& F, const std::shared_ptr<const CellMesh>& mesh,
                      double initial_step, double min_step, int max_sweeps) {
    if (F.rows() != W.m() || F.cols() != W.n() || mesh->dim != W.n())
        throw DimensionError("cell_estimate: matrix shape does not match the density or mesh");
    FieldOptimizer opt(W, F, AffineTestField(mesh, W.m()));
    opt.run(initial_step * (1.0 + F.norm()) / mesh->resolution, min_step, max_sweeps);
    return opt.energy();
}

ExtReal tile_test_field(const Density& W, const std::vector<TilePiece>& pieces, int n) {
    if (n < 1)
        throw ConfigError("tile_test_field: scale index must be >= 1");
    ExtReal assembled;
    ExtReal closed_form;
    for (const auto& piece : pieces) {
        if (!(piece.weight > 0.0))
            throw ConfigError("tile_test_field: region weights must be positive");
        const auto& mesh = *piece.field.mesh;
        if (piece.F.rows() != W.m() || piece.F.cols() != W.n() || piece.field.m != W.m() || mesh.dim != W.n())
            throw DimensionError("tile_test_field: piece shape does not match the density");
        if (!piece.field.valid())
            throw PreconditionError("tile_test_field: field does not vanish on the cell boundary");

        // Per-simplex energies of the unit cell, shared by every scaled copy.
        std::vector<ExtReal> cell(mesh.simplex_count());
        for (std::size_t s = 0; s < cell.size(); ++s)
            cell[s] = W(piece.F + piece.field.gradient(static_cast<int>(s)));

        // The region is covered by n^N cubes of side 1/n; on the copy with corner a
        // the field x -> phi(n (x - a)) / n has gradient grad phi(n (x - a)).
        std::size_t copies = 1;
        for (int k = 0; k < mesh.dim; ++k)
            copies *= static_cast<std::size_t>(n);
        const double copy_volume = piece.weight / static_cast<double>(copies);
        double covered = 0.0;
        ExtReal piece_sum;
        for (std::size_t c = 0; c < copies; ++c) {
            ExtReal copy_sum;
            for (std::size_t s = 0; s < cell.size(); ++s)
                copy_sum += cell[s].scaled(mesh.volumes[s]);
            piece_sum += copy_sum.scaled(copy_volume);
            covered += copy_volume;
        }
        if (std::abs(covered - piece.weight) > kTolLin * piece.weight)
            throw PreconditionError("tile_test_field: covering does not fill the region");
        assembled += piece_sum;
        closed_form += cell_energy(W, piece.F, piece.field).scaled(piece.weight);
    }
    if (assembled.is_infinite() != closed_form.is_infinite() ||
        (assembled.is_finite() &&
         std::abs(assembled.value() - closed_form.value()) > kTolLin * (1.0 + closed_form.value())))
        throw PreconditionError("tile_test_field: tiled energy departs from the closed form");
    return assembled;
}

} // namespace envkit
