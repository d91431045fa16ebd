// Acceptance checks for the envelope toolkit. Prints one PASS/FAIL line per
// criterion; with arguments, runs only the listed criterion numbers.

#include "envkit/certificates.hpp"
#include "envkit/cell_problem.hpp"
#include "envkit/cli.hpp"
#include "envkit/envelope.hpp"
#include "envkit/errors.hpp"
#include "envkit/io.hpp"
#include "envkit/membrane.hpp"
#include "envkit/thin_film.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace envkit;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

Density catalog(const std::string& family, int m, int n, double p = 2.0,
                nlohmann::json params = nlohmann::json::object()) {
    DensitySpec s;
    s.family = family;
    s.m = m;
    s.n = n;
    s.p = p;
    s.params = std::move(params);
    return make_density(s);
}

Mat random_matrix(int m, int n, double scale, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat F(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            F(i, j) = u(rng);
    return F;
}

double rel_gap(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

// 1 -------------------------------------------------------------------------

Verdict monotone_hierarchy() {
    std::size_t violations = 0, checked = 0;
    for (const std::string family : {"kohn_strang", "det_barrier"}) {
        const Density W = catalog(family, 2, 2);
        const GridSpec grid = GridSpec::diagonal(2, 2, -2.0, 2.0, 21);
        const EnvelopeTable table = envelope_table(W, grid, 8);
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            const ExtReal w = W(grid.node(i));
            const auto& r = table.values[i];
            for (std::size_t k = 0; k < r.size(); ++k) {
                ++checked;
                if (!(r[k] <= w))
                    ++violations;
                if (k > 0 && !(r[k] <= r[k - 1]))
                    ++violations;
            }
        }
    }
    return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(checked) + " values"};
}

// 2 -------------------------------------------------------------------------

Verdict convex_fixed_point() {
    std::mt19937_64 rng(2);
    const Density W = catalog("quadratic", 2, 2);
    const Density W3 = catalog("quadratic", 3, 3);
    const PlaneDensity W0 = reduce_density(W3, ReduceConfig{{0.5, 1.0, 2.0}, 400, 1e-8, 1});
    OptConfig light{};
    light.directions_a = 8;
    light.directions_b = 8;
    light.outer_samples = 2;
    light.refine_lines = 1;
    light.table_points = 9;
    const MeshConfig mesh{{2, 4}, 40, 0.25, 1e-6, true};

    double worst_r = 0, worst_z = 0, worst_m = 0;
    for (int s = 0; s < 100; ++s) {
        const Mat F = random_matrix(2, 2, 1.5, rng);
        const double w = W(F).value();
        worst_r = std::max(worst_r, rel_gap(rank_one_envelope(W, F, 4).value.value(), w));
        worst_z = std::max(worst_z, rel_gap(z_envelope_estimate(W, F, mesh).value.value(), w));
        const Mat xi = random_matrix(3, 2, 1.5, rng);
        worst_m = std::max(worst_m, rel_gap(rank_one_envelope(W0.density, xi, 3, light).value.value(),
                                            xi.squaredNorm()));
    }
    const double worst = std::max({worst_r, worst_z, worst_m});
    return {worst <= 1e-6, "max rel gap: rank-one " + fmt(worst_r) + ", Z " + fmt(worst_z) + ", reduce+envelope " +
                               fmt(worst_m)};
}

// 3 -------------------------------------------------------------------------

Verdict two_well_laminate() {
    const Mat A = Mat::Zero(2, 2);
    Mat B(2, 2);
    B << 1.0, 2.0, 0.5, 1.0; // (1, 0.5) (x) (1, 2)
    const Density W = catalog("double_well", 2, 2, 2.0, {{"A", matrix_to_json(A)}, {"B", matrix_to_json(B)}});
    const Mat D = B - A;
    double worst_value = 0.0, worst_cos = 1.0;
    int bad_depth = 0;
    for (int k = 0; k <= 10; ++k) {
        const double lambda = k / 10.0;
        const Mat F = A + lambda * D;
        const EnvelopeResult r = rank_one_envelope(W, F, 4);
        worst_value = std::max(worst_value, r.value.value());
        const auto& root = r.tree.root();
        if (k == 0 || k == 10) {
            // The wells themselves need no split.
            bad_depth += r.tree.depth() == 0 ? 0 : 1;
            continue;
        }
        if (r.tree.depth() != 1) {
            ++bad_depth;
            continue;
        }
        const Mat M = rank_one(root.a, root.b);
        worst_cos = std::min(worst_cos, std::abs((M.array() * D.array()).sum()) / (M.norm() * D.norm()));
    }
    const bool pass = worst_value <= 1e-6 && bad_depth == 0 && worst_cos >= 0.999;
    return {pass, "max value " + fmt(worst_value) + ", depth mismatches " + std::to_string(bad_depth) +
                      ", min cosine " + fmt(worst_cos)};
}

// 4 -------------------------------------------------------------------------

/// Exhaustive lamination on diagonal matrices of an isotropic 2x2 density: every
/// level minimizes the lower convex hull at s = 0 of s -> R(F + s M) over a dense
/// set of unit rank-one directions M and magnitudes s. Off-node values use the
/// signed singular values of the argument and bilinear interpolation.
class LaminationOracle {
public:
    LaminationOracle(Density W, double half_width, int nodes) : W_(std::move(W)), L_(half_width), n_(nodes) {
        h_ = 2.0 * L_ / (n_ - 1);
        for (int k = 1; k * 0.0625 <= 2.5 + 1e-12; ++k)
            mags_.push_back(k * 0.0625);
        for (double s = 3.0; s <= 6.0 + 1e-12; s += 0.5)
            mags_.push_back(s);
        constexpr int kAngles = 24;
        for (int i = 0; i < kAngles; ++i)
            for (int j = 0; j < kAngles; ++j) {
                const double ta = M_PI * i / kAngles, tb = M_PI * j / kAngles;
                Mat M(2, 2);
                M << std::cos(tb) * std::cos(ta), std::cos(tb) * std::sin(ta), std::sin(tb) * std::cos(ta),
                    std::sin(tb) * std::sin(ta);
                dirs_.push_back(M);
            }
        level_.assign(static_cast<std::size_t>(n_ * n_), 0.0);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                level_[idx(i, j)] = W_(diag(coord(i), coord(j))).value();
    }

    /// Advances the stored level by one lamination step at every node.
    void advance() {
        std::vector<double> next(level_.size());
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) {
                // Isotropy: (c1, c2), (c2, c1) and (-c1, -c2) are equivalent.
                const int ri = n_ - 1 - i, rj = n_ - 1 - j;
                if (std::make_pair(j, i) < std::make_pair(i, j)) {
                    next[idx(i, j)] = next[idx(j, i)];
                    continue;
                }
                if (std::make_pair(ri, rj) < std::make_pair(i, j) || std::make_pair(rj, ri) < std::make_pair(i, j)) {
                    const auto [a, b] = std::min(std::make_pair(ri, rj), std::make_pair(rj, ri));
                    next[idx(i, j)] = next[idx(a, b)];
                    continue;
                }
                next[idx(i, j)] = step(diag(coord(i), coord(j)));
            }
        level_ = std::move(next);
    }

    /// One more lamination step at a single matrix on top of the stored level.
    [[nodiscard]] double step(const Mat& F) const {
        double best = lookup(F);
        std::vector<std::pair<double, double>> pts;
        pts.reserve(2 * mags_.size() + 1);
        for (const Mat& M : dirs_) {
            pts.clear();
            for (auto it = mags_.rbegin(); it != mags_.rend(); ++it)
                pts.emplace_back(-*it, lookup(F - *it * M));
            pts.emplace_back(0.0, lookup(F));
            for (double s : mags_)
                pts.emplace_back(s, lookup(F + s * M));
            best = std::min(best, hull_at_zero(pts));
        }
        return best;
    }

    [[nodiscard]] double at_node(int i, int j) const { return level_[idx(i, j)]; }
    [[nodiscard]] double coord(int i) const { return -L_ + i * h_; }
    [[nodiscard]] int nodes() const { return n_; }

private:
    [[nodiscard]] std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i * n_ + j); }

    static Mat diag(double a, double b) {
        Mat F = Mat::Zero(2, 2);
        F(0, 0) = a;
        F(1, 1) = b;
        return F;
    }

    [[nodiscard]] double lookup(const Mat& G) const {
        Eigen::Matrix2d g = G;
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(g);
        const double s1 = svd.singularValues()(0), s2 = svd.singularValues()(1);
        const double x = g.determinant() < 0 ? -s2 : s2;
        const double y = s1;
        if (x < -L_ || x > L_ || y < -L_ || y > L_)
            return W_(G).value();
        const double u = (x + L_) / h_, v = (y + L_) / h_;
        const int i = std::min(static_cast<int>(u), n_ - 2), j = std::min(static_cast<int>(v), n_ - 2);
        const double fu = u - i, fv = v - j;
        const double c00 = level_[idx(i, j)], c10 = level_[idx(i + 1, j)], c01 = level_[idx(i, j + 1)],
                     c11 = level_[idx(i + 1, j + 1)];
        if (!std::isfinite(c00 + c10 + c01 + c11))
            return W_(G).value();
        return (1 - fu) * (1 - fv) * c00 + fu * (1 - fv) * c10 + (1 - fu) * fv * c01 + fu * fv * c11;
    }

    /// Lower convex hull of points sorted by s, evaluated at s = 0.
    static double hull_at_zero(const std::vector<std::pair<double, double>>& pts) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [sl, vl] : pts) {
            if (sl >= 0.0 || !std::isfinite(vl))
                continue;
            for (const auto& [sr, vr] : pts) {
                if (sr <= 0.0 || !std::isfinite(vr))
                    continue;
                const double t = -sl / (sr - sl);
                best = std::min(best, (1 - t) * vl + t * vr);
            }
        }
        return best;
    }

    Density W_;
    double L_;
    int n_;
    double h_ = 0.0;
    std::vector<double> mags_;
    std::vector<Mat> dirs_;
    std::vector<double> level_;
};

Verdict oracle_equivalence() {
    const Density W = catalog("kohn_strang", 2, 2);
    LaminationOracle oracle(W, 2.5, 41);
    oracle.advance();
    oracle.advance();

    std::mt19937_64 rng(4);
    std::set<std::pair<int, int>> chosen;
    const int lo = 8, hi = 32; // coordinates in [-1.5, 1.5]
    std::uniform_int_distribution<int> pick(lo, hi);
    while (chosen.size() < 50) {
        const int i = pick(rng), j = pick(rng);
        if (i == 20 && j == 20)
            continue;
        chosen.insert({i, j});
    }
    double worst = 0.0;
    for (const auto& [i, j] : chosen) {
        Mat F = Mat::Zero(2, 2);
        F(0, 0) = oracle.coord(i);
        F(1, 1) = oracle.coord(j);
        const double o3 = oracle.step(F);
        const double e3 = rank_one_envelope(W, F, 3).value.value();
        worst = std::max(worst, rel_gap(e3, o3));
    }
    return {worst <= 0.02, "max rel gap " + fmt(worst) + " over 50 nodes"};
}

// 5 -------------------------------------------------------------------------

Verdict growth_certificates() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::size_t violations = 0;
    double worst_identity = 0.0;
    for (int s = 0; s < 200; ++s) {
        const int n = s % 2 == 0 ? 2 : 3;
        const double p = 1.5 + 2.5 * u01(rng);
        const double alpha = 1.0 + 2.0 * u01(rng);
        const Density W = catalog("weak_det_barrier", n, n, p, {{"delta", 0.5}, {"c1", 1.0}, {"c2", 1.0}});
        const double beta = std::max(1.0, 1.0 / alpha) * (1.0 + u01(rng));
        Mat F = random_matrix(n, n, 2.0, rng);
        if (s % 5 == 0)
            F.row(0).setZero(); // rank-deficient
        try {
            const GrowthCertificate c = growth_certificate(W, F, alpha, beta);
            for (double v : c.leaf_v)
                violations += v >= alpha - 1e-10 ? 0 : 1;
            const auto r = c.laminate.residuals();
            worst_identity = std::max({worst_identity, r.barycenter, r.direction, r.weight_split, r.weight_sum});
            violations += c.laminate.valid(1e-10) ? 0 : 1;
            const double bound = growth_constant(n, alpha, beta, p) * growth_weight(F, p);
            violations += c.bound_value <= bound * (1.0 + 1e-12) ? 0 : 1;
        } catch (const Error&) {
            ++violations;
        }
    }
    const double c56 = growth_constant(3, 1.0, 1.0, 2.0);
    const bool pass = violations == 0 && c56 == 56.0;
    return {pass, std::to_string(violations) + " violations, max identity residual " + fmt(worst_identity) +
                      ", c(N=3) = " + fmt(c56)};
}

// 6 -------------------------------------------------------------------------

Verdict four_triangle() {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::size_t violations = 0;
    for (int s = 0; s < 1000; ++s) {
        const double p = s % 2 == 0 ? 2.0 : 1.5 + 2.0 * u01(rng);
        const Density W0 = catalog("cross_barrier", 3, 2, p);
        const double alpha = 1.0 + 2.0 * u01(rng);
        const double beta = W0.constants().beta.value();
        const double gamma = beta * std::pow(2.0, 2.0 * p + 1.0);
        Mat xi = random_matrix(3, 2, 3.0, rng);
        if (s % 10 == 0)
            xi.setZero();
        else if (s % 10 == 1)
            xi.col(1) = (u01(rng) - 0.5) * xi.col(0);
        else if (s % 10 == 2)
            xi.col(1).setZero();
        try {
            const FourPointBound st2 = four_triangle_bound_stage2(W0, xi, alpha, gamma);
            for (const Mat& G : st2.points) {
                const double m = std::min((G.col(0) + G.col(1)).norm(), (G.col(0) - G.col(1)).norm());
                violations += m >= alpha - 1e-10 * (1.0 + alpha) ? 0 : 1;
            }
            const CompositeBound c = four_triangle_composite(W0, xi, alpha, beta);
            const double cap = std::max(1.0, std::pow(alpha, p)) * gamma * std::pow(2.0, p + 1.0) * growth_weight(xi, p);
            violations += c.bound.is_finite() && c.bound.value() <= cap * (1.0 + 1e-12) ? 0 : 1;
        } catch (const Error&) {
            ++violations;
        }
    }
    return {violations == 0, std::to_string(violations) + " violations over 1000 samples"};
}

// 7 -------------------------------------------------------------------------

Verdict tiling_identity() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const int n = s % 2 == 0 ? 2 : 3;
        const Density W = s % 3 == 0 ? catalog("quadratic", n, n) : catalog("weak_det_barrier", n, n);
        const auto mesh = make_cell_mesh(n, n == 2 ? 4 : 2);
        std::vector<TilePiece> pieces;
        const int count = 1 + s % 3;
        for (int k = 0; k < count; ++k) {
            AffineTestField phi(mesh, n);
            for (std::size_t v = 0; v < mesh->node_count(); ++v)
                if (!mesh->boundary[v])
                    for (int c = 0; c < n; ++c)
                        phi.values(static_cast<Eigen::Index>(v), c) = 0.2 * (u01(rng) - 0.5);
            const double weight = 0.2 + u01(rng);
            const Mat F = random_matrix(n, n, 1.5, rng) + 2.0 * Mat::Identity(n, n);
            pieces.push_back(TilePiece{weight, F, phi});
        }
        const ExtReal base = tile_test_field(W, pieces, 1);
        for (int scale : {2, 4, 8}) {
            const ExtReal v = tile_test_field(W, pieces, scale);
            if (v.is_infinite() != base.is_infinite())
                worst = std::numeric_limits<double>::infinity();
            else if (v.is_finite())
                worst = std::max(worst, std::abs(v.value() - base.value()));
        }
    }
    return {worst <= 1e-12, "max deviation across n in {1,2,4,8}: " + fmt(worst)};
}

// 8 -------------------------------------------------------------------------

Verdict membrane_reduction() {
    std::mt19937_64 rng(8);
    const Density W = catalog("det_barrier", 3, 3);
    const PlaneDensity W0 = reduce_density(W);
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const Mat G = random_matrix(3, 3, 1.0, rng);
        const Eigen::HouseholderQR<Eigen::Matrix3d> qr{Eigen::Matrix3d(G)};
        const Eigen::Matrix3d Q = qr.householderQ();
        const Mat xi = Q.leftCols(2);
        const double oracle = xi.squaredNorm() + std::pow(2.0, -2.0 / 3.0) + std::pow(2.0, 1.0 / 3.0);
        worst = std::max(worst, rel_gap(W0.density(xi).value(), oracle));
    }
    std::size_t inexact = 0;
    std::uniform_int_distribution<int> pick(0, 4);
    const double levels[] = {0.0, 0.5, -0.5, 1.0, -2.0};
    for (int s = 0; s < 100; ++s) {
        Mat xi = random_matrix(3, 2, 2.0, rng);
        if (s % 3 == 0)
            xi.col(1) = levels[pick(rng)] * xi.col(0);
        else if (s % 3 == 1)
            xi.col(0).setZero();
        else
            xi.setZero();
        const ExtReal v = W0.density(xi);
        inexact += v == ExtReal::infinity() ? 0 : 1;
    }
    return {worst <= 1e-4 && inexact == 0,
            "max rel error " + fmt(worst) + " at orthonormal xi, " + std::to_string(inexact) + "/100 not +inf"};
}

// 9 -------------------------------------------------------------------------

ThinFilmSpec film_setup(bool bilinear) {
    nlohmann::json j = {{"sigma", {0.0, 1.0, 0.0, 1.0}},
                        {"psi", {{"gradient", {{1.0, 0.0}, {0.0, 1.0}, {0.0, 0.0}}}}}};
    if (bilinear)
        j["director"] = {{"type", "bilinear"},
                         {"corners", {{0.0, 0.0, 1.0}, {0.3, 0.0, 1.2}, {0.0, -0.2, 0.8}, {0.2, 0.1, 1.5}}}};
    else
        j["director"] = {{"type", "constant"}, {"value", {0.1, 0.2, 1.0}}};
    return thin_film_spec_from_json(j);
}

Verdict recovery_convergence_check() {
    const Density W = catalog("det_barrier", 3, 3);
    const ThinFilmSpec flat = film_setup(false);
    const ExtReal e0 = film_energy(W, flat, flat.eps_list.front());
    double spread = 0.0;
    for (double eps : flat.eps_list)
        spread = std::max(spread, std::abs(film_energy(W, flat, eps).value() - e0.value()));
    const RecoveryReport rep = recovery_convergence(W, film_setup(true));
    const double last_ratio = rep.rows.back().ratio;
    const bool pass = spread <= 1e-12 && rep.decreasing && last_ratio <= 0.6;
    return {pass, "constant director spread " + fmt(spread) + ", bilinear decreasing " +
                      (rep.decreasing ? "yes" : "no") + ", final ratio " + fmt(last_ratio)};
}

// 10 ------------------------------------------------------------------------

Verdict commutation() {
    std::mt19937_64 rng(10);
    std::vector<Mat> samples;
    for (int s = 0; s < 10; ++s) {
        Mat xi = random_matrix(3, 2, 1.0, rng);
        xi(0, 0) += 1.0;
        xi(1, 1) += 1.0;
        samples.push_back(xi);
    }
    std::string detail;
    bool pass = true;
    for (const std::string family : {"quadratic", "weak_det_barrier"}) {
        const CommutationReport r = commutation_check(catalog(family, 3, 3), samples);
        pass = pass && r.flagged == 0 && r.max_gap <= 0.05;
        const auto& s0 = r.samples.front();
        detail += family + ": max gap " + fmt(r.max_gap) + " (first sample " + s0.path_a.to_string() + " vs " +
                  s0.path_b.to_string() + "); ";
    }
    detail += "diagnostic only";
    return {pass, detail};
}

// 11 ------------------------------------------------------------------------

Verdict determinism() {
    std::string outputs[2];
    int codes[2];
    for (int k = 0; k < 2; ++k) {
        std::ostringstream out, err;
        codes[k] = cli::run({"verify", "--suite", "all", "--seed", "7"}, out, err);
        outputs[k] = out.str();
    }
    const bool same = outputs[0] == outputs[1] && !outputs[0].empty();
    return {same && codes[0] == codes[1],
            std::string(same ? "identical" : "different") + " artifacts, exit " + std::to_string(codes[0]) + "/" +
                std::to_string(codes[1]) + ", " + std::to_string(outputs[0].size()) + " bytes"};
}

struct Criterion {
    int id;
    std::string name;
    std::function<Verdict()> run;
    double time_limit_s; ///< 0 = no runtime criterion
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "monotone hierarchy", monotone_hierarchy, 120.0},
        {2, "convex fixed point", convex_fixed_point, 0.0},
        {3, "two-well laminate exactness", two_well_laminate, 0.0},
        {4, "brute-force oracle equivalence", oracle_equivalence, 300.0},
        {5, "growth certificate exactness", growth_certificates, 0.0},
        {6, "four-triangle certificates", four_triangle, 0.0},
        {7, "tiling identity", tiling_identity, 0.0},
        {8, "membrane reduction", membrane_reduction, 0.0},
        {9, "recovery convergence", recovery_convergence_check, 60.0},
        {10, "commutation diagnostic", commutation, 0.0},
        {11, "determinism", determinism, 0.0},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i)
        only.insert(std::stoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && only.count(c.id) == 0)
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.time_limit_s > 0.0 && secs > c.time_limit_s) {
            v.pass = false;
            v.detail += "; runtime above " + fmt(c.time_limit_s) + " s";
        }
        std::printf("[%s] %2d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), v.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
