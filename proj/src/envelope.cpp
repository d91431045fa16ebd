#include "envkit/envelope.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"
#include "envkit/optimize.hpp"
#include "envkit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

namespace envkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Grid coordinates closer than this (in units of the axis step) snap to the node.
constexpr double kSnap = 1e-11;

int default_count(int dim, bool for_a) {
    switch (dim) {
    case 1:
        return 1;
    case 2:
        return for_a ? 64 : 32;
    default:
        return for_a ? 128 : 64;
    }
}

std::vector<Vec> orthonormal_complement(const Vec& u) {
    const int n = static_cast<int>(u.size());
    std::vector<Vec> basis;
    for (int k = 0; k < n && static_cast<int>(basis.size()) < n - 1; ++k) {
        Vec e = Vec::Zero(n);
        e(k) = 1.0;
        e -= e.dot(u) * u;
        for (const auto& q : basis)
            e -= e.dot(q) * q;
        const double len = e.norm();
        if (len > 1e-6)
            basis.push_back(e / len);
    }
    return basis;
}

ExtReal combine(double t, ExtReal minus, ExtReal plus) {
    return minus.scaled(1.0 - t) + plus.scaled(t);
}

/// Ordering key of a candidate split: objective, then |b|, then t, then direction index.
struct Candidate {
    double value = kInf;
    double s_minus = 0.0;
    double s_plus = 0.0;
    int index = -1;
    Vec a;
    Vec d;

    [[nodiscard]] double width() const { return s_plus - s_minus; }
    [[nodiscard]] double t() const { return -s_minus / width(); }
};

bool better(const Candidate& x, const Candidate& y) {
    if (x.value != y.value)
        return x.value < y.value;
    if (x.width() != y.width())
        return x.width() < y.width();
    if (x.t() != y.t())
        return x.t() < y.t();
    return x.index < y.index;
}

struct LinePoint {
    double s;
    double g;
};

/// Lower convex hull of the samples evaluated at s = 0. Returns false when the
/// hull does not straddle 0 or when s = 0 itself is a hull vertex.
bool hull_at_zero(const std::vector<LinePoint>& pts, double& value, double& s_minus, double& s_plus) {
    static thread_local std::vector<LinePoint> hull;
    hull.clear();
    for (const auto& p : pts) {
        while (hull.size() >= 2) {
            const auto& a = hull[hull.size() - 2];
            const auto& b = hull[hull.size() - 1];
            const double cross = (b.s - a.s) * (p.g - a.g) - (b.g - a.g) * (p.s - a.s);
            if (cross <= 0.0)
                hull.pop_back();
            else
                break;
        }
        hull.push_back(p);
    }
    for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
        const auto& lo = hull[i];
        const auto& hi = hull[i + 1];
        if (lo.s == 0.0 || hi.s == 0.0)
            return false;
        if (lo.s < 0.0 && hi.s > 0.0) {
            s_minus = lo.s;
            s_plus = hi.s;
            value = (hi.s * lo.g - lo.s * hi.g) / (hi.s - lo.s);
            return true;
        }
    }
    return false;
}

} // namespace

std::string to_string(StepStatus s) {
    switch (s) {
    case StepStatus::interior:
        return "interior";
    case StepStatus::boundary_t0:
        return "boundary_t0";
    case StepStatus::boundary_t1:
        return "boundary_t1";
    case StepStatus::all_infinite:
        return "all_infinite";
    }
    return "unknown";
}

OptConfig opt_config_from_json(const nlohmann::json& j, OptConfig c) {
    if (!j.is_object())
        throw ConfigError("opt config must be a JSON object");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key))
                field = j[key].get<std::decay_t<decltype(field)>>();
        };
        get("directions_a", c.directions_a);
        get("directions_b", c.directions_b);
        get("b_max_factor", c.b_max_factor);
        get("inner_samples", c.inner_samples);
        get("outer_samples", c.outer_samples);
        get("refine_lines", c.refine_lines);
        get("refine_evals", c.refine_evals);
        get("tol_conv", c.tol_conv);
        get("tol_opt", c.tol_opt);
        get("min_gain", c.min_gain);
        get("inner_directions_a", c.inner_directions_a);
        get("inner_directions_b", c.inner_directions_b);
        get("max_recursive_depth", c.max_recursive_depth);
        get("table_points", c.table_points);
        get("max_tree_leaves", c.max_tree_leaves);
        get("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("opt config: ") + e.what());
    }
    if (c.b_max_factor <= 0.0 || c.inner_samples < 1 || c.outer_samples < 0 || c.table_points < 3)
        throw ConfigError("opt config: invalid sampling settings");
    return c;
}

nlohmann::json to_json(const OptConfig& c) {
    return {{"directions_a", c.directions_a},
            {"directions_b", c.directions_b},
            {"b_max_factor", c.b_max_factor},
            {"inner_samples", c.inner_samples},
            {"outer_samples", c.outer_samples},
            {"refine_lines", c.refine_lines},
            {"refine_evals", c.refine_evals},
            {"tol_conv", c.tol_conv},
            {"tol_opt", c.tol_opt},
            {"min_gain", c.min_gain},
            {"inner_directions_a", c.inner_directions_a},
            {"inner_directions_b", c.inner_directions_b},
            {"max_recursive_depth", c.max_recursive_depth},
            {"table_points", c.table_points},
            {"max_tree_leaves", c.max_tree_leaves},
            {"seed", c.seed}};
}

std::vector<Vec> sphere_design(int dim, int count) {
    std::vector<Vec> out;
    if (dim == 1) {
        out.push_back(Vec::Ones(1));
        return out;
    }
    if (dim == 2) {
        for (int k = 0; k < count; ++k) {
            const double th = std::numbers::pi * k / count;
            Vec v(2);
            v << std::cos(th), std::sin(th);
            out.push_back(v);
        }
        return out;
    }
    for (int k = 0; k < dim && k < count; ++k) {
        Vec e = Vec::Zero(dim);
        e(k) = 1.0;
        out.push_back(e);
    }
    const int rest = count - static_cast<int>(out.size());
    if (dim == 3) {
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int k = 0; k < rest; ++k) {
            const double z = (k + 0.5) / rest;
            const double r = std::sqrt(1.0 - z * z);
            const double phi = golden * k;
            Vec v(3);
            v << r * std::cos(phi), r * std::sin(phi), z;
            out.push_back(v);
        }
        return out;
    }
    std::mt19937_64 rng(0x2545f4914f6cdd1dULL);
    std::normal_distribution<double> normal;
    for (int k = 0; k < rest; ++k) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i)
            v(i) = normal(rng);
        for (int i = 0; i < dim; ++i) {
            if (v(i) != 0.0) {
                if (v(i) < 0.0)
                    v = -v;
                break;
            }
        }
        out.push_back(v / v.norm());
    }
    return out;
}

RankOneStepResult rank_one_step(const Evaluable& h, const Mat& F, const OptConfig& cfg, double h_step) {
    const int m = static_cast<int>(F.rows());
    const int n = static_cast<int>(F.cols());
    const auto A = sphere_design(n, cfg.directions_a > 0 ? cfg.directions_a : default_count(n, true));
    const auto D = sphere_design(m, cfg.directions_b > 0 ? cfg.directions_b : default_count(m, false));
    return rank_one_step(h, F, cfg, h_step, A, D);
}

RankOneStepResult rank_one_step(const Evaluable& h, const Mat& F, const OptConfig& cfg, double h_step,
                                const std::vector<Vec>& design_a, const std::vector<Vec>& design_b) {
    const int m = static_cast<int>(F.rows());
    const int n = static_cast<int>(F.cols());
    const ExtReal hF = h(F);
    const double f_norm = F.norm();
    const double b_max = cfg.b_max_factor * (1.0 + f_norm);
    if (h_step <= 0.0)
        h_step = 2.0 * (1.0 + f_norm) / cfg.inner_samples;

    std::vector<double> offsets;
    for (int k = 1; k <= cfg.inner_samples && k * h_step <= 0.5 * b_max; ++k)
        offsets.push_back(k * h_step);
    {
        const double s_in = offsets.empty() ? h_step : offsets.back();
        const double s_out = 0.5 * b_max;
        if (s_out > 1.05 * s_in)
            for (int j = 1; j <= cfg.outer_samples; ++j)
                offsets.push_back(s_in * std::pow(s_out / s_in, static_cast<double>(j) / cfg.outer_samples));
    }

    const int lines = static_cast<int>(design_a.size() * design_b.size());
    std::vector<Candidate> found;
    std::vector<LinePoint> pts;
    pts.reserve(2 * offsets.size() + 1);
    Mat G(m, n);
    for (int li = 0; li < lines; ++li) {
        const Vec& a = design_a[static_cast<std::size_t>(li) / design_b.size()];
        const Vec& d = design_b[static_cast<std::size_t>(li) % design_b.size()];
        const Mat M = rank_one(a, d);
        pts.clear();
        for (auto it = offsets.rbegin(); it != offsets.rend(); ++it) {
            G = F - (*it) * M;
            const ExtReal g = h(G);
            if (g.is_finite())
                pts.push_back({-*it, g.value()});
        }
        if (hF.is_finite())
            pts.push_back({0.0, hF.value()});
        for (double s : offsets) {
            G = F + s * M;
            const ExtReal g = h(G);
            if (g.is_finite())
                pts.push_back({s, g.value()});
        }
        // The point of the line nearest the origin, where many densities have a well.
        const double s0 = -(F.cwiseProduct(M)).sum() / M.squaredNorm();
        if (std::abs(s0) > 1e-12 * (1.0 + f_norm) && std::abs(s0) <= 0.5 * b_max) {
            G = F + s0 * M;
            const ExtReal g = h(G);
            if (g.is_finite()) {
                const auto pos = std::lower_bound(pts.begin(), pts.end(), s0,
                                                  [](const LinePoint& p, double s) { return p.s < s; });
                if (pos == pts.end() || pos->s != s0)
                    pts.insert(pos, {s0, g.value()});
            }
        }
        Candidate c;
        if (!hull_at_zero(pts, c.value, c.s_minus, c.s_plus))
            continue;
        c.index = li;
        c.a = a;
        c.d = d;
        found.push_back(c);
    }

    RankOneStepResult out;
    out.value = hF;
    out.a = design_a.front();
    out.b = Vec::Zero(m);
    out.t = 0.0;
    out.status = hF.is_finite() ? StepStatus::boundary_t0 : StepStatus::all_infinite;
    if (found.empty())
        return out;

    std::sort(found.begin(), found.end(), better);

    // Polish the best lines: endpoints and direction tilts by compass search.
    const double tilt_a = std::numbers::pi / std::max<std::size_t>(design_a.size(), 1);
    const double tilt_d = std::numbers::pi / std::max<std::size_t>(design_b.size(), 1);
    Candidate best = found.front();
    const int polish = std::min<int>(cfg.refine_lines, static_cast<int>(found.size()));
    for (int r = 0; r < polish; ++r) {
        const Candidate start = found[static_cast<std::size_t>(r)];
        const auto Ta = orthonormal_complement(start.a);
        const auto Td = orthonormal_complement(start.d);
        const int dims = 2 + static_cast<int>(Ta.size() + Td.size());
        auto unpack = [&](const Eigen::VectorXd& y, Candidate& c) {
            c.s_minus = start.s_minus + y(0) * h_step;
            c.s_plus = start.s_plus + y(1) * h_step;
            Vec a = start.a;
            for (std::size_t k = 0; k < Ta.size(); ++k)
                a += y(2 + static_cast<int>(k)) * tilt_a * Ta[k];
            Vec d = start.d;
            for (std::size_t k = 0; k < Td.size(); ++k)
                d += y(2 + static_cast<int>(Ta.size() + k)) * tilt_d * Td[k];
            c.a = a / a.norm();
            c.d = d / d.norm();
            c.index = start.index;
        };
        auto objective = [&](const Eigen::VectorXd& y) {
            Candidate c;
            unpack(y, c);
            if (!(c.s_minus < 0.0 && c.s_plus > 0.0) || c.width() > b_max)
                return kInf;
            const Mat M = rank_one(c.a, c.d);
            const ExtReal lo = h(F + c.s_minus * M);
            const ExtReal hi = h(F + c.s_plus * M);
            if (lo.is_infinite() || hi.is_infinite())
                return kInf;
            return (c.s_plus * lo.value() - c.s_minus * hi.value()) / c.width();
        };
        CompassOptions opts;
        opts.initial_step = 0.5;
        opts.min_step = 1e-7;
        opts.max_evals = cfg.refine_evals;
        const CompassResult res = compass_search(objective, Eigen::VectorXd::Zero(dims), opts);
        Candidate c;
        unpack(res.x, c);
        c.value = res.f;
        if (std::isfinite(c.value) && better(c, best))
            best = c;
    }

    // Re-evaluate at the stored optimizer exactly as the laminate tree will.
    const double width = best.width();
    const double t = best.t();
    const Vec b = width * best.d;
    const Mat M = rank_one(best.a, b);
    const ExtReal value = combine(t, h(F - t * M), h(F + (1.0 - t) * M));
    if (!(t > 0.0 && t < 1.0) || value.is_infinite())
        return out;
    const bool gain = hF.is_infinite() || value.value() < hF.value() - cfg.min_gain * (1.0 + hF.value());
    if (!gain)
        return out;
    out.value = value;
    out.t = t;
    out.a = best.a;
    out.b = b;
    out.direction_index = best.index;
    out.status = StepStatus::interior;
    return out;
}

// ---------------------------------------------------------------- grids

GridSpec GridSpec::diagonal(int m, int n, double lo, double hi, int count) {
    GridSpec g;
    g.m = m;
    g.n = n;
    g.axes.assign(static_cast<std::size_t>(m * n), GridAxis{0.0, 0.0, 1});
    for (int i = 0; i < std::min(m, n); ++i)
        g.axes[static_cast<std::size_t>(i * n + i)] = GridAxis{lo, hi, count};
    return g;
}

std::size_t GridSpec::node_count() const {
    std::size_t total = 1;
    for (const auto& ax : axes) {
        total *= static_cast<std::size_t>(ax.count);
        if (total > std::size_t{1} << 40)
            return total;
    }
    return total;
}

Mat GridSpec::node(std::size_t index) const {
    Mat F(m, n);
    for (int k = m * n - 1; k >= 0; --k) {
        const auto& ax = axes[static_cast<std::size_t>(k)];
        const auto c = static_cast<std::size_t>(ax.count);
        F(k / n, k % n) = ax.at(static_cast<int>(index % c));
        index /= c;
    }
    return F;
}

bool GridSpec::is_diagonal() const {
    for (int k = 0; k < m * n; ++k) {
        const auto& ax = axes[static_cast<std::size_t>(k)];
        const bool diag = (k / n) == (k % n);
        if (diag && ax.count < 2)
            return false;
        if (!diag && (ax.count != 1 || ax.lo != 0.0))
            return false;
    }
    return true;
}

std::vector<int> GridSpec::varying_axes() const {
    std::vector<int> out;
    for (int k = 0; k < m * n; ++k)
        if (axes[static_cast<std::size_t>(k)].count > 1)
            out.push_back(k);
    return out;
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("grid spec must be a JSON object");
    try {
        const int m = j.value("m", 2);
        const int n = j.value("N", 2);
        if (m < 1 || n < 1 || m > kMaxDim || n > kMaxDim)
            throw ConfigError("grid spec: dims outside 1..4");
        GridSpec g;
        if (j.contains("diagonal")) {
            const auto& d = j["diagonal"];
            g = GridSpec::diagonal(m, n, d.at("lo").get<double>(), d.at("hi").get<double>(), d.at("count").get<int>());
        } else if (j.contains("axes")) {
            const auto& axes = j["axes"];
            if (!axes.is_array() || static_cast<int>(axes.size()) != m * n)
                throw ConfigError("grid spec: \"axes\" must list m*N axes");
            g.m = m;
            g.n = n;
            for (const auto& ax : axes) {
                GridAxis a;
                a.lo = ax.at("lo").get<double>();
                a.hi = ax.value("hi", a.lo);
                a.count = ax.value("count", 1);
                g.axes.push_back(a);
            }
        } else {
            throw ConfigError("grid spec needs \"diagonal\" or \"axes\"");
        }
        for (const auto& ax : g.axes)
            if (ax.count < 1 || !(ax.hi >= ax.lo) || (ax.count > 1 && !(ax.hi > ax.lo)) || !std::isfinite(ax.lo) ||
                !std::isfinite(ax.hi))
                throw ConfigError("grid spec: invalid axis");
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("grid spec: ") + e.what());
    }
}

nlohmann::json to_json(const GridSpec& g) {
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& ax : g.axes)
        axes.push_back({{"lo", ax.lo}, {"hi", ax.hi}, {"count", ax.count}});
    return {{"m", g.m}, {"N", g.n}, {"axes", axes}};
}

std::string EnvelopeTable::to_csv() const {
    std::ostringstream os;
    for (int i = 0; i < grid.m; ++i)
        for (int j = 0; j < grid.n; ++j)
            os << 'F' << (i + 1) << (j + 1) << ',';
    for (int k = 0; k <= iterations; ++k)
        os << 'R' << k << ',';
    os << "converged\n";
    for (std::size_t idx = 0; idx < values.size(); ++idx) {
        const Mat F = grid.node(idx);
        for (int i = 0; i < grid.m; ++i)
            for (int j = 0; j < grid.n; ++j)
                os << format_double(F(i, j)) << ',';
        for (const auto& v : values[idx])
            os << format_double(v.value()) << ',';
        os << (converged[idx] ? 1 : 0) << '\n';
    }
    return os.str();
}

nlohmann::json EnvelopeTable::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t idx = 0; idx < values.size(); ++idx) {
        nlohmann::json vals = nlohmann::json::array();
        for (const auto& v : values[idx])
            vals.push_back(ext_to_json(v));
        nodes.push_back({{"matrix", matrix_to_json(grid.node(idx))}, {"values", vals}, {"converged", bool(converged[idx])}});
    }
    return {{"grid", envkit::to_json(grid)}, {"iterations", iterations}, {"nodes", nodes}};
}

nlohmann::json to_json(const EnvelopeResult& r) {
    nlohmann::json its = nlohmann::json::array();
    for (const auto& v : r.iterates)
        its.push_back(ext_to_json(v));
    return {{"value", ext_to_json(r.value)},   {"iterates", its},
            {"converged", r.converged},         {"iterations", r.iterations},
            {"tree_exact", r.tree_exact},       {"mode", r.mode},
            {"tree_depth", r.tree.depth()},     {"tree_leaves", r.tree.leaf_count()},
            {"tree", to_json(r.tree)}};
}

bool tabulable(const Density& W) {
    return W.isotropic() && W.m() >= W.n() && W.n() >= 2 && W.m() * W.n() <= 6;
}

GridSpec auto_grid(const Density& W, const Mat& F, const OptConfig& cfg) {
    const Vec c = canonical_diagonal(F);
    const double reach = c.cwiseAbs().maxCoeff();
    double B = 2.0;
    while (B < 1.25 * reach)
        B *= 2.0;
    int points = cfg.table_points | 1;
    if (W.m() > W.n())
        return GridSpec::diagonal(W.m(), W.n(), 0.0, B, (points + 1) / 2);
    return GridSpec::diagonal(W.m(), W.n(), -B, B, points);
}

// ---------------------------------------------------------------- engine

struct RankOneEngine::Impl {
    struct Split {
        bool taken = false;
        double t = 0.0;
        Vec a;
        Vec b;
    };

    Density W;
    OptConfig cfg;
    bool gridded = false;
    GridSpec grid;
    bool canonical = false;
    std::vector<int> var_axes;
    std::vector<double> lo, step;
    std::vector<int> count;
    std::vector<std::size_t> stride;
    std::size_t nodes = 0;
    std::vector<std::size_t> rep;      // representative node of each node
    std::vector<std::size_t> reps;     // list of representatives
    double h_grid = 0.0;
    std::vector<std::vector<double>> levels;
    std::vector<std::vector<Split>> splits; // splits[level][node], level >= 1
    int stationary_level = -1;             // first level identical to its predecessor
    std::vector<Vec> design_a, design_b, inner_a, inner_b;

    // Nested mode memo: key = level + raw matrix bytes.
    struct Memo {
        double value;
        Split split;
    };
    std::unordered_map<std::string, Memo> memo;

    Impl(Density w, OptConfig c) : W(std::move(w)), cfg(c) { init_designs(); }

    void init_designs() {
        const int m = W.m(), n = W.n();
        design_a = sphere_design(n, cfg.directions_a > 0 ? cfg.directions_a : default_count(n, true));
        design_b = sphere_design(m, cfg.directions_b > 0 ? cfg.directions_b : default_count(m, false));
        inner_a = sphere_design(n, n == 1 ? 1 : cfg.inner_directions_a);
        inner_b = sphere_design(m, m == 1 ? 1 : cfg.inner_directions_b);
    }

    void init_grid(GridSpec g) {
        if (g.m != W.m() || g.n != W.n())
            throw DimensionError("grid shape does not match the density");
        grid = std::move(g);
        gridded = true;
        nodes = grid.node_count();
        if (nodes > 1000000)
            throw ResourceError("grid has " + std::to_string(nodes) + " nodes; limit is 1e6");
        var_axes = grid.varying_axes();
        if (var_axes.empty())
            throw ConfigError("grid has no varying axis");
        canonical = W.isotropic() && W.m() >= W.n() && grid.is_diagonal();
        if (canonical) {
            const auto& first = grid.axes[0];
            for (int k : var_axes) {
                const auto& ax = grid.axes[static_cast<std::size_t>(k)];
                if (ax.lo != first.lo || ax.hi != first.hi || ax.count != first.count)
                    canonical = false;
            }
        }
        const std::size_t D = var_axes.size();
        lo.resize(D);
        step.resize(D);
        count.resize(D);
        stride.assign(D, 1);
        h_grid = kInf;
        for (std::size_t k = 0; k < D; ++k) {
            const auto& ax = grid.axes[static_cast<std::size_t>(var_axes[k])];
            lo[k] = ax.lo;
            step[k] = ax.step();
            count[k] = ax.count;
            h_grid = std::min(h_grid, step[k]);
        }
        for (std::size_t k = D; k-- > 1;)
            stride[k - 1] = stride[k] * static_cast<std::size_t>(count[k]);

        rep.resize(nodes);
        reps.clear();
        for (std::size_t i = 0; i < nodes; ++i) {
            rep[i] = i;
            if (canonical) {
                std::size_t j;
                if (node_of(coords(grid.node(i)), j))
                    rep[i] = j;
            }
            if (rep[i] == i)
                reps.push_back(i);
        }
        // A node whose canonical image is another node which is not itself canonical
        // cannot happen on a symmetric grid; guard anyway by computing it directly.
        for (std::size_t i = 0; i < nodes; ++i)
            if (rep[rep[i]] != rep[i]) {
                rep[i] = i;
                reps.push_back(i);
            }
        std::sort(reps.begin(), reps.end());
        reps.erase(std::unique(reps.begin(), reps.end()), reps.end());

        levels.assign(1, std::vector<double>(nodes));
        std::vector<double>& l0 = levels[0];
        // Every node keeps its own exact W so that R_k <= W holds bitwise, not only
        // up to the rounding of the symmetry map.
        parallel_for(nodes, [&](std::size_t i) { l0[i] = W(grid.node(i)).value(); });
        splits.assign(1, {});
    }

    /// Coordinates of G along the varying axes, or an empty vector if G is off the grid subspace.
    std::vector<double> coords(const Mat& G) const {
        std::vector<double> c(var_axes.size());
        if (canonical) {
            const Vec d = canonical_diagonal(G);
            for (std::size_t k = 0; k < c.size(); ++k)
                c[k] = d(static_cast<int>(k));
            return c;
        }
        const int n = grid.n;
        for (int k = 0; k < grid.m * n; ++k) {
            const auto& ax = grid.axes[static_cast<std::size_t>(k)];
            if (ax.count == 1 && std::abs(G(k / n, k % n) - ax.lo) > 1e-12 * (1.0 + std::abs(ax.lo)))
                return {};
        }
        for (std::size_t k = 0; k < c.size(); ++k)
            c[k] = G(var_axes[k] / n, var_axes[k] % n);
        return c;
    }

    struct Cell {
        std::vector<int> base;
        std::vector<double> frac;
    };

    bool locate(const std::vector<double>& c, Cell& cell) const {
        if (c.empty())
            return false;
        const std::size_t D = c.size();
        cell.base.resize(D);
        cell.frac.resize(D);
        for (std::size_t k = 0; k < D; ++k) {
            const double x = (c[k] - lo[k]) / step[k];
            if (!(x >= -kSnap && x <= count[k] - 1 + kSnap))
                return false;
            int i = static_cast<int>(std::floor(x));
            double f = x - i;
            if (f < kSnap) {
                f = 0.0;
            } else if (f > 1.0 - kSnap) {
                f = 0.0;
                ++i;
            }
            i = std::clamp(i, 0, count[k] - 1);
            if (i == count[k] - 1 && f > 0.0)
                return false;
            cell.base[k] = i;
            cell.frac[k] = f;
        }
        return true;
    }

    bool node_of(const std::vector<double>& c, std::size_t& index) const {
        Cell cell;
        if (!locate(c, cell))
            return false;
        index = 0;
        for (std::size_t k = 0; k < c.size(); ++k) {
            if (cell.frac[k] != 0.0)
                return false;
            index += stride[k] * static_cast<std::size_t>(cell.base[k]);
        }
        return true;
    }

    /// Interpolated value of a level over a located cell; +inf if a weighted corner is +inf.
    double interpolate(const Cell& cell, int level) const {
        const auto& vals = levels[static_cast<std::size_t>(level)];
        std::size_t base = 0;
        int active[16];
        int na = 0;
        for (std::size_t k = 0; k < cell.base.size(); ++k) {
            base += stride[k] * static_cast<std::size_t>(cell.base[k]);
            if (cell.frac[k] > 0.0)
                active[na++] = static_cast<int>(k);
        }
        double total = 0.0;
        for (int mask = 0; mask < (1 << na); ++mask) {
            double w = 1.0;
            std::size_t idx = base;
            for (int q = 0; q < na; ++q) {
                const int k = active[q];
                if (mask & (1 << q)) {
                    w *= cell.frac[static_cast<std::size_t>(k)];
                    idx += stride[static_cast<std::size_t>(k)];
                } else {
                    w *= 1.0 - cell.frac[static_cast<std::size_t>(k)];
                }
            }
            const double v = vals[idx];
            if (std::isinf(v))
                return kInf;
            total += w * v;
        }
        return total;
    }

    /// Tabulated level at G, with exact evaluation off the grid or next to +inf nodes.
    ExtReal lookup(const Mat& G, int level) const {
        Cell cell;
        if (locate(coords(G), cell)) {
            const double v = interpolate(cell, level);
            if (std::isfinite(v))
                return ExtReal(v);
        }
        return W(G);
    }

    void ensure_level(int level) {
        while (static_cast<int>(levels.size()) <= level) {
            const int j = static_cast<int>(levels.size());
            if (stationary_level >= 0) {
                levels.push_back(levels.back());
                splits.push_back(std::vector<Split>(nodes));
                continue;
            }
            std::vector<double> next = levels.back();
            std::vector<Split> sp(nodes);
            Evaluable prev = [this, j](const Mat& X) { return lookup(X, j - 1); };
            parallel_for(reps.size(), [&](std::size_t r) {
                const std::size_t i = reps[r];
                const RankOneStepResult res =
                    rank_one_step(prev, grid.node(i), cfg, h_grid, design_a, design_b);
                if (res.status == StepStatus::interior && res.value.value() < next[i]) {
                    next[i] = res.value.value();
                    sp[i] = Split{true, res.t, res.a, res.b};
                }
            });
            bool changed = false;
            for (std::size_t i = 0; i < nodes; ++i) {
                next[i] = std::min(next[i], next[rep[i]]);
                changed = changed || next[i] != levels.back()[i];
            }
            levels.push_back(std::move(next));
            splits.push_back(std::move(sp));
            if (!changed)
                stationary_level = j;
        }
    }

    [[nodiscard]] bool stationary_at(int level) const { return stationary_level >= 0 && level >= stationary_level; }

    // ------------------------------------------------------------ nested mode

    static std::string key(const Mat& G, int level) {
        std::string k(sizeof(int) + sizeof(double) * static_cast<std::size_t>(G.size()), '\0');
        std::memcpy(k.data(), &level, sizeof(int));
        std::memcpy(k.data() + sizeof(int), G.data(), sizeof(double) * static_cast<std::size_t>(G.size()));
        return k;
    }

    ExtReal nested(const Mat& G, int level) {
        if (level == 0)
            return W(G);
        const std::string k = key(G, level);
        if (auto it = memo.find(k); it != memo.end())
            return ExtReal(it->second.value);
        const ExtReal prev = nested(G, level - 1);
        Evaluable h = [this, level](const Mat& X) { return nested(X, level - 1); };
        OptConfig inner = cfg;
        inner.refine_lines = 0;
        inner.inner_samples = std::max(4, cfg.inner_samples / 2);
        inner.outer_samples = std::min(cfg.outer_samples, 4);
        const RankOneStepResult res = rank_one_step(h, G, inner, 0.0, inner_a, inner_b);
        Memo entry{prev.value(), {}};
        if (res.status == StepStatus::interior && res.value < prev) {
            entry.value = res.value.value();
            entry.split = Split{true, res.t, res.a, res.b};
        }
        memo.emplace(k, entry);
        return ExtReal(entry.value);
    }

    // ------------------------------------------------------------ tree expansion

    struct Expander {
        Impl& self;
        LaminateTree& tree;
        bool exact = true;

        bool budget() {
            if (tree.leaf_count() >= self.cfg.max_tree_leaves) {
                exact = false;
                return false;
            }
            return true;
        }

        /// Frame with G = U diag(c) V for the canonical representative c.
        void frame(const Mat& G, Mat& U, Mat& V, Vec& c) const {
            const SvdFactorization f = svd_ascending(G);
            const int m = static_cast<int>(G.rows()), n = static_cast<int>(G.cols());
            Mat block = Mat::Identity(m, m);
            block.topLeftCorner(n, n) = f.Q.transpose();
            U = f.P * block;
            V = f.Q;
            c = f.sv;
            if (m == n && det(G) < 0.0) {
                U.col(0) *= -1.0;
                c(0) = -c(0);
            }
        }

        Mat embed(const std::vector<double>& c) const {
            Mat X = Mat::Zero(self.grid.m, self.grid.n);
            for (int k = 0; k < self.grid.m * self.grid.n; ++k)
                X(k / self.grid.n, k % self.grid.n) = self.grid.axes[static_cast<std::size_t>(k)].lo;
            for (std::size_t k = 0; k < c.size(); ++k)
                X(self.var_axes[k] / self.grid.n, self.var_axes[k] % self.grid.n) = c[k];
            return X;
        }

        std::vector<double> node_coords(std::size_t idx) const {
            std::vector<double> c(self.var_axes.size());
            for (std::size_t k = 0; k < c.size(); ++k) {
                const auto i = static_cast<int>((idx / self.stride[k]) % static_cast<std::size_t>(self.count[k]));
                c[k] = self.lo[k] + i * self.step[k];
            }
            return c;
        }

        /// Expands the value of `level` at the matrix of leaf `leaf`.
        void point(int leaf, int level) {
            const Mat G = tree.node(leaf).matrix;
            Cell cell;
            const auto c = self.coords(G);
            if (!self.locate(c, cell) || std::isinf(self.interpolate(cell, level)))
                return; // exact density value at G
            Mat U = Mat::Identity(G.rows(), G.rows());
            Mat V = Mat::Identity(G.cols(), G.cols());
            std::vector<double> cc = c;
            if (self.canonical) {
                Vec cv;
                frame(G, U, V, cv);
            }
            // Snapped axes sit exactly on their node coordinate.
            for (std::size_t k = 0; k < cc.size(); ++k)
                if (cell.frac[k] == 0.0)
                    cc[k] = self.lo[k] + cell.base[k] * self.step[k];
            if (std::all_of(cell.frac.begin(), cell.frac.end(), [](double f) { return f == 0.0; })) {
                // The table used the node value; a discontinuous W may differ off the node.
                tree.snap_leaf(leaf, U * embed(cc) * V);
            }
            interp(leaf, level, cell, 0, cc, U, V);
        }

        void interp(int leaf, int level, const Cell& cell, std::size_t axis, std::vector<double> cc, const Mat& U,
                    const Mat& V) {
            while (axis < cell.frac.size() && cell.frac[axis] == 0.0)
                ++axis;
            if (axis == cell.frac.size()) {
                std::size_t idx = 0;
                for (std::size_t k = 0; k < cell.base.size(); ++k)
                    idx += self.stride[k] * static_cast<std::size_t>(cell.base[k]);
                node(leaf, level, idx, U, V);
                return;
            }
            if (!budget())
                return;
            const double t = cell.frac[axis];
            const double x0 = self.lo[axis] + cell.base[axis] * self.step[axis];
            std::vector<double> lo_c = cc, hi_c = cc;
            lo_c[axis] = x0;
            hi_c[axis] = x0 + self.step[axis];
            const int entry = self.var_axes[axis];
            const int n = self.grid.n;
            Vec e_row = Vec::Zero(self.grid.m);
            Vec e_col = Vec::Zero(n);
            e_row(entry / n) = 1.0;
            e_col(entry % n) = 1.0;
            const Vec a = V.transpose() * e_col;
            const Vec b = self.step[axis] * (U * e_row);
            const auto [im, ip] = tree.split_explicit(leaf, t, a, b, U * embed(lo_c) * V, U * embed(hi_c) * V);
            Cell lo_cell = cell, hi_cell = cell;
            lo_cell.frac[axis] = 0.0;
            hi_cell.frac[axis] = 0.0;
            hi_cell.base[axis] += 1;
            interp(im, level, lo_cell, axis + 1, lo_c, U, V);
            interp(ip, level, hi_cell, axis + 1, hi_c, U, V);
        }

        /// Expands node `idx` at `level`; the leaf matrix is U node V.
        void node(int leaf, int level, std::size_t idx, const Mat& U, const Mat& V) {
            const std::size_t r = self.rep[idx];
            Mat Ur = U, Vr = V;
            if (r != idx) {
                // Move to the representative frame: node = U1 rep V1.
                Mat U1, V1;
                Vec cv;
                frame(embed(node_coords(idx)), U1, V1, cv);
                Ur = U * U1;
                Vr = V1 * V;
            }
            int l = level;
            while (l >= 1 && !self.splits[static_cast<std::size_t>(l)].empty() &&
                   !self.splits[static_cast<std::size_t>(l)][r].taken)
                --l;
            if (l < 1)
                return;
            if (!budget())
                return;
            const Split& s = self.splits[static_cast<std::size_t>(l)][r];
            const Mat D = embed(node_coords(r));
            const Mat M = rank_one(s.a, s.b);
            const Mat lo_m = Ur * (D - s.t * M) * Vr;
            const Mat hi_m = Ur * (D + (1.0 - s.t) * M) * Vr;
            const auto [im, ip] =
                tree.split_explicit(leaf, s.t, Vr.transpose() * s.a, Ur * s.b, lo_m, hi_m);
            point(im, l - 1);
            point(ip, l - 1);
        }

        void nested(int leaf, int level) {
            if (level == 0)
                return;
            const Mat G = tree.node(leaf).matrix;
            self.nested(G, level);
            const Memo& entry = self.memo.at(key(G, level));
            if (!entry.split.taken) {
                nested(leaf, level - 1);
                return;
            }
            if (!budget())
                return;
            const auto [im, ip] = tree.split(leaf, entry.split.t, entry.split.a, entry.split.b);
            nested(im, level - 1);
            nested(ip, level - 1);
        }
    };
};

RankOneEngine::RankOneEngine(Density W, OptConfig cfg) : impl_(std::make_unique<Impl>(std::move(W), cfg)) {}

RankOneEngine::RankOneEngine(Density W, GridSpec grid, OptConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(W), cfg)) {
    impl_->init_grid(std::move(grid));
}

RankOneEngine::~RankOneEngine() = default;
RankOneEngine::RankOneEngine(RankOneEngine&&) noexcept = default;
RankOneEngine& RankOneEngine::operator=(RankOneEngine&&) noexcept = default;

bool RankOneEngine::has_grid() const {
    return impl_->gridded;
}

const Density& RankOneEngine::density() const {
    return impl_->W;
}

ExtReal RankOneEngine::table_value(const Mat& F, int level) {
    if (!impl_->gridded)
        throw PreconditionError("table_value: engine has no grid");
    impl_->ensure_level(level);
    return impl_->lookup(F, level);
}

EnvelopeTable RankOneEngine::table(int max_iters) {
    Impl& s = *impl_;
    if (!s.gridded)
        throw PreconditionError("table: engine has no grid");
    if (max_iters < 0)
        throw ConfigError("table: max_iters must be >= 0");
    s.ensure_level(max_iters);
    EnvelopeTable out;
    out.grid = s.grid;
    out.iterations = max_iters;
    out.values.resize(s.nodes);
    out.converged.resize(s.nodes);
    for (std::size_t i = 0; i < s.nodes; ++i) {
        auto& row = out.values[i];
        for (int k = 0; k <= max_iters; ++k)
            row.push_back(ExtReal(s.levels[static_cast<std::size_t>(k)][i]));
        if (max_iters == 0) {
            out.converged[i] = false;
            continue;
        }
        const double a = s.levels[static_cast<std::size_t>(max_iters)][i];
        const double b = s.levels[static_cast<std::size_t>(max_iters - 1)][i];
        out.converged[i] = (std::isinf(a) && std::isinf(b)) || std::abs(a - b) <= s.cfg.tol_conv * (1.0 + a);
    }
    return out;
}

EnvelopeResult RankOneEngine::envelope(const Mat& F, int max_iters) {
    Impl& s = *impl_;
    if (max_iters < 1)
        throw ConfigError("rank_one_envelope: max_iters must be >= 1");
    if (F.rows() != s.W.m() || F.cols() != s.W.n())
        throw DimensionError("rank_one_envelope: matrix shape does not match the density");

    EnvelopeResult out;
    out.mode = s.gridded ? "table" : "nested";
    std::vector<Impl::Split> history{Impl::Split{}};
    out.iterates.push_back(s.W(F));
    ExtReal current = out.iterates.back();
    bool converged = current.is_finite() && current.value() <= s.cfg.tol_conv;

    for (int k = 1; k <= max_iters && !converged; ++k) {
        if (!s.gridded && k > s.cfg.max_recursive_depth)
            break;
        Evaluable prev;
        double h_step = 0.0;
        if (s.gridded) {
            s.ensure_level(k - 1);
            prev = [&s, k](const Mat& X) { return s.lookup(X, k - 1); };
            h_step = s.h_grid;
        } else {
            prev = [&s, k](const Mat& X) { return s.nested(X, k - 1); };
        }
        // The step at F starts from the exact iterate, not an interpolated one.
        const Mat F0 = F;
        Evaluable h = [&](const Mat& X) { return X.size() == F0.size() && X == F0 ? current : prev(X); };
        const RankOneStepResult res = rank_one_step(h, F, s.cfg, h_step, s.design_a, s.design_b);
        Impl::Split split;
        ExtReal next = current;
        if (res.status == StepStatus::interior && res.value < current) {
            next = res.value;
            split = Impl::Split{true, res.t, res.a, res.b};
        }
        history.push_back(split);
        out.iterates.push_back(next);
        out.iterations = k;
        const bool both_inf = next.is_infinite() && current.is_infinite();
        const bool still = both_inf || (next.is_finite() && current.is_finite() &&
                                        std::abs(next.value() - current.value()) <= s.cfg.tol_conv * (1.0 + next.value()));
        current = next;
        if (current.is_finite() && current.value() <= s.cfg.tol_conv) {
            converged = true;
        } else if (still) {
            if (s.gridded) {
                s.ensure_level(k);
                converged = s.stationary_at(k);
            } else {
                converged = true;
            }
        }
    }
    out.value = current;
    out.converged = converged;

    // Expand the realizing laminate from the recorded history at F.
    out.tree = LaminateTree(F);
    Impl::Expander ex{s, out.tree};
    int k = static_cast<int>(history.size()) - 1;
    while (k >= 1 && !history[static_cast<std::size_t>(k)].taken)
        --k;
    if (k >= 1) {
        const auto& sp = history[static_cast<std::size_t>(k)];
        const auto [im, ip] = out.tree.split(0, sp.t, sp.a, sp.b);
        if (s.gridded) {
            ex.point(im, k - 1);
            ex.point(ip, k - 1);
        } else {
            ex.nested(im, k - 1);
            ex.nested(ip, k - 1);
        }
    }
    out.tree_exact = ex.exact;
    return out;
}

namespace {

std::mutex g_cache_mutex;
std::vector<std::pair<std::string, std::shared_ptr<RankOneEngine>>> g_cache;

std::shared_ptr<RankOneEngine> cached_engine(const Density& W, const GridSpec& grid, const OptConfig& cfg) {
    if (W.spec().is_null())
        return std::make_shared<RankOneEngine>(W, grid, cfg);
    const std::string key = W.spec().dump() + to_json(grid).dump() + to_json(cfg).dump();
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    for (auto& [k, e] : g_cache)
        if (k == key)
            return e;
    auto engine = std::make_shared<RankOneEngine>(W, grid, cfg);
    if (g_cache.size() >= 8)
        g_cache.erase(g_cache.begin());
    g_cache.emplace_back(key, engine);
    return engine;
}

} // namespace

EnvelopeResult rank_one_envelope(const Density& W, const Mat& F, int max_iters, const OptConfig& cfg) {
    if (tabulable(W)) {
        auto engine = cached_engine(W, auto_grid(W, F, cfg), cfg);
        // Engines are not reentrant; serialize use of a shared one.
        static std::mutex use_mutex;
        std::lock_guard<std::mutex> lock(use_mutex);
        return engine->envelope(F, max_iters);
    }
    RankOneEngine engine(W, cfg);
    return engine.envelope(F, max_iters);
}

EnvelopeTable envelope_table(const Density& W, const GridSpec& grid, int max_iters, const OptConfig& cfg) {
    if (grid.node_count() == 0)
        throw ConfigError("envelope_table: empty grid");
    if (grid.node_count() > 1000000)
        throw ResourceError("envelope_table: grid has more than 1e6 nodes");
    RankOneEngine engine(W, grid, cfg);
    return engine.table(max_iters);
}

} // namespace envkit
