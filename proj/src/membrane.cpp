#include "envkit/membrane.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"
#include "envkit/optimize.hpp"

#include <algorithm>
#include <cmath>

namespace envkit {

namespace {

Mat stack(const Mat& xi, const Eigen::Vector3d& zeta) {
    Mat F(3, 3);
    F.leftCols(2) = xi;
    F.col(2) = zeta;
    return F;
}

bool forbidden_without_cross(ConstraintClass cls) {
    return cls == ConstraintClass::strong_det || cls == ConstraintClass::weak_det;
}

} // namespace

ReduceConfig reduce_config_from_json(const nlohmann::json& j, ReduceConfig c) {
    if (!j.is_object())
        throw ConfigError("reduce config must be a JSON object");
    try {
        if (j.contains("scales"))
            c.scales = j["scales"].get<std::vector<double>>();
        c.max_evals = j.value("max_evals", c.max_evals);
        c.min_step = j.value("min_step", c.min_step);
        c.polished_seeds = j.value("polished_seeds", c.polished_seeds);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("reduce config: ") + e.what());
    }
    if (c.max_evals < 1 || c.polished_seeds < 1 || !(c.min_step > 0.0))
        throw ConfigError("reduce config: invalid solver budget");
    return c;
}

nlohmann::json to_json(const ReduceConfig& c) {
    return {{"scales", c.scales},
            {"max_evals", c.max_evals},
            {"min_step", c.min_step},
            {"polished_seeds", c.polished_seeds}};
}

ReducedValue reduce_at(const Density& W, const Mat& xi, const ReduceConfig& cfg) {
    if (W.m() != 3 || W.n() != 3)
        throw DimensionError("reduce_density: base density must be 3x3");
    if (xi.rows() != 3 || xi.cols() != 2)
        throw DimensionError("reduce_density: xi must be 3x2");
    ReducedValue out;
    out.value = ExtReal::infinity();
    const Eigen::Vector3d cross = column_cross(xi);
    const double cn2 = cross.squaredNorm();
    // det(xi | zeta) = <xi_1 ^ xi_2, zeta> vanishes for every zeta.
    if (cn2 == 0.0 && forbidden_without_cross(W.constraint_class()))
        return out;

    std::vector<Eigen::Vector3d> seeds{Eigen::Vector3d::Zero()};
    if (cn2 > 0.0) {
        seeds.push_back(cross / cn2);
        for (double s : cfg.scales)
            seeds.push_back(s * cross);
    }
    auto objective = [&](const Eigen::VectorXd& z) {
        ++out.evaluations;
        return W(stack(xi, Eigen::Vector3d(z))).value();
    };
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const double v = objective(seeds[i]);
        ranked.emplace_back(v, i);
        if (v < out.value.value()) {
            out.value = ExtReal(v);
            out.zeta = seeds[i];
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto polish = std::min<std::size_t>(static_cast<std::size_t>(cfg.polished_seeds), ranked.size());
    for (std::size_t r = 0; r < polish; ++r) {
        const Eigen::Vector3d& z0 = seeds[ranked[r].second];
        CompassOptions opts;
        opts.initial_step = 0.25 * (1.0 + z0.norm());
        opts.min_step = cfg.min_step;
        opts.max_evals = cfg.max_evals;
        const CompassResult res = compass_search(objective, Eigen::VectorXd(z0), opts);
        if (res.f < out.value.value()) {
            out.value = ExtReal(res.f);
            out.zeta = res.x;
        }
    }
    out.feasible = out.value.is_finite();
    return out;
}

ReducedValue PlaneDensity::query(const Mat& xi) const {
    if (!base) {
        ReducedValue r;
        r.value = density(xi);
        r.feasible = r.value.is_finite();
        r.evaluations = 1;
        return r;
    }
    return reduce_at(*base, xi, cfg);
}

PlaneDensity reduce_density(const Density& W, const ReduceConfig& cfg) {
    if (W.m() != 3 || W.n() != 3)
        throw DimensionError("reduce_density: base density must be 3x3");
    auto base = std::make_shared<const Density>(W);
    ConstraintClass cls = ConstraintClass::finite;
    if (forbidden_without_cross(W.constraint_class()))
        cls = ConstraintClass::cross_product;
    Density reduced(
        "reduced_" + W.name(), 3, 2, W.p(), cls, [base, cfg](const Mat& xi) { return reduce_at(*base, xi, cfg).value; },
        {}, W.isotropic());
    if (!W.spec().is_null())
        reduced.set_spec({{"family", "reduced"}, {"base", W.spec()}, {"reduce", to_json(cfg)}});
    return PlaneDensity{reduced, "reduced_from:" + W.name(), base, cfg};
}

PlaneDensity native_plane_density(const Density& W0) {
    if (W0.m() != 3 || W0.n() != 2)
        throw DimensionError("native_plane_density: density must be 3x2");
    return PlaneDensity{W0, "native", nullptr, {}};
}

Bracket qw0_bracket(const PlaneDensity& W0, const Mat& xi, const BracketConfig& cfg) {
    if (xi.rows() != 3 || xi.cols() != 2)
        throw DimensionError("qw0_bracket: xi must be 3x2");
    Bracket b;
    b.upper = rank_one_envelope(W0.density, xi, cfg.iterations, cfg.opt).value;
    BoxConfig box = cfg.box;
    box.center = xi;
    const ConvexReference ref(W0.density, box);
    b.lower = ref.value(xi);
    b.consistent = b.upper.value() >= b.lower - cfg.tol_bracket * (1.0 + b.lower);
    return b;
}

nlohmann::json to_json(const Bracket& b) {
    return {{"lower", format_double(b.lower) == "inf" ? nlohmann::json("inf") : nlohmann::json(b.lower)},
            {"upper", ext_to_json(b.upper)},
            {"consistent", b.consistent}};
}

CommutationReport commutation_check(const Density& W, const std::vector<Mat>& xi_samples,
                                    const CommutationConfig& cfg) {
    if (W.m() != 3 || W.n() != 3)
        throw DimensionError("commutation_check: base density must be 3x3");
    if (W.constraint_class() == ConstraintClass::strong_det)
        throw PreconditionError("commutation_check: requires a finite or weak_det density");
    const auto inner_mesh = make_cell_mesh(3, cfg.inner_resolution);
    const double inner_step = 0.25;
    const int sweeps = cfg.inner_sweeps;
    const double min_step = cfg.inner_min_step;
    const Density relaxed(
        "cell_relaxed_" + W.name(), 3, 3, W.p(), ConstraintClass::finite,
        [W, inner_mesh, inner_step, min_step, sweeps](const Mat& F) {
            return cell_estimate(W, F, inner_mesh, inner_step, min_step, sweeps);
        },
        {}, false);
    const PlaneDensity path_a_density = reduce_density(relaxed, cfg.reduce);
    const PlaneDensity path_b_density = reduce_density(W, cfg.reduce);

    CommutationReport report;
    report.threshold = cfg.flag_threshold;
    for (const auto& xi : xi_samples) {
        if (xi.rows() != 3 || xi.cols() != 2)
            throw DimensionError("commutation_check: samples must be 3x2");
        CommutationSample s;
        s.xi = xi;
        s.path_a = z_envelope_estimate(path_a_density.density, xi, cfg.outer_mesh).value;
        s.path_b = z_envelope_estimate(path_b_density.density, xi, cfg.outer_mesh).value;
        if (s.path_a.is_infinite() && s.path_b.is_infinite()) {
            s.gap = 0.0;
        } else if (s.path_a.is_infinite() || s.path_b.is_infinite()) {
            s.gap = std::numeric_limits<double>::infinity();
        } else {
            const double a = s.path_a.value(), b = s.path_b.value();
            s.gap = std::abs(a - b) / (1.0 + std::min(a, b));
        }
        s.flagged = !(s.gap <= cfg.flag_threshold);
        report.max_gap = std::max(report.max_gap, s.gap);
        report.flagged += s.flagged ? 1 : 0;
        report.samples.push_back(s);
    }
    return report;
}

nlohmann::json to_json(const CommutationReport& r) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : r.samples)
        samples.push_back({{"xi", matrix_to_json(s.xi)},
                           {"path_a", ext_to_json(s.path_a)},
                           {"path_b", ext_to_json(s.path_b)},
                           {"gap", format_double(s.gap) == "inf" ? nlohmann::json("inf") : nlohmann::json(s.gap)},
                           {"flagged", s.flagged}});
    return {{"diagnostic", true},
            {"threshold", r.threshold},
            {"max_gap", format_double(r.max_gap) == "inf" ? nlohmann::json("inf") : nlohmann::json(r.max_gap)},
            {"flagged", r.flagged},
            {"samples", samples}};
}

} // namespace envkit
