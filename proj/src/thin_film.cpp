#include "envkit/thin_film.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <sstream>

namespace envkit {

namespace {

constexpr double kFilmNoise = 1e-12;

struct Rule {
    std::vector<double> t; ///< nodes on (-1/2, 1/2)
    std::vector<double> w; ///< weights summing to 1
};

template <unsigned N>
Rule gauss_rule() {
    using G = boost::math::quadrature::gauss<double, N>;
    Rule r;
    for (std::size_t i = 0; i < G::abscissa().size(); ++i) {
        const double x = G::abscissa()[i];
        const double w = G::weights()[i];
        if (x == 0.0) {
            r.t.push_back(0.0);
            r.w.push_back(0.5 * w);
        } else {
            r.t.push_back(-0.5 * x);
            r.w.push_back(0.5 * w);
            r.t.push_back(0.5 * x);
            r.w.push_back(0.5 * w);
        }
    }
    return r;
}

Rule gauss(int order) {
    switch (order) {
    case 2:
        return gauss_rule<2>();
    case 3:
        return gauss_rule<3>();
    case 4:
        return gauss_rule<4>();
    case 5:
        return gauss_rule<5>();
    case 6:
        return gauss_rule<6>();
    default:
        throw ConfigError("thin film: quadrature order must lie in 2..6");
    }
}

struct QuadPoint {
    double x, y, weight;
    const PsiPiece* piece;
};

/// Tensor Gauss points over every piece, `cells` x `cells` sub-rectangles per piece.
std::vector<QuadPoint> x_points(const ThinFilmSpec& spec) {
    const Rule rule = gauss(spec.quadrature);
    std::vector<QuadPoint> pts;
    for (const auto& piece : spec.psi) {
        const double hx = (piece.rect.x1 - piece.rect.x0) / spec.cells;
        const double hy = (piece.rect.y1 - piece.rect.y0) / spec.cells;
        for (int cj = 0; cj < spec.cells; ++cj)
            for (int ci = 0; ci < spec.cells; ++ci) {
                const double cx = piece.rect.x0 + (ci + 0.5) * hx;
                const double cy = piece.rect.y0 + (cj + 0.5) * hy;
                for (std::size_t a = 0; a < rule.t.size(); ++a)
                    for (std::size_t b = 0; b < rule.t.size(); ++b)
                        pts.push_back({cx + rule.t[a] * hx, cy + rule.t[b] * hy, rule.w[a] * rule.w[b] * hx * hy,
                                       &piece});
            }
    }
    return pts;
}

Mat film_gradient(const Mat& grad_psi, const Mat& grad_phi, const Eigen::Vector3d& phi, double shift) {
    Mat F(3, 3);
    F.leftCols(2) = grad_psi + shift * grad_phi;
    F.col(2) = phi;
    return F;
}

Eigen::Vector3d vec3(const nlohmann::json& j, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3)
        throw ConfigError(std::string("thin film: ") + what + " must have 3 entries");
    return {v[0], v[1], v[2]};
}

Rect rect_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 4 || !(v[1] > v[0]) || !(v[3] > v[2]))
        throw ConfigError("thin film: rectangles are [x0, x1, y0, y1] with x0 < x1, y0 < y1");
    return {v[0], v[1], v[2], v[3]};
}

void require_3x3(const Density& W) {
    if (W.m() != 3 || W.n() != 3)
        throw DimensionError("thin film: density must be 3x3");
}

} // namespace

Eigen::Vector3d ThinFilmSpec::phi(double x, double y) const {
    const double u = (x - sigma.x0) / (sigma.x1 - sigma.x0);
    const double v = (y - sigma.y0) / (sigma.y1 - sigma.y0);
    return (1 - u) * (1 - v) * director.corners[0] + u * (1 - v) * director.corners[1] +
           (1 - u) * v * director.corners[2] + u * v * director.corners[3];
}

Mat ThinFilmSpec::grad_phi(double x, double y) const {
    const double lx = sigma.x1 - sigma.x0;
    const double ly = sigma.y1 - sigma.y0;
    const double u = (x - sigma.x0) / lx;
    const double v = (y - sigma.y0) / ly;
    const auto& c = director.corners;
    Mat G(3, 2);
    G.col(0) = ((1 - v) * (c[1] - c[0]) + v * (c[3] - c[2])) / lx;
    G.col(1) = ((1 - u) * (c[2] - c[0]) + u * (c[3] - c[1])) / ly;
    return G;
}

ThinFilmSpec thin_film_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("thin film spec must be a JSON object");
    ThinFilmSpec s;
    try {
        if (j.contains("sigma"))
            s.sigma = rect_from_json(j["sigma"]);
        if (j.contains("eps"))
            s.eps_list = j["eps"].get<std::vector<double>>();
        s.cells = j.value("cells", s.cells);
        s.quadrature = j.value("quadrature", s.quadrature);
        s.det_floor_j = j.value("det_floor_j", s.det_floor_j);

        const auto& psi = j.at("psi");
        auto piece_from = [](const nlohmann::json& p, Rect r) {
            PsiPiece piece;
            piece.rect = r;
            piece.gradient = matrix_from_json(p.at("gradient"));
            if (piece.gradient.rows() != 3 || piece.gradient.cols() != 2 || !piece.gradient.allFinite())
                throw ConfigError("thin film: psi gradients must be finite 3x2 matrices");
            if (p.contains("offset"))
                piece.offset = vec3(p["offset"], "psi offset");
            return piece;
        };
        if (psi.contains("pieces")) {
            for (const auto& p : psi["pieces"])
                s.psi.push_back(piece_from(p, rect_from_json(p.at("rect"))));
        } else {
            s.psi.push_back(piece_from(psi, s.sigma));
        }

        const auto& d = j.at("director");
        const std::string kind = d.value("type", "constant");
        if (kind == "constant") {
            s.director.kind = Director::Kind::constant;
            s.director.corners.fill(vec3(d.at("value"), "director value"));
        } else if (kind == "bilinear") {
            s.director.kind = Director::Kind::bilinear;
            const auto& corners = d.at("corners");
            if (!corners.is_array() || corners.size() != 4)
                throw ConfigError("thin film: bilinear director needs 4 corner vectors");
            for (std::size_t k = 0; k < 4; ++k)
                s.director.corners[k] = vec3(corners[k], "director corner");
        } else {
            throw ConfigError("thin film: unknown director type \"" + kind + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("thin film spec: ") + e.what());
    }

    if (s.eps_list.empty())
        throw ConfigError("thin film: eps list is empty");
    for (std::size_t i = 0; i < s.eps_list.size(); ++i) {
        if (!(s.eps_list[i] > 0.0))
            throw ConfigError("thin film: thicknesses must be positive");
        if (i > 0 && !(s.eps_list[i] < s.eps_list[i - 1]))
            throw ConfigError("thin film: eps list must be strictly decreasing");
    }
    if (s.cells < 1)
        throw ConfigError("thin film: cells must be >= 1");
    if (s.det_floor_j < 1)
        throw ConfigError("thin film: det_floor_j must be >= 1");
    gauss(s.quadrature);
    double covered = 0.0;
    for (const auto& p : s.psi) {
        const double tol = 1e-12 * (1.0 + s.sigma.area());
        if (p.rect.x0 < s.sigma.x0 - tol || p.rect.x1 > s.sigma.x1 + tol || p.rect.y0 < s.sigma.y0 - tol ||
            p.rect.y1 > s.sigma.y1 + tol)
            throw ConfigError("thin film: psi piece outside sigma");
        covered += p.rect.area();
    }
    if (std::abs(covered - s.sigma.area()) > 1e-9 * s.sigma.area())
        throw ConfigError("thin film: psi pieces do not tile sigma");
    return s;
}

nlohmann::json to_json(const ThinFilmSpec& s) {
    nlohmann::json pieces = nlohmann::json::array();
    for (const auto& p : s.psi)
        pieces.push_back({{"rect", {p.rect.x0, p.rect.x1, p.rect.y0, p.rect.y1}},
                          {"gradient", matrix_to_json(p.gradient)},
                          {"offset", {p.offset(0), p.offset(1), p.offset(2)}}});
    nlohmann::json director;
    if (s.director.kind == Director::Kind::constant) {
        const auto& v = s.director.corners[0];
        director = {{"type", "constant"}, {"value", {v(0), v(1), v(2)}}};
    } else {
        nlohmann::json corners = nlohmann::json::array();
        for (const auto& v : s.director.corners)
            corners.push_back({v(0), v(1), v(2)});
        director = {{"type", "bilinear"}, {"corners", corners}};
    }
    return {{"sigma", {s.sigma.x0, s.sigma.x1, s.sigma.y0, s.sigma.y1}},
            {"eps", s.eps_list},
            {"psi", {{"pieces", pieces}}},
            {"director", director},
            {"cells", s.cells},
            {"quadrature", s.quadrature},
            {"det_floor_j", s.det_floor_j}};
}

ExtReal film_energy(const Density& W, const ThinFilmSpec& spec, double eps) {
    require_3x3(W);
    if (!(eps > 0.0))
        throw PreconditionError("film_energy: eps must be positive");
    const Rule thickness = gauss(spec.quadrature);
    ExtReal total;
    for (const auto& q : x_points(spec)) {
        const Eigen::Vector3d phi = spec.phi(q.x, q.y);
        const Mat gphi = spec.grad_phi(q.x, q.y);
        for (std::size_t k = 0; k < thickness.t.size(); ++k) {
            const ExtReal w = W(film_gradient(q.piece->gradient, gphi, phi, eps * thickness.t[k]));
            if (w.is_infinite())
                return ExtReal::infinity();
            total += w.scaled(q.weight * thickness.w[k]);
        }
    }
    return total;
}

ExtReal film_target(const Density& W, const ThinFilmSpec& spec) {
    require_3x3(W);
    ExtReal total;
    for (const auto& q : x_points(spec)) {
        const ExtReal w = W(film_gradient(q.piece->gradient, Mat::Zero(3, 2), spec.phi(q.x, q.y), 0.0));
        if (w.is_infinite())
            return ExtReal::infinity();
        total += w.scaled(q.weight);
    }
    return total;
}

Eigen::Vector3d pi_average(const ThinFilmSpec& spec, double x, double y) {
    for (const auto& p : spec.psi)
        if (x >= p.rect.x0 && x <= p.rect.x1 && y >= p.rect.y0 && y <= p.rect.y1)
            return p.offset + p.gradient * Eigen::Vector2d(x, y);
    throw PreconditionError("pi_average: point outside sigma");
}

Eigen::Vector3d pi_average_quadrature(const ThinFilmSpec& spec, double eps, double x, double y) {
    const Rule thickness = gauss(spec.quadrature);
    const Eigen::Vector3d psi = pi_average(spec, x, y);
    const Eigen::Vector3d phi = spec.phi(x, y);
    Eigen::Vector3d avg = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < thickness.t.size(); ++k)
        avg += thickness.w[k] * (psi + eps * thickness.t[k] * phi);
    return avg;
}

RecoveryReport recovery_convergence(const Density& W, const ThinFilmSpec& spec) {
    require_3x3(W);
    const double floor = 1.0 / (2.0 * spec.det_floor_j);
    for (const auto& q : x_points(spec)) {
        const double d = det(film_gradient(q.piece->gradient, Mat::Zero(3, 2), spec.phi(q.x, q.y), 0.0));
        if (!(d >= floor))
            throw PreconditionError("recovery_convergence: det(grad psi | phi_k) = " + format_double(d) + " < " +
                                    format_double(floor) + " at x = (" + format_double(q.x) + ", " +
                                    format_double(q.y) + ")");
    }
    RecoveryReport r;
    const ExtReal target = film_target(W, spec);
    for (double eps : spec.eps_list) {
        RecoveryRow row;
        row.eps = eps;
        row.energy = film_energy(W, spec, eps);
        row.target = target;
        if (row.energy.is_infinite() || target.is_infinite())
            row.error = row.energy == target ? 0.0 : std::numeric_limits<double>::infinity();
        else
            row.error = std::abs(row.energy.value() - target.value());
        if (!r.rows.empty()) {
            const double prev = r.rows.back().error;
            row.ratio = prev > 0.0 ? row.error / prev : 0.0;
        }
        r.rows.push_back(row);
    }
    // Errors at rounding level count as zero: an eps-independent energy differs from
    // the target only by the order of the quadrature sums.
    const double floor_err = target.is_finite() ? kFilmNoise * (1.0 + std::abs(target.value())) : 0.0;
    auto negligible = [&](double e) { return e <= floor_err; };
    r.decreasing = true;
    for (std::size_t i = 1; i < r.rows.size(); ++i) {
        const double prev = r.rows[i - 1].error, cur = r.rows[i].error;
        if (!(cur < prev) && !(negligible(cur) && negligible(prev)))
            r.decreasing = false;
    }
    r.ratio_ok = true;
    const std::size_t n = r.rows.size();
    for (std::size_t i = n > 3 ? n - 3 : 1; i < n; ++i)
        if (!(r.rows[i].ratio <= 0.6) && !negligible(r.rows[i].error))
            r.ratio_ok = false;
    return r;
}

std::string RecoveryReport::to_csv() const {
    std::ostringstream os;
    os << "eps,energy,target,error,ratio\n";
    for (const auto& row : rows)
        os << format_double(row.eps) << ',' << format_double(row.energy.value()) << ','
           << format_double(row.target.value()) << ',' << format_double(row.error) << ',' << format_double(row.ratio)
           << '\n';
    return os.str();
}

nlohmann::json RecoveryReport::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : rows)
        out.push_back({{"eps", row.eps},
                       {"energy", ext_to_json(row.energy)},
                       {"target", ext_to_json(row.target)},
                       {"error", std::isfinite(row.error) ? nlohmann::json(row.error) : nlohmann::json("inf")},
                       {"ratio", std::isfinite(row.ratio) ? nlohmann::json(row.ratio) : nlohmann::json("inf")}});
    return {{"rows", out}, {"decreasing", decreasing}, {"ratio_ok", ratio_ok}, {"passed", passed()}};
}

} // namespace envkit
