#include "envkit/certificates.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"

#include <cmath>
#include <sstream>

namespace envkit {

namespace {

std::string describe(const Mat& G) {
    return "[" + format_matrix_literal(G) + "]";
}

double col_norm_min(const Mat& xi) {
    return std::min((xi.col(0) + xi.col(1)).norm(), (xi.col(0) - xi.col(1)).norm());
}

Mat with_columns(const Eigen::Vector3d& c1, const Eigen::Vector3d& c2) {
    Mat G(3, 2);
    G.col(0) = c1;
    G.col(1) = c2;
    return G;
}

void require_3x2(const Density& W0, const Mat& xi, const char* what) {
    if (W0.m() != 3 || W0.n() != 2 || xi.rows() != 3 || xi.cols() != 2)
        throw DimensionError(std::string(what) + ": needs a 3x2 density and matrix");
}

ExtReal average(const Density& W0, const std::array<Mat, 4>& pts) {
    ExtReal sum;
    for (const auto& G : pts)
        sum += W0(G).scaled(0.25);
    return sum;
}

} // namespace

LaminateTree svd_split_laminate(const Mat& F, double alpha) {
    if (F.cols() > F.rows())
        throw DimensionError("svd_split_laminate: requires N <= m");
    if (!(alpha >= 1.0))
        throw PreconditionError("svd_split_laminate: alpha must be >= 1");
    LaminateTree tree(F);
    if (min_singular_product(F) >= alpha)
        return tree;
    const SvdFactorization f = svd_ascending(F);
    const int m = static_cast<int>(F.rows());
    const int n = static_cast<int>(F.cols());
    const Mat PJ = f.P * rect_identity(m, n);
    std::vector<int> leaves{0};
    for (int i = 0; i < n; ++i) {
        const double v = f.sv(i);
        if (v >= alpha)
            continue;
        const double t = (v + alpha) / (2.0 * alpha);
        const Vec a = f.Q.row(i).transpose();
        const Vec b = 2.0 * alpha * (PJ * f.Q.transpose().col(i));
        std::vector<int> next;
        for (int leaf : leaves) {
            const auto [lo, hi] = tree.split(leaf, t, a, b);
            next.push_back(lo);
            next.push_back(hi);
        }
        leaves = std::move(next);
    }
    return tree;
}

double growth_constant(int n, double alpha, double beta, double p) {
    return std::pow(2.0, n) * beta *
           (1.0 + std::pow(2.0, p / 2.0) * std::pow(static_cast<double>(n), p / 2.0) * std::pow(alpha, p));
}

GrowthCertificate growth_certificate(const Density& W, const Mat& F, double alpha, double beta) {
    if (F.rows() != W.m() || F.cols() != W.n())
        throw DimensionError("growth_certificate: matrix shape does not match the density");
    if (!(beta > 0.0))
        throw PreconditionError("growth_certificate: beta must be positive");
    GrowthCertificate c;
    c.F = F;
    c.alpha = alpha;
    c.beta = beta;
    c.p = W.p();
    c.laminate = svd_split_laminate(F, alpha);
    c.constant_c = growth_constant(W.n(), alpha, beta, W.p());
    c.rhs = c.constant_c * growth_weight(F, W.p());
    for (const auto& [G, w] : c.laminate.leaves()) {
        const double v = min_singular_product(G);
        c.leaf_v.push_back(v);
        if (v < alpha - kTolLin)
            throw CertificateFailure("growth_certificate: leaf " + describe(G) + " has v = " + format_double(v) +
                                     " < alpha");
        const double cap = beta * growth_weight(G, W.p());
        const ExtReal value = W(G);
        if (value.is_infinite() || value.value() > cap * (1.0 + kTolLin))
            throw CertificateFailure("growth_certificate: leaf " + describe(G) + " has W = " + value.to_string() +
                                     " above beta (1 + |G|^p) = " + format_double(cap));
        c.bound_value += w * cap;
        c.laminate_value += value.scaled(w);
    }
    if (c.bound_value > c.rhs * (1.0 + kTolLin))
        throw CertificateFailure("growth_certificate: bound " + format_double(c.bound_value) + " exceeds c (1 + |F|^p) = " +
                                 format_double(c.rhs));
    return c;
}

nlohmann::json to_json(const GrowthCertificate& c) {
    nlohmann::json leaves = nlohmann::json::array();
    const auto lv = c.laminate.leaves();
    for (std::size_t i = 0; i < lv.size(); ++i)
        leaves.push_back({{"matrix", matrix_to_json(lv[i].first)}, {"weight", lv[i].second}, {"v", c.leaf_v[i]}});
    return {{"F", matrix_to_json(c.F)},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"p", c.p},
            {"constant_c", c.constant_c},
            {"bound_value", c.bound_value},
            {"rhs", c.rhs},
            {"laminate_value", ext_to_json(c.laminate_value)},
            {"holds", c.bound_value <= c.rhs * (1.0 + kTolLin)},
            {"leaves", leaves},
            {"laminate", to_json(c.laminate)}};
}

Vec four_triangle_normal(const Mat& xi) {
    const Eigen::Vector3d c1 = xi.col(0);
    const Eigen::Vector3d c2 = xi.col(1);
    const Eigen::Vector3d cross = c1.cross(c2);
    const double cn = cross.norm();
    if (cn > 1e-8 * c1.norm() * c2.norm() && cn > 0.0)
        return Vec(cross / cn);
    // Parallel or vanishing columns: Gram-Schmidt against the nonzero column,
    // taking the first basis vector that leaves a well-conditioned remainder.
    const Eigen::Vector3d base = c1.norm() >= c2.norm() ? c1 : c2;
    const double bn = base.norm();
    for (int k = 0; k < 3; ++k) {
        Eigen::Vector3d e = Eigen::Vector3d::Zero();
        e(k) = 1.0;
        if (bn > 0.0)
            e -= e.dot(base / bn) * (base / bn);
        if (e.norm() > 0.5)
            return Vec(e / e.norm());
    }
    throw LinAlgError("four_triangle_normal: no orthogonal direction found");
}

FourPointBound four_triangle_bound_stage1(const Density& W0, const Mat& xi, double alpha, double beta) {
    require_3x2(W0, xi, "four_triangle_bound_stage1");
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw PreconditionError("four_triangle_bound_stage1: alpha and beta must be positive");
    const double slack = kTolLin * (1.0 + alpha);
    if (col_norm_min(xi) < alpha - slack)
        throw PreconditionError("four_triangle_bound_stage1: min(|xi_1 + xi_2|, |xi_1 - xi_2|) < alpha");
    const Vec nu = four_triangle_normal(xi);
    const Eigen::Vector3d n3 = nu;
    const Eigen::Vector3d c1 = xi.col(0), c2 = xi.col(1);
    FourPointBound out;
    out.nu = nu;
    out.points = {with_columns(c1 - n3, c2 + n3), with_columns(c1 - n3, c2 - n3), with_columns(c1 + n3, c2 - n3),
                  with_columns(c1 + n3, c2 + n3)};
    for (const auto& G : out.points)
        if (cross_product_norm(G) < alpha - slack)
            throw CertificateFailure("four_triangle_bound_stage1: point " + describe(G) +
                                     " has cross-product norm below alpha");
    out.bound = average(W0, out.points);
    out.cap = beta * std::pow(2.0, 2.0 * W0.p() + 1.0) * growth_weight(xi, W0.p());
    if (out.bound.is_infinite() || out.bound.value() > out.cap * (1.0 + kTolLin))
        throw CertificateFailure("four_triangle_bound_stage1: average " + out.bound.to_string() + " exceeds " +
                                 format_double(out.cap) + " at " + describe(xi));
    return out;
}

FourPointBound four_triangle_bound_stage2(const Density& W0, const Mat& xi, double alpha, double gamma) {
    require_3x2(W0, xi, "four_triangle_bound_stage2");
    if (!(alpha > 0.0) || !(gamma > 0.0))
        throw PreconditionError("four_triangle_bound_stage2: alpha and gamma must be positive");
    const Eigen::Vector3d n3 = alpha * Eigen::Vector3d(four_triangle_normal(xi));
    const Eigen::Vector3d c1 = xi.col(0), c2 = xi.col(1);
    FourPointBound out;
    out.nu = Vec(n3);
    out.points = {with_columns(c1, c2 + n3), with_columns(c1 - n3, c2), with_columns(c1, c2 - n3),
                  with_columns(c1 + n3, c2)};
    const double slack = kTolLin * (1.0 + alpha);
    double sum = 0.0;
    for (const auto& G : out.points) {
        if (col_norm_min(G) < alpha - slack)
            throw CertificateFailure("four_triangle_bound_stage2: point " + describe(G) +
                                     " misses the stage-1 precondition");
        // Stage 1 bounds the envelope at each point by gamma (1 + |G|^p).
        sum += 0.25 * gamma * growth_weight(G, W0.p());
    }
    out.bound = ExtReal(sum);
    out.cap = std::max(1.0, std::pow(alpha, W0.p())) * gamma * std::pow(2.0, W0.p() + 1.0) * growth_weight(xi, W0.p());
    if (sum > out.cap * (1.0 + kTolLin))
        throw CertificateFailure("four_triangle_bound_stage2: bound " + format_double(sum) + " exceeds " +
                                 format_double(out.cap) + " at " + describe(xi));
    return out;
}

CompositeBound four_triangle_composite(const Density& W0, const Mat& xi, double alpha, double beta) {
    const double gamma = beta * std::pow(2.0, 2.0 * W0.p() + 1.0);
    CompositeBound out;
    out.stage2 = four_triangle_bound_stage2(W0, xi, alpha, gamma);
    out.cap = out.stage2.cap;
    for (std::size_t i = 0; i < 4; ++i) {
        out.stage1[i] = four_triangle_bound_stage1(W0, out.stage2.points[i], alpha, beta);
        out.bound += out.stage1[i].bound.scaled(0.25);
    }
    if (out.bound.is_infinite() || out.bound.value() > out.cap * (1.0 + kTolLin))
        throw CertificateFailure("four_triangle_composite: bound " + out.bound.to_string() + " exceeds " +
                                 format_double(out.cap) + " at " + describe(xi));
    return out;
}

nlohmann::json to_json(const FourPointBound& b) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& G : b.points)
        pts.push_back(matrix_to_json(G));
    return {{"bound", ext_to_json(b.bound)}, {"cap", b.cap}, {"nu", vector_to_json(b.nu)}, {"points", pts}};
}

nlohmann::json to_json(const CompositeBound& b) {
    nlohmann::json stage1 = nlohmann::json::array();
    for (const auto& s : b.stage1)
        stage1.push_back(to_json(s));
    return {{"bound", ext_to_json(b.bound)},
            {"cap", b.cap},
            {"holds", b.bound.is_finite() && b.bound.value() <= b.cap * (1.0 + kTolLin)},
            {"stage2", to_json(b.stage2)},
            {"stage1", stage1}};
}

} // namespace envkit
