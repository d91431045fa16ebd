#include "envkit/linalg.hpp"

#include "envkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace envkit {

namespace {

std::string shape(const Mat& F) {
    return std::to_string(F.rows()) + "x" + std::to_string(F.cols());
}

std::string echo(const Mat& F) {
    std::ostringstream os;
    os.precision(17);
    for (int i = 0; i < F.rows(); ++i) {
        for (int j = 0; j < F.cols(); ++j)
            os << (j ? "," : "") << F(i, j);
        if (i + 1 < F.rows())
            os << ";";
    }
    return os.str();
}

} // namespace

double frob(const Mat& F) {
    return F.norm();
}

void require_supported(const Mat& F) {
    if (F.rows() < 1 || F.cols() < 1 || F.rows() > kMaxDim || F.cols() > kMaxDim)
        throw DimensionError("matrix shape " + shape(F) + " outside supported range 1..4");
}

double det(const Mat& F) {
    if (F.rows() != F.cols())
        throw DimensionError("det: matrix must be square, got " + shape(F));
    switch (F.rows()) {
    case 1:
        return F(0, 0);
    case 2:
        return F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
    case 3:
        return F(0, 0) * (F(1, 1) * F(2, 2) - F(1, 2) * F(2, 1)) -
               F(0, 1) * (F(1, 0) * F(2, 2) - F(1, 2) * F(2, 0)) +
               F(0, 2) * (F(1, 0) * F(2, 1) - F(1, 1) * F(2, 0));
    default:
        return Eigen::Matrix4d(F).determinant();
    }
}

Eigen::Vector3d column_cross(const Mat& xi) {
    if (xi.rows() != 3 || xi.cols() != 2)
        throw DimensionError("cross product needs a 3x2 matrix, got " + shape(xi));
    const Eigen::Vector3d a(xi(0, 0), xi(1, 0), xi(2, 0));
    const Eigen::Vector3d b(xi(0, 1), xi(1, 1), xi(2, 1));
    return a.cross(b);
}

double cross_product_norm(const Mat& xi) {
    return column_cross(xi).norm();
}

double min_singular_product(const Mat& F) {
    require_supported(F);
    if (F.cols() > F.rows())
        throw DimensionError("min_singular_product: requires N <= m, got " + shape(F));
    if (F.rows() == F.cols())
        return std::abs(det(F));
    if (F.rows() == 3 && F.cols() == 2)
        return cross_product_norm(F);
    const SvdFactorization f = svd_ascending(F);
    return f.sv.prod();
}

SvdFactorization svd_ascending(const Mat& F) {
    require_supported(F);
    const int m = static_cast<int>(F.rows());
    const int n = static_cast<int>(F.cols());
    if (n > m)
        throw DimensionError("svd_ascending: requires N <= m, got " + shape(F));
    if (!F.allFinite())
        throw LinAlgError("svd_ascending: non-finite input [" + echo(F) + "]");

    Eigen::JacobiSVD<Mat> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success)
        throw LinAlgError("svd_ascending: SVD failed to converge for [" + echo(F) + "]");

    // Eigen returns singular values in descending order; reverse to ascending.
    Mat U(m, m);
    Mat V(n, n);
    Vec sv(n);
    for (int k = 0; k < n; ++k) {
        const int src = n - 1 - k;
        sv(k) = svd.singularValues()(src);
        U.col(k) = svd.matrixU().col(src);
        V.col(k) = svd.matrixV().col(src);
    }
    for (int k = n; k < m; ++k)
        U.col(k) = svd.matrixU().col(k);

    // Q = V^T must lie in SO(N); flip one column pair of (U, V) otherwise.
    if (V.determinant() < 0.0) {
        V.col(0) *= -1.0;
        U.col(0) *= -1.0;
    }

    Mat block = Mat::Identity(m, m);
    block.topLeftCorner(n, n) = V.transpose();

    SvdFactorization out;
    out.P = U * block;
    out.Q = V.transpose();
    out.sv = sv;
    return out;
}

Mat rank_one(const Vec& a, const Vec& b) {
    Mat out(b.size(), a.size());
    out.noalias() = b * a.transpose();
    return out;
}

Mat rect_identity(int m, int n) {
    Mat J = Mat::Zero(m, n);
    for (int k = 0; k < std::min(m, n); ++k)
        J(k, k) = 1.0;
    return J;
}

Mat compose_from_diag(const SvdFactorization& f, const Vec& d) {
    const int m = static_cast<int>(f.P.rows());
    const int n = static_cast<int>(f.Q.rows());
    Mat D = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k)
        D(k, k) = d(k);
    Mat out(m, n);
    out.noalias() = f.P * rect_identity(m, n) * f.Q.transpose() * D * f.Q;
    return out;
}

Vec canonical_diagonal(const Mat& F) {
    const auto m = F.rows();
    const auto n = F.cols();
    Vec out(n);
    if (m == 2 && n == 2) {
        const double e = 0.5 * (F(0, 0) + F(1, 1));
        const double f = 0.5 * (F(0, 0) - F(1, 1));
        const double g = 0.5 * (F(1, 0) + F(0, 1));
        const double h = 0.5 * (F(1, 0) - F(0, 1));
        const double smax = std::hypot(e, h) + std::hypot(f, g);
        out(1) = smax;
        out(0) = smax > 0.0 ? det(F) / smax : 0.0;
        return out;
    }
    if (m == 3 && n == 2) {
        const double g11 = F.col(0).squaredNorm();
        const double g22 = F.col(1).squaredNorm();
        const double g12 = F.col(0).dot(F.col(1));
        const double lmax = 0.5 * (g11 + g22 + std::hypot(g11 - g22, 2.0 * g12));
        const double smax = std::sqrt(std::max(lmax, 0.0));
        out(1) = smax;
        out(0) = smax > 0.0 ? cross_product_norm(F) / smax : 0.0;
        return out;
    }
    if (n > m)
        throw DimensionError("canonical_diagonal: requires N <= m, got " + shape(F));
    Eigen::JacobiSVD<Mat> svd(F);
    for (int k = 0; k < n; ++k)
        out(k) = svd.singularValues()(n - 1 - k);
    if (m == n && det(F) < 0.0)
        out(0) = -out(0);
    return out;
}

bool is_rank_at_most_one(const Mat& A, double tol) {
    if (A.rows() == 0 || A.cols() == 0)
        return true;
    Eigen::JacobiSVD<Mat> svd(A);
    const auto& s = svd.singularValues();
    if (s.size() < 2)
        return true;
    return s(1) <= tol * (1.0 + A.norm());
}

} // namespace envkit
