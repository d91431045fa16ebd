#pragma once

#include <Eigen/Dense>

#include <array>

namespace envkit {

/// Largest supported matrix dimension (m, N <= 4).
inline constexpr int kMaxDim = 4;

/// Absolute tolerance for linear-algebra residuals.
inline constexpr double kTolLin = 1e-10;

/// Small dense matrix, row-major, at most 4x4; never heap-allocates.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor, kMaxDim, kMaxDim>;
/// Small dense column vector, at most 4 entries.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

/// F = P J Q^T diag(sv) Q with P in O(m), Q in SO(N), sv ascending.
struct SvdFactorization {
    Mat P;
    Mat Q;
    Vec sv;
};

/// Frobenius norm |F|.
double frob(const Mat& F);

/// Throws DimensionError if F has a shape beyond the supported range.
void require_supported(const Mat& F);

/// Determinant of a square matrix (closed form up to 3x3, LU beyond).
double det(const Mat& F);

/// |xi_1 ^ xi_2| for a 3x2 matrix with columns xi_1, xi_2.
double cross_product_norm(const Mat& xi);

/// Cross product xi_1 ^ xi_2 of the two columns of a 3x2 matrix.
Eigen::Vector3d column_cross(const Mat& xi);

/// Product of the singular values v(F); requires N <= m.
double min_singular_product(const Mat& F);

/// Ascending SVD with Q normalized to det Q = +1; requires N <= m.
SvdFactorization svd_ascending(const Mat& F);

/// The m x N matrix a (x) b acting as x -> <a, x> b, i.e. b a^T.
Mat rank_one(const Vec& a, const Vec& b);

/// m x N rectangular identity J.
Mat rect_identity(int m, int n);

/// Reassemble P J Q^T diag(d) Q for a (possibly signed) diagonal d.
Mat compose_from_diag(const SvdFactorization& f, const Vec& d);

/// Signed singular values in ascending order of magnitude.
///
/// For m = N the smallest one carries sign(det F); for m > N all are >= 0.
/// These are the diagonal coordinates of the canonical representative of F
/// under F -> R F S with R in SO(m), S in SO(N). Closed form for 2x2 and 3x2.
Vec canonical_diagonal(const Mat& F);

/// Numerical rank-one test: second largest singular value <= tol * (1 + |A|).
bool is_rank_at_most_one(const Mat& A, double tol = kTolLin);

} // namespace envkit
