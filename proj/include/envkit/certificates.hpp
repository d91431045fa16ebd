#pragma once

#include "envkit/density.hpp"
#include "envkit/laminate.hpp"

#include <json.hpp>

#include <array>
#include <vector>

namespace envkit {

/// Splits F along the singular directions whose singular value is below alpha.
///
/// Each small v_i is written as (1 - t)(-alpha) + t alpha with t = (v_i + alpha) / (2 alpha),
/// in ascending index order, so every leaf has all singular values >= alpha in
/// modulus and v(leaf) >= alpha^N >= alpha. Throws PreconditionError for alpha < 1
/// and DimensionError for N > m.
LaminateTree svd_split_laminate(const Mat& F, double alpha);

/// 2^N beta (1 + 2^(p/2) N^(p/2) alpha^p).
double growth_constant(int n, double alpha, double beta, double p);

struct GrowthCertificate {
    Mat F;
    LaminateTree laminate;
    double bound_value = 0.0;   ///< sum over leaves of weight * beta (1 + |G|^p)
    double constant_c = 0.0;    ///< growth_constant(N, alpha, beta, p)
    double rhs = 0.0;           ///< constant_c (1 + |F|^p)
    ExtReal laminate_value;     ///< sum over leaves of weight * W(G), an upper bound of R W(F)
    std::vector<double> leaf_v; ///< v(G) per leaf, depth-first order
    double alpha = 1.0;
    double beta = 1.0;
    double p = 2.0;
};

/// Builds and verifies the certificate. Throws CertificateFailure naming the leaf
/// if some leaf has v < alpha - kTolLin, W(leaf) > beta (1 + |leaf|^p), or if the
/// bound exceeds constant_c (1 + |F|^p).
GrowthCertificate growth_certificate(const Density& W, const Mat& F, double alpha, double beta);

nlohmann::json to_json(const GrowthCertificate& c);

/// Four matrices and the average of W0 over them.
struct FourPointBound {
    ExtReal bound;                 ///< (1/4) sum W0(point)
    double cap = 0.0;              ///< the closed-form constant times (1 + |xi|^p)
    std::array<Mat, 4> points;
    Vec nu;
};

/// Unit normal for the first four-triangle construction: xi_1 ^ xi_2 normalized,
/// or a Gram-Schmidt completion of the nonzero column when the cross product is
/// (numerically) zero, or e_3 direction choice when xi = 0.
Vec four_triangle_normal(const Mat& xi);

/// Points (xi_1 - nu | xi_2 + nu), (xi_1 + nu | xi_2 - nu), (xi_1 - nu | xi_2 - nu),
/// (xi_1 + nu | xi_2 + nu) with |nu| = 1. Requires min(|xi_1 + xi_2|, |xi_1 - xi_2|) >= alpha
/// (else PreconditionError); checks that every point has cross-product norm >= alpha
/// and that the bound is at most beta 2^(2p+1) (1 + |xi|^p), else CertificateFailure.
FourPointBound four_triangle_bound_stage1(const Density& W0, const Mat& xi, double alpha, double beta);

/// Points (xi_1 | xi_2 + nu), (xi_1 | xi_2 - nu), (xi_1 - nu | xi_2), (xi_1 + nu | xi_2)
/// with |nu| = alpha. Every point satisfies the stage-1 precondition; the bound is
/// checked against max(1, alpha^p) gamma 2^(p+1) (1 + |xi|^p).
FourPointBound four_triangle_bound_stage2(const Density& W0, const Mat& xi, double alpha, double gamma);

/// Stage 2 followed by stage 1 at each of its points: a 16-point bound.
struct CompositeBound {
    ExtReal bound;  ///< (1/4) sum of the stage-1 bounds
    double cap = 0.0;
    FourPointBound stage2;
    std::array<FourPointBound, 4> stage1;
};

CompositeBound four_triangle_composite(const Density& W0, const Mat& xi, double alpha, double beta);

nlohmann::json to_json(const FourPointBound& b);
nlohmann::json to_json(const CompositeBound& b);

} // namespace envkit
