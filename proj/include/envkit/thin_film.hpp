#pragma once

#include "envkit/density.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace envkit {

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    [[nodiscard]] double area() const { return (x1 - x0) * (y1 - y0); }
};

/// Affine piece of the membrane map: psi(x) = offset + gradient x on `rect`.
struct PsiPiece {
    Rect rect;
    Mat gradient = Mat::Zero(3, 2);
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

/// Director phi_k: a constant vector or the bilinear interpolant of corner values on Sigma.
struct Director {
    enum class Kind { constant, bilinear } kind = Kind::constant;
    /// Corner values at (x0, y0), (x1, y0), (x0, y1), (x1, y1); all equal for a constant director.
    std::array<Eigen::Vector3d, 4> corners{};
};

/// Thin-film recovery setup: midsurface, thicknesses, membrane map and director.
struct ThinFilmSpec {
    Rect sigma;
    std::vector<double> eps_list{0.2, 0.1, 0.05, 0.025, 0.0125};
    std::vector<PsiPiece> psi;
    Director director;
    int cells = 4;      ///< quadrature cells per axis per piece
    int quadrature = 4; ///< Gauss order per axis (2..6), in x and in x3
    int det_floor_j = 1; ///< precondition det(grad psi | phi_k) >= 1 / (2 j)

    /// Director value and gradient (3x2) at x.
    [[nodiscard]] Eigen::Vector3d phi(double x, double y) const;
    [[nodiscard]] Mat grad_phi(double x, double y) const;
};

/// Parses {"sigma": [x0, x1, y0, y1], "eps": [...], "psi": {...}, "director": {...},
/// "cells", "quadrature", "det_floor_j"}. "psi" is either {"gradient", "offset"} for an
/// affine map on Sigma or {"pieces": [{"rect", "gradient", "offset"}, ...]}. "director"
/// is {"type": "constant", "value": [..]} or {"type": "bilinear", "corners": [[..] x 4]}.
/// Throws ConfigError on malformed input or when the pieces do not tile Sigma.
ThinFilmSpec thin_film_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ThinFilmSpec& spec);

/// (1/eps) int_{Sigma_eps} W over the recovery field psi(x) + x3 phi_k(x), rescaled to
/// Sigma x (-1/2, 1/2): sum over quadrature points of w W(grad psi + eps x3 grad phi_k | phi_k).
/// Any +inf quadrature value makes the result +inf. Requires a 3x3 density and eps > 0.
ExtReal film_energy(const Density& W, const ThinFilmSpec& spec, double eps);

/// The eps -> 0 limit int_Sigma W(grad psi | phi_k) with the same x-quadrature.
ExtReal film_target(const Density& W, const ThinFilmSpec& spec);

/// Thickness average of the recovery field at x: exactly psi(x).
Eigen::Vector3d pi_average(const ThinFilmSpec& spec, double x, double y);

/// Same average computed by Gauss quadrature in x3 (agrees with pi_average to rounding).
Eigen::Vector3d pi_average_quadrature(const ThinFilmSpec& spec, double eps, double x, double y);

struct RecoveryRow {
    double eps = 0.0;
    ExtReal energy;
    ExtReal target;
    double error = 0.0;
    double ratio = 0.0; ///< error / previous error (0 for the first row or 0/0)
};

struct RecoveryReport {
    std::vector<RecoveryRow> rows;
    /// Errors strictly decreasing; consecutive errors both below 1e-12 (1 + |target|) also pass.
    bool decreasing = false;
    /// ratio <= 0.6 over the final three halvings (or the error there is below the same floor)
    bool ratio_ok = false;
    [[nodiscard]] bool passed() const { return decreasing && ratio_ok; }
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Energies along eps_list against the limit. Throws PreconditionError naming the
/// quadrature point where det(grad psi | phi_k) < 1 / (2 j).
RecoveryReport recovery_convergence(const Density& W, const ThinFilmSpec& spec);

} // namespace envkit
