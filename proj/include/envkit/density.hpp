#pragma once

#include "envkit/ext_real.hpp"
#include "envkit/linalg.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace envkit {

/// Where a density is forced to +inf.
enum class ConstraintClass {
    finite,        ///< finite everywhere
    weak_det,      ///< +inf on -delta <= det F <= 0
    strong_det,    ///< +inf exactly on det F <= 0
    cross_product, ///< +inf exactly on |xi_1 ^ xi_2| = 0 (3x2 only)
};

std::string to_string(ConstraintClass c);

/// Known constants of a density, when the family provides them in closed form.
///
/// alpha/beta are the constants of the determinant-type growth implication
/// (|det F| >= alpha, or |xi_1 ^ xi_2| >= alpha for 3x2, gives W <= beta (1 + |F|^p)).
struct DensityConstants {
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> gamma;
    std::optional<double> coercivity_C;
    std::optional<double> growth_c;
};

using EvalFn = std::function<ExtReal(const Mat&)>;

/// An m x N matrix-argument energy density with values in [0, +inf].
///
/// Cheap to copy: the evaluation closure is shared and immutable.
class Density {
public:
    Density(std::string name, int m, int n, double p, ConstraintClass cls, EvalFn fn,
            DensityConstants constants = {}, bool isotropic = false);

    /// Evaluates W(F); throws DimensionError if F is not m x N.
    ExtReal operator()(const Mat& F) const;

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] int m() const { return m_; }
    [[nodiscard]] int n() const { return n_; }
    [[nodiscard]] double p() const { return p_; }
    [[nodiscard]] ConstraintClass constraint_class() const { return cls_; }
    [[nodiscard]] const DensityConstants& constants() const { return constants_; }

    /// True if W(R F S) = W(F) for all R in SO(m), S in SO(N).
    [[nodiscard]] bool isotropic() const { return isotropic_; }

    /// Catalog spec this density was built from (null for hand-built densities).
    [[nodiscard]] const nlohmann::json& spec() const { return spec_; }
    void set_spec(nlohmann::json spec) { spec_ = std::move(spec); }

private:
    std::string name_;
    int m_;
    int n_;
    double p_;
    ConstraintClass cls_;
    std::shared_ptr<const EvalFn> fn_;
    DensityConstants constants_;
    bool isotropic_;
    nlohmann::json spec_;
};

/// JSON-level description of a catalog density.
struct DensitySpec {
    std::string family;
    int m = 2;
    int n = 2;
    double p = 2.0;
    nlohmann::json params = nlohmann::json::object();
};

/// Parses {"family", "m", "N", "p", "params"}; missing dims/p take family defaults.
DensitySpec density_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DensitySpec& spec);

/// Builds a catalog density. Families:
///   quadratic                       |F|^2
///   double_well {A, B}              min(|F - A|, |F - B|)^p
///   kohn_strang                     0 at F = 0, else 1 + |F|^2 (2x2)
///   det_barrier {c1, c2}            c1 |F|^p + c2 / det F if det F > 0, else +inf
///   weak_det_barrier {delta,c1,c2}  +inf on -delta <= det F <= 0, else c1 |F|^p + c2 / |det F|
///   cross_barrier                   |xi|^p + 1 / |xi_1 ^ xi_2|, +inf when the cross product vanishes (3x2)
/// Throws ConfigError on unknown family or invalid parameters.
Density make_density(const DensitySpec& spec);

/// |F|^p, exact for p = 2.
double norm_pow(const Mat& F, double p);

/// 1 + |F|^p, the growth weight used by every polynomial-growth bound.
double growth_weight(const Mat& F, double p);

} // namespace envkit
