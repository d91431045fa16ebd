#include "envkit/density.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"

#include <cmath>

namespace envkit {

std::string to_string(ConstraintClass c) {
    switch (c) {
    case ConstraintClass::finite:
        return "finite";
    case ConstraintClass::weak_det:
        return "weak_det";
    case ConstraintClass::strong_det:
        return "strong_det";
    case ConstraintClass::cross_product:
        return "cross_product";
    }
    return "unknown";
}

double norm_pow(const Mat& F, double p) {
    if (p == 2.0)
        return F.squaredNorm();
    return std::pow(F.norm(), p);
}

double growth_weight(const Mat& F, double p) {
    return 1.0 + norm_pow(F, p);
}

Density::Density(std::string name, int m, int n, double p, ConstraintClass cls, EvalFn fn,
                 DensityConstants constants, bool isotropic)
    : name_(std::move(name)), m_(m), n_(n), p_(p), cls_(cls),
      fn_(std::make_shared<const EvalFn>(std::move(fn))), constants_(constants),
      isotropic_(isotropic) {
    if (m < 1 || n < 1 || m > kMaxDim || n > kMaxDim)
        throw ConfigError("density \"" + name_ + "\": dims outside 1..4");
    if (!(p > 1.0) || !std::isfinite(p))
        throw ConfigError("density \"" + name_ + "\": growth exponent must be > 1");
    if (cls == ConstraintClass::cross_product && (m != 3 || n != 2))
        throw ConfigError("density \"" + name_ + "\": cross-product class needs 3x2");
    if ((cls == ConstraintClass::weak_det || cls == ConstraintClass::strong_det) && m != n)
        throw ConfigError("density \"" + name_ + "\": determinant class needs a square shape");
}

ExtReal Density::operator()(const Mat& F) const {
    if (F.rows() != m_ || F.cols() != n_)
        throw DimensionError("density \"" + name_ + "\" expects " + std::to_string(m_) + "x" +
                             std::to_string(n_) + ", got " + std::to_string(F.rows()) + "x" +
                             std::to_string(F.cols()));
    return (*fn_)(F);
}

DensitySpec density_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("family") || !j["family"].is_string())
        throw ConfigError("density spec needs a string \"family\"");
    DensitySpec s;
    s.family = j["family"].get<std::string>();
    if (s.family == "cross_barrier") {
        s.m = 3;
        s.n = 2;
    }
    try {
        if (j.contains("m"))
            s.m = j["m"].get<int>();
        if (j.contains("N"))
            s.n = j["N"].get<int>();
        if (j.contains("p"))
            s.p = j["p"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("density spec: ") + e.what());
    }
    if (j.contains("params")) {
        if (!j["params"].is_object())
            throw ConfigError("density spec: \"params\" must be an object");
        s.params = j["params"];
    }
    return s;
}

nlohmann::json to_json(const DensitySpec& spec) {
    return {{"family", spec.family}, {"m", spec.m}, {"N", spec.n}, {"p", spec.p}, {"params", spec.params}};
}

namespace {

double param(const DensitySpec& s, const char* key, double fallback) {
    if (!s.params.contains(key))
        return fallback;
    const auto& v = s.params[key];
    if (!v.is_number())
        throw ConfigError("density \"" + s.family + "\": parameter \"" + key + "\" must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x))
        throw ConfigError("density \"" + s.family + "\": parameter \"" + key + "\" must be finite");
    return x;
}

void require_shape(const DensitySpec& s, bool ok, const char* what) {
    if (!ok)
        throw ConfigError("density \"" + s.family + "\" requires " + what + ", got " + std::to_string(s.m) +
                          "x" + std::to_string(s.n));
}

void require_positive(const DensitySpec& s, double v, const char* key) {
    if (!(v > 0.0))
        throw ConfigError("density \"" + s.family + "\": parameter \"" + key + "\" must be > 0");
}

Density quadratic(const DensitySpec& s) {
    if (s.p != 2.0)
        throw ConfigError("density \"quadratic\" has p = 2");
    DensityConstants k;
    k.coercivity_C = 1.0;
    k.growth_c = 1.0;
    k.alpha = 1.0;
    k.beta = 1.0;
    return Density(
        "quadratic", s.m, s.n, 2.0, ConstraintClass::finite,
        [](const Mat& F) { return ExtReal(F.squaredNorm()); }, k, true);
}

Density double_well(const DensitySpec& s) {
    Mat A = Mat::Zero(s.m, s.n);
    Mat B = Mat::Zero(s.m, s.n);
    B(0, 0) = 1.0;
    if (s.params.contains("A"))
        A = matrix_from_json(s.params["A"]);
    if (s.params.contains("B"))
        B = matrix_from_json(s.params["B"]);
    if (A.rows() != s.m || A.cols() != s.n || B.rows() != s.m || B.cols() != s.n)
        throw ConfigError("density \"double_well\": wells must be m x N");
    const double p = s.p;
    const double reach = std::max(A.norm(), B.norm());
    DensityConstants k;
    k.growth_c = std::pow(2.0, p - 1.0) * std::max(1.0, std::pow(reach, p));
    k.alpha = 1.0;
    k.beta = *k.growth_c;
    return Density(
        "double_well", s.m, s.n, p, ConstraintClass::finite,
        [A, B, p](const Mat& F) {
            const double d = std::min((F - A).norm(), (F - B).norm());
            return ExtReal(p == 2.0 ? d * d : std::pow(d, p));
        },
        k, false);
}

Density kohn_strang(const DensitySpec& s) {
    require_shape(s, s.m == 2 && s.n == 2, "2x2");
    if (s.p != 2.0)
        throw ConfigError("density \"kohn_strang\" has p = 2");
    DensityConstants k;
    k.coercivity_C = 1.0;
    k.growth_c = 1.0;
    k.alpha = 1.0;
    k.beta = 1.0;
    return Density(
        "kohn_strang", 2, 2, 2.0, ConstraintClass::finite,
        [](const Mat& F) {
            if (F.isZero(0.0))
                return ExtReal::zero();
            return ExtReal(1.0 + F.squaredNorm());
        },
        k, true);
}

Density det_barrier(const DensitySpec& s) {
    require_shape(s, s.m == s.n, "a square shape");
    const double p = s.p;
    const double c1 = param(s, "c1", 1.0);
    const double c2 = param(s, "c2", 1.0);
    require_positive(s, c1, "c1");
    require_positive(s, c2, "c2");
    DensityConstants k;
    k.coercivity_C = c1;
    return Density(
        "det_barrier", s.m, s.n, p, ConstraintClass::strong_det,
        [c1, c2, p](const Mat& F) {
            const double d = det(F);
            if (!(d > 0.0))
                return ExtReal::infinity();
            return ExtReal(c1 * norm_pow(F, p) + c2 / d);
        },
        k, true);
}

Density weak_det_barrier(const DensitySpec& s) {
    require_shape(s, s.m == s.n, "a square shape");
    const double p = s.p;
    const double delta = param(s, "delta", 0.1);
    const double c1 = param(s, "c1", 1.0);
    const double c2 = param(s, "c2", 1.0);
    if (!(delta >= 0.0))
        throw ConfigError("density \"weak_det_barrier\": parameter \"delta\" must be >= 0");
    require_positive(s, c1, "c1");
    require_positive(s, c2, "c2");
    DensityConstants k;
    k.coercivity_C = c1;
    k.alpha = std::max(1.0, 2.0 * delta);
    k.beta = std::max(c1, c2 / *k.alpha);
    return Density(
        "weak_det_barrier", s.m, s.n, p, ConstraintClass::weak_det,
        [delta, c1, c2, p](const Mat& F) {
            const double d = det(F);
            if (d <= 0.0 && d >= -delta)
                return ExtReal::infinity();
            return ExtReal(c1 * norm_pow(F, p) + c2 / std::abs(d));
        },
        k, true);
}

Density cross_barrier(const DensitySpec& s) {
    require_shape(s, s.m == 3 && s.n == 2, "3x2");
    const double p = s.p;
    DensityConstants k;
    k.coercivity_C = 1.0;
    k.alpha = 1.0;
    k.beta = 1.0;
    k.gamma = std::pow(2.0, 2.0 * p + 1.0);
    return Density(
        "cross_barrier", 3, 2, p, ConstraintClass::cross_product,
        [p](const Mat& F) {
            const double v = cross_product_norm(F);
            if (v == 0.0)
                return ExtReal::infinity();
            return ExtReal(norm_pow(F, p) + 1.0 / v);
        },
        k, true);
}

} // namespace

Density make_density(const DensitySpec& spec) {
    if (spec.m < 1 || spec.n < 1 || spec.m > kMaxDim || spec.n > kMaxDim)
        throw ConfigError("density \"" + spec.family + "\": dims outside 1..4");
    if (!(spec.p > 1.0) || !std::isfinite(spec.p))
        throw ConfigError("density \"" + spec.family + "\": growth exponent must be > 1");
    Density W = [&] {
        if (spec.family == "quadratic")
            return quadratic(spec);
        if (spec.family == "double_well")
            return double_well(spec);
        if (spec.family == "kohn_strang")
            return kohn_strang(spec);
        if (spec.family == "det_barrier")
            return det_barrier(spec);
        if (spec.family == "weak_det_barrier")
            return weak_det_barrier(spec);
        if (spec.family == "cross_barrier")
            return cross_barrier(spec);
        throw ConfigError("unknown density family \"" + spec.family + "\"");
    }();
    W.set_spec(to_json(spec));
    return W;
}

} // namespace envkit
