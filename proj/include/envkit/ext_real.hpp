#pragma once

#include <limits>
#include <ostream>
#include <string>

namespace envkit {

/// Nonnegative extended real number: a finite value in [0, +inf) or +inf.
///
/// Negative values and NaN are rejected at construction, so every ExtReal in
/// flight is a valid energy value.
class ExtReal {
public:
    constexpr ExtReal() = default;
    /// Throws std::invalid_argument for negative or NaN input.
    explicit ExtReal(double v);

    static constexpr ExtReal infinity() { return ExtReal(Tag{}, std::numeric_limits<double>::infinity()); }
    static constexpr ExtReal zero() { return ExtReal(); }

    [[nodiscard]] constexpr bool is_finite() const { return value_ != std::numeric_limits<double>::infinity(); }
    [[nodiscard]] constexpr bool is_infinite() const { return !is_finite(); }

    /// Raw value; +inf is returned as IEEE infinity.
    [[nodiscard]] constexpr double value() const { return value_; }

    friend constexpr ExtReal operator+(ExtReal a, ExtReal b) { return ExtReal(Tag{}, a.value_ + b.value_); }
    ExtReal& operator+=(ExtReal o) {
        value_ += o.value_;
        return *this;
    }

    /// Multiplication by a finite scalar s >= 0. 0 * inf is taken as 0 (zero-weight branch).
    [[nodiscard]] ExtReal scaled(double s) const;

    friend constexpr bool operator==(ExtReal a, ExtReal b) { return a.value_ == b.value_; }
    friend constexpr auto operator<=>(ExtReal a, ExtReal b) { return a.value_ <=> b.value_; }

    [[nodiscard]] std::string to_string() const;

private:
    struct Tag {};
    constexpr ExtReal(Tag, double v) : value_(v) {}
    double value_ = 0.0;
};

inline constexpr ExtReal min(ExtReal a, ExtReal b) { return b < a ? b : a; }

std::ostream& operator<<(std::ostream& os, ExtReal x);

} // namespace envkit
