#pragma once

#include "envkit/density.hpp"

#include <json.hpp>

#include <vector>

namespace envkit {

/// Sampling box for the convex reference: every entry ranges over
/// [center - half_width, center + half_width] with `points` nodes (odd, so the
/// center is a node).
struct BoxConfig {
    Mat center;
    double half_width = 3.0;
    int points = 33;
};

BoxConfig box_config_from_json(const nlohmann::json& j, int m, int n);

/// Double discrete Legendre-Fenchel transform of W sampled on a box.
///
/// The conjugate is computed separably over a per-axis slope grid spanning the
/// discrete chord slopes of the samples; +inf samples are treated as absent.
/// The result is a box-relative convex minorant of the samples, not the global
/// convex envelope: value(G) <= W(G) at every sampled node.
class ConvexReference {
public:
    ConvexReference(const Density& W, BoxConfig box);

    /// max over the slope grid of <s, G> - W*(s); -inf is reported as 0 (W >= 0).
    [[nodiscard]] double value(const Mat& G) const;
    /// Value at a box node given per-axis indices (row-major entries).
    [[nodiscard]] double node_value(const std::vector<int>& index) const;
    /// True if every sample was +inf (the reference is then +inf everywhere).
    [[nodiscard]] bool degenerate() const { return degenerate_; }
    [[nodiscard]] const BoxConfig& box() const { return box_; }
    [[nodiscard]] double axis_value(int axis, int k) const;

private:
    BoxConfig box_;
    int dims_ = 0;
    int count_ = 0;
    std::vector<std::vector<double>> slopes_; ///< per axis
    std::vector<double> conjugate_;           ///< W* on the slope grid, -inf where undefined
    std::vector<double> biconjugate_;         ///< W** at the box nodes
    bool degenerate_ = false;
};

/// Builds the reference; throws ResourceError beyond 2e7 box nodes.
ConvexReference convex_envelope_reference(const Density& W, const BoxConfig& box);

} // namespace envkit
