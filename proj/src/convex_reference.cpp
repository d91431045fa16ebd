#include "envkit/convex_reference.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace envkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Replaces data[line](i) by max_i (s_j x_i + data[line](i)) along one axis of a
/// row-major array whose axis `axis` has `n_in` entries, producing `n_out` entries.
std::vector<double> transform_axis(const std::vector<double>& in, int dims, int axis, const std::vector<int>& extent,
                                   const std::vector<double>& x, const std::vector<double>& s) {
    std::size_t outer = 1, inner = 1;
    for (int k = 0; k < axis; ++k)
        outer *= static_cast<std::size_t>(extent[static_cast<std::size_t>(k)]);
    for (int k = axis + 1; k < dims; ++k)
        inner *= static_cast<std::size_t>(extent[static_cast<std::size_t>(k)]);
    const std::size_t n_in = x.size();
    const std::size_t n_out = s.size();
    std::vector<double> out(outer * n_out * inner, -kInf);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t q = 0; q < inner; ++q)
            for (std::size_t j = 0; j < n_out; ++j) {
                double best = -kInf;
                for (std::size_t i = 0; i < n_in; ++i) {
                    const double v = in[(o * n_in + i) * inner + q];
                    if (v == -kInf)
                        continue;
                    best = std::max(best, s[j] * x[i] + v);
                }
                out[(o * n_out + j) * inner + q] = best;
            }
    return out;
}

} // namespace

BoxConfig box_config_from_json(const nlohmann::json& j, int m, int n) {
    BoxConfig box;
    box.center = Mat::Zero(m, n);
    if (j.is_null())
        return box;
    if (!j.is_object())
        throw ConfigError("box config must be a JSON object");
    try {
        if (j.contains("center"))
            box.center = matrix_from_json(j["center"]);
        box.half_width = j.value("half_width", box.half_width);
        box.points = j.value("points", box.points);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("box config: ") + e.what());
    }
    if (box.center.rows() != m || box.center.cols() != n)
        throw DimensionError("box config: center shape does not match the density");
    return box;
}

ConvexReference::ConvexReference(const Density& W, BoxConfig box) : box_(std::move(box)) {
    if (box_.center.rows() != W.m() || box_.center.cols() != W.n())
        throw DimensionError("convex reference: box center shape does not match the density");
    if (box_.points < 3 || box_.points % 2 == 0)
        throw ConfigError("convex reference: points per axis must be odd and >= 3");
    if (!(box_.half_width > 0.0))
        throw ConfigError("convex reference: half_width must be positive");
    dims_ = W.m() * W.n();
    count_ = box_.points;
    const double total = std::pow(static_cast<double>(count_), dims_);
    if (total > 2e7)
        throw ResourceError("convex reference: box has more than 2e7 nodes");
    const auto nodes = static_cast<std::size_t>(total);

    // Samples as -W, with absent (+inf) samples stored as -inf.
    std::vector<double> g(nodes);
    std::vector<int> extent(static_cast<std::size_t>(dims_), count_);
    bool any_finite = false;
    for (std::size_t idx = 0; idx < nodes; ++idx) {
        Mat G(W.m(), W.n());
        std::size_t rest = idx;
        for (int k = dims_ - 1; k >= 0; --k) {
            G(k / W.n(), k % W.n()) = axis_value(k, static_cast<int>(rest % static_cast<std::size_t>(count_)));
            rest /= static_cast<std::size_t>(count_);
        }
        const ExtReal w = W(G);
        g[idx] = w.is_finite() ? -w.value() : -kInf;
        any_finite = any_finite || w.is_finite();
    }
    degenerate_ = !any_finite;
    if (degenerate_)
        return;

    // Slope grid per axis: count_ uniform slopes spanning the finite chord slopes.
    slopes_.resize(static_cast<std::size_t>(dims_));
    const double h = 2.0 * box_.half_width / (count_ - 1);
    for (int axis = 0; axis < dims_; ++axis) {
        std::size_t stride = 1;
        for (int k = axis + 1; k < dims_; ++k)
            stride *= static_cast<std::size_t>(count_);
        double lo = kInf, hi = -kInf;
        for (std::size_t idx = 0; idx < nodes; ++idx) {
            if ((idx / stride) % static_cast<std::size_t>(count_) == static_cast<std::size_t>(count_ - 1))
                continue;
            const double a = g[idx];
            const double b = g[idx + stride];
            if (a == -kInf || b == -kInf)
                continue;
            const double slope = (a - b) / h; // chord slope of W = -g
            lo = std::min(lo, slope);
            hi = std::max(hi, slope);
        }
        if (!(lo < hi)) {
            const double mid = std::isfinite(lo) ? lo : 0.0;
            lo = mid - 1.0;
            hi = mid + 1.0;
        }
        auto& s = slopes_[static_cast<std::size_t>(axis)];
        s.resize(static_cast<std::size_t>(count_));
        for (int k = 0; k < count_; ++k)
            s[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (count_ - 1);
    }

    std::vector<double> axis_x(static_cast<std::size_t>(count_));
    // Forward transform: W*(s) = max_x <s, x> - W(x).
    std::vector<double> cur = g;
    for (int axis = 0; axis < dims_; ++axis) {
        for (int k = 0; k < count_; ++k)
            axis_x[static_cast<std::size_t>(k)] = axis_value(axis, k);
        cur = transform_axis(cur, dims_, axis, extent, axis_x, slopes_[static_cast<std::size_t>(axis)]);
    }
    conjugate_ = cur;

    // Backward transform: W**(x) = max_s <s, x> - W*(s), at the box nodes.
    for (auto& v : cur)
        v = -v;
    for (int axis = 0; axis < dims_; ++axis) {
        for (int k = 0; k < count_; ++k)
            axis_x[static_cast<std::size_t>(k)] = axis_value(axis, k);
        cur = transform_axis(cur, dims_, axis, extent, slopes_[static_cast<std::size_t>(axis)], axis_x);
    }
    biconjugate_ = std::move(cur);
}

double ConvexReference::axis_value(int axis, int k) const {
    const int n = static_cast<int>(box_.center.cols());
    const double h = 2.0 * box_.half_width / (count_ - 1);
    return box_.center(axis / n, axis % n) + (k - (count_ - 1) / 2) * h;
}

double ConvexReference::node_value(const std::vector<int>& index) const {
    if (static_cast<int>(index.size()) != dims_)
        throw DimensionError("convex reference: index length does not match the box");
    if (degenerate_)
        return kInf;
    std::size_t flat = 0;
    for (int k : index) {
        if (k < 0 || k >= count_)
            throw PreconditionError("convex reference: node index outside the box");
        flat = flat * static_cast<std::size_t>(count_) + static_cast<std::size_t>(k);
    }
    return std::max(0.0, biconjugate_[flat]);
}

double ConvexReference::value(const Mat& G) const {
    if (G.rows() != box_.center.rows() || G.cols() != box_.center.cols())
        throw DimensionError("convex reference: matrix shape does not match the box");
    if (degenerate_)
        return kInf;
    // Nested maximum over the slope grid, one axis at a time from the last.
    std::vector<double> cur(conjugate_.size());
    for (std::size_t i = 0; i < cur.size(); ++i)
        cur[i] = -conjugate_[i];
    std::size_t len = cur.size();
    const int n = static_cast<int>(G.cols());
    for (int axis = dims_ - 1; axis >= 0; --axis) {
        const double x = G(axis / n, axis % n);
        const auto& s = slopes_[static_cast<std::size_t>(axis)];
        const std::size_t outer = len / s.size();
        for (std::size_t o = 0; o < outer; ++o) {
            double best = -kInf;
            for (std::size_t j = 0; j < s.size(); ++j)
                best = std::max(best, s[j] * x + cur[o * s.size() + j]);
            cur[o] = best;
        }
        len = outer;
    }
    return std::max(0.0, cur[0]);
}

ConvexReference convex_envelope_reference(const Density& W, const BoxConfig& box) {
    return ConvexReference(W, box);
}

} // namespace envkit
