#pragma once

#include "envkit/density.hpp"
#include "envkit/linalg.hpp"

#include <json.hpp>

#include <utility>
#include <vector>

namespace envkit {

/// Binary tree of rank-one splits. A split node with matrix F, fraction t and
/// direction a (x) b has children F - t a(x)b (minus, weight 1 - t) and
/// F + (1 - t) a(x)b (plus, weight t). Weights stored on nodes are absolute.
class LaminateTree {
public:
    struct Node {
        Mat matrix;
        double weight = 1.0;
        double t = 0.0;
        Vec a;
        Vec b;
        int minus = -1;
        int plus = -1;
        [[nodiscard]] bool is_leaf() const { return minus < 0; }
    };

    LaminateTree() = default;
    /// Single-leaf tree at F with weight 1.
    explicit LaminateTree(const Mat& F);

    /// Splits leaf `node` in place; returns {minus, plus} indices.
    std::pair<int, int> split(int node, double t, const Vec& a, const Vec& b);

    /// Split with explicitly given child matrices (e.g. exact grid nodes mapped
    /// through a rotation); the identities are checked by residuals(), not enforced.
    std::pair<int, int> split_explicit(int node, double t, const Vec& a, const Vec& b, const Mat& minus,
                                       const Mat& plus);

    /// Moves leaf `node` to M, which must match its matrix within kTolLin (1 + |M|).
    /// Used to place a leaf exactly on a grid node it was snapped to.
    void snap_leaf(int node, const Mat& M);
    /// Replaces leaf `node` by a copy of `sub`, rescaling its weights.
    /// The root matrix of `sub` must match the leaf matrix within kTolLin (1 + |F|).
    void graft(int node, const LaminateTree& sub);

    [[nodiscard]] const Node& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const Node& root() const { return nodes_.front(); }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] bool empty() const { return nodes_.empty(); }

    [[nodiscard]] int depth() const;
    [[nodiscard]] std::size_t leaf_count() const;
    /// (matrix, weight) of every leaf, in depth-first minus-before-plus order.
    [[nodiscard]] std::vector<std::pair<Mat, double>> leaves() const;

    /// Sum over leaves of weight * W(matrix).
    [[nodiscard]] ExtReal value(const Density& W) const;

    struct Residuals {
        double barycenter = 0.0;  ///< max |parent - ((1-t) minus + t plus)|
        double rank = 0.0;        ///< max second singular value of plus - minus
        double direction = 0.0;   ///< max |plus - minus - a(x)b|
        double weight_sum = 0.0;  ///< |sum of leaf weights - 1|
        double weight_split = 0.0; ///< max |weight(child) - fraction * weight(parent)|
    };
    [[nodiscard]] Residuals residuals() const;

    /// True if every residual is within tol (barycenter and direction scaled by 1 + |parent|).
    [[nodiscard]] bool valid(double tol = kTolLin) const;

private:
    std::vector<Node> nodes_;
};

/// Nested JSON: splits {matrix, weight, t, a, b, minus, plus}, leaves {matrix, weight}.
nlohmann::json to_json(const LaminateTree& tree);

} // namespace envkit
