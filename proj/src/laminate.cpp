#include "envkit/laminate.hpp"

#include "envkit/errors.hpp"
#include "envkit/io.hpp"

#include <cmath>
#include <functional>

namespace envkit {

LaminateTree::LaminateTree(const Mat& F) {
    Node root;
    root.matrix = F;
    root.weight = 1.0;
    nodes_.push_back(root);
}

std::pair<int, int> LaminateTree::split(int node, double t, const Vec& a, const Vec& b) {
    Node& parent = nodes_.at(static_cast<std::size_t>(node));
    if (!parent.is_leaf())
        throw PreconditionError("LaminateTree::split: node is already split");
    if (!(t > 0.0 && t < 1.0))
        throw PreconditionError("LaminateTree::split: t must lie in (0, 1)");
    const Mat M = rank_one(a, b);
    if (M.rows() != parent.matrix.rows() || M.cols() != parent.matrix.cols())
        throw DimensionError("LaminateTree::split: direction shape mismatch");
    parent.t = t;
    parent.a = a;
    parent.b = b;
    Node minus;
    minus.matrix = parent.matrix - t * M;
    minus.weight = (1.0 - t) * parent.weight;
    Node plus;
    plus.matrix = parent.matrix + (1.0 - t) * M;
    plus.weight = t * parent.weight;
    const int im = static_cast<int>(nodes_.size());
    parent.minus = im;
    parent.plus = im + 1;
    nodes_.push_back(std::move(minus));
    nodes_.push_back(std::move(plus));
    return {im, im + 1};
}

std::pair<int, int> LaminateTree::split_explicit(int node, double t, const Vec& a, const Vec& b,
                                                 const Mat& minus, const Mat& plus) {
    const auto ids = split(node, t, a, b);
    nodes_[static_cast<std::size_t>(ids.first)].matrix = minus;
    nodes_[static_cast<std::size_t>(ids.second)].matrix = plus;
    return ids;
}

void LaminateTree::snap_leaf(int node, const Mat& M) {
    Node& leaf = nodes_.at(static_cast<std::size_t>(node));
    if (!leaf.is_leaf())
        throw PreconditionError("LaminateTree::snap_leaf: target is not a leaf");
    if ((leaf.matrix - M).norm() > kTolLin * (1.0 + M.norm()))
        throw PreconditionError("LaminateTree::snap_leaf: matrix is not within tolerance of the leaf");
    leaf.matrix = M;
}

void LaminateTree::graft(int node, const LaminateTree& sub) {
    if (sub.empty())
        throw PreconditionError("LaminateTree::graft: empty subtree");
    const Node& leaf = nodes_.at(static_cast<std::size_t>(node));
    if (!leaf.is_leaf())
        throw PreconditionError("LaminateTree::graft: target is not a leaf");
    const Mat& F = leaf.matrix;
    if ((sub.root().matrix - F).norm() > kTolLin * (1.0 + F.norm()))
        throw PreconditionError("LaminateTree::graft: subtree root does not match the leaf");
    const double scale = leaf.weight;
    const int offset = static_cast<int>(nodes_.size()) - 1;
    auto remap = [&](int i) { return i == 0 ? node : i + offset; };
    Node root = sub.nodes_.front();
    root.matrix = F;
    root.weight = scale;
    if (!root.is_leaf()) {
        root.minus = remap(root.minus);
        root.plus = remap(root.plus);
    }
    nodes_[static_cast<std::size_t>(node)] = root;
    for (std::size_t i = 1; i < sub.nodes_.size(); ++i) {
        Node n = sub.nodes_[i];
        n.weight *= scale;
        if (!n.is_leaf()) {
            n.minus = remap(n.minus);
            n.plus = remap(n.plus);
        }
        nodes_.push_back(std::move(n));
    }
}

int LaminateTree::depth() const {
    if (nodes_.empty())
        return 0;
    std::function<int(int)> rec = [&](int i) -> int {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.is_leaf())
            return 0;
        return 1 + std::max(rec(n.minus), rec(n.plus));
    };
    return rec(0);
}

std::size_t LaminateTree::leaf_count() const {
    std::size_t count = 0;
    for (const auto& n : nodes_)
        count += n.is_leaf() ? 1 : 0;
    return count;
}

std::vector<std::pair<Mat, double>> LaminateTree::leaves() const {
    std::vector<std::pair<Mat, double>> out;
    if (nodes_.empty())
        return out;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& n = nodes_[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        if (n.is_leaf()) {
            out.emplace_back(n.matrix, n.weight);
        } else {
            stack.push_back(n.plus);
            stack.push_back(n.minus);
        }
    }
    return out;
}

ExtReal LaminateTree::value(const Density& W) const {
    ExtReal total;
    for (const auto& [F, w] : leaves())
        total += W(F).scaled(w);
    return total;
}

LaminateTree::Residuals LaminateTree::residuals() const {
    Residuals r;
    double weight_sum = 0.0;
    for (const auto& n : nodes_) {
        if (n.is_leaf()) {
            weight_sum += n.weight;
            continue;
        }
        const Node& lo = nodes_[static_cast<std::size_t>(n.minus)];
        const Node& hi = nodes_[static_cast<std::size_t>(n.plus)];
        const double scale = 1.0 + n.matrix.norm();
        const Mat jump = hi.matrix - lo.matrix;
        r.barycenter = std::max(r.barycenter, (n.matrix - ((1.0 - n.t) * lo.matrix + n.t * hi.matrix)).norm() / scale);
        r.direction = std::max(r.direction, (jump - rank_one(n.a, n.b)).norm() / scale);
        if (jump.rows() > 1 && jump.cols() > 1) {
            Eigen::JacobiSVD<Mat> svd(jump);
            r.rank = std::max(r.rank, svd.singularValues()(1));
        }
        r.weight_split = std::max(r.weight_split, std::abs(lo.weight - (1.0 - n.t) * n.weight));
        r.weight_split = std::max(r.weight_split, std::abs(hi.weight - n.t * n.weight));
    }
    r.weight_sum = std::abs(weight_sum - 1.0);
    return r;
}

bool LaminateTree::valid(double tol) const {
    const Residuals r = residuals();
    return r.barycenter <= tol && r.rank <= tol && r.direction <= tol && r.weight_sum <= tol &&
           r.weight_split <= tol;
}

nlohmann::json to_json(const LaminateTree& tree) {
    if (tree.empty())
        return nullptr;
    std::function<nlohmann::json(int)> rec = [&](int i) -> nlohmann::json {
        const auto& n = tree.node(i);
        nlohmann::json j = {{"matrix", matrix_to_json(n.matrix)}, {"weight", n.weight}};
        if (n.is_leaf())
            return j;
        j["t"] = n.t;
        j["a"] = vector_to_json(n.a);
        j["b"] = vector_to_json(n.b);
        j["minus"] = rec(n.minus);
        j["plus"] = rec(n.plus);
        return j;
    };
    return rec(0);
}

} // namespace envkit
