#pragma once

#include "envkit/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace envkit {

/// Matrix sample set: low-discrepancy points in the Frobenius ball |F| <= radius,
/// followed by structured points (diagonal, rank-deficient, near-singular).
struct SampleSpec {
    int m = 2;
    int n = 2;
    double radius = 5.0;
    int count = 10000;
    int structured = 100;
    std::uint64_t seed = 0;
};

SampleSpec sample_spec_from_json(const nlohmann::json& j, SampleSpec defaults = {});
nlohmann::json to_json(const SampleSpec& s);

/// Deterministic sample set. The first `count` points come from a Sobol sequence
/// with a seed-derived Cranley-Patterson shift, mapped to the ball by a normal
/// direction and radius R u^(1/d). The remaining `structured` points cycle through
/// diagonal matrices, exactly rank-deficient matrices and matrices whose smallest
/// singular-value product lies in [0, 0.1] (signed det in [-0.1, 0.1] when square).
/// Throws ConfigError if the set would be empty.
std::vector<Mat> generate_samples(const SampleSpec& spec);

/// A random matrix with exactly vanishing determinant / cross product: b a^T with
/// the entries of a drawn from {0, +-1/2, +-1, +-2}, so every 2x2 minor cancels exactly.
template <class Rng>
Mat exact_rank_one(int m, int n, double scale, Rng& rng);

} // namespace envkit

#include "envkit/detail/sampling_impl.hpp"
