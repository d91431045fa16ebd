#pragma once

#include <random>

namespace envkit {

template <class Rng>
Mat exact_rank_one(int m, int n, double scale, Rng& rng) {
    static constexpr double kPicks[] = {0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0};
    std::uniform_int_distribution<int> pick(0, 6);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Vec a(n);
    do {
        for (int j = 0; j < n; ++j)
            a(j) = kPicks[pick(rng)];
    } while (a.isZero(0.0));
    Vec b(m);
    for (int i = 0; i < m; ++i)
        b(i) = scale * unit(rng);
    return rank_one(a, b);
}

} // namespace envkit
