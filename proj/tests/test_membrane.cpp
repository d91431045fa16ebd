#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "envkit/errors.hpp"
#include "envkit/membrane.hpp"
#include "envkit/thin_film.hpp"

#include <random>

using namespace envkit;

namespace {

Density catalog(const std::string& family, int m, int n) {
    DensitySpec s;
    s.family = family;
    s.m = m;
    s.n = n;
    return make_density(s);
}

Mat random_matrix(int m, int n, std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat F(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            F(i, j) = u(rng);
    return F;
}

Mat with_column(const Mat& xi, const Eigen::Vector3d& zeta) {
    Mat F(3, 3);
    F.leftCols(2) = xi;
    F.col(2) = zeta;
    return F;
}

nlohmann::json flat_film() {
    return {{"sigma", {0.0, 2.0, 0.0, 1.0}},
            {"psi", {{"gradient", {{1.0, 0.0}, {0.0, 1.0}, {0.0, 0.0}}}}},
            {"director", {{"type", "constant"}, {"value", {0.1, 0.2, 1.0}}}}};
}

} // namespace

TEST_SUITE("reduce_density") {
    TEST_CASE("quadratic reduces to |xi|^2 at 100 random xi") {
        const Density W = catalog("quadratic", 3, 3);
        std::mt19937_64 rng(51);
        for (int s = 0; s < 100; ++s) {
            const Mat xi = random_matrix(3, 2, rng, 2.0);
            const ReducedValue r = reduce_at(W, xi);
            CHECK(r.feasible);
            CHECK(std::abs(r.value.value() - xi.squaredNorm()) <= 1e-8);
        }
    }

    TEST_CASE("determinant barrier matches the one-dimensional profile") {
        const Density W = catalog("det_barrier", 3, 3);
        std::mt19937_64 rng(52);
        for (int s = 0; s < 10; ++s) {
            const Mat xi = random_matrix(3, 2, rng, 1.5);
            const double c = cross_product_norm(xi);
            const double expected = xi.squaredNorm() + std::pow(c, -2.0 / 3.0) * (std::pow(2.0, -2.0 / 3.0) + std::cbrt(2.0));
            const ReducedValue r = reduce_at(W, xi);
            CHECK(r.value.value() == doctest::Approx(expected).epsilon(1e-6));
            // The reported zeta reproduces the value.
            CHECK(W(with_column(xi, r.zeta)).value() == doctest::Approx(r.value.value()).epsilon(1e-12));
        }
    }

    TEST_CASE("orthonormal columns") {
        Mat xi = Mat::Zero(3, 2);
        xi(0, 0) = 1.0;
        xi(1, 1) = 1.0;
        const ReducedValue r = reduce_at(catalog("det_barrier", 3, 3), xi);
        CHECK(r.value.value() == doctest::Approx(2.0 + std::pow(2.0, -2.0 / 3.0) + std::cbrt(2.0)).epsilon(1e-8));
        CHECK(r.zeta(2) == doctest::Approx(std::pow(2.0, -1.0 / 3.0)).epsilon(1e-4));
    }

    TEST_CASE("rank-deficient xi gives exactly +inf for strong barriers") {
        const PlaneDensity W0 = reduce_density(catalog("det_barrier", 3, 3));
        CHECK(W0.density.constraint_class() == ConstraintClass::cross_product);
        CHECK(W0.provenance == "reduced_from:det_barrier");
        std::mt19937_64 rng(53);
        for (int s = 0; s < 20; ++s) {
            Mat xi = random_matrix(3, 2, rng, 2.0);
            // Power-of-two multiples keep the computed cross product exactly zero.
            xi.col(1) = (s % 3 == 0 ? 0.0 : (s % 3 == 1 ? 2.0 : -0.5)) * xi.col(0);
            CHECK(W0.density(xi).is_infinite());
            CHECK_FALSE(W0.query(xi).feasible);
        }
    }

    TEST_CASE("never below its own evaluations") {
        const Density W = catalog("weak_det_barrier", 3, 3);
        std::mt19937_64 rng(54);
        for (int s = 0; s < 10; ++s) {
            const Mat xi = random_matrix(3, 2, rng, 1.5);
            const ReducedValue r = reduce_at(W, xi);
            CHECK(r.value <= W(with_column(xi, Eigen::Vector3d::Zero())));
            CHECK(W(with_column(xi, r.zeta)) == r.value);
        }
    }

    TEST_CASE("config parsing") {
        const ReduceConfig c = reduce_config_from_json(nlohmann::json::parse(R"({"max_evals": 100})"));
        CHECK(c.max_evals == 100);
        CHECK(reduce_config_from_json(to_json(c)).scales == c.scales);
    }
}

TEST_SUITE("qw0_bracket") {
    TEST_CASE("convex density collapses the bracket") {
        const PlaneDensity W0 = native_plane_density(catalog("quadratic", 3, 2));
        Mat xi(3, 2);
        xi << 0.5, 0.1, -0.2, 0.8, 0.3, 0.0;
        const Bracket b = qw0_bracket(W0, xi, BracketConfig{});
        CHECK(b.consistent);
        CHECK(std::abs(b.upper.value() - b.lower) <= 1e-4 * (1.0 + b.lower));
        CHECK(to_json(b).contains("lower"));
    }

    TEST_CASE("cross barrier at rank-deficient xi has a finite upper value") {
        const PlaneDensity W0 = native_plane_density(catalog("cross_barrier", 3, 2));
        Mat xi = Mat::Zero(3, 2);
        xi(0, 0) = 1.0;
        CHECK(W0.density(xi).is_infinite());
        const Bracket b = qw0_bracket(W0, xi, BracketConfig{});
        REQUIRE(b.upper.is_finite());
        // Splitting the zero column into +-2^(-1/3) n gives 1 + 2^(-2/3) + 2^(1/3).
        // The table resolves the split magnitude to its node spacing of 0.1.
        CHECK(b.upper.value() <= 1.0 + std::pow(2.0, -2.0 / 3.0) + std::cbrt(2.0) + 0.01);
        CHECK(b.consistent);
    }

    TEST_CASE("a coarse box can overshoot and is reported") {
        const PlaneDensity W0 = native_plane_density(catalog("cross_barrier", 3, 2));
        Mat xi = Mat::Zero(3, 2);
        xi(0, 0) = 1.0;
        BracketConfig cfg;
        cfg.box.points = 5;
        const Bracket b = qw0_bracket(W0, xi, cfg);
        CHECK(b.lower > b.upper.value());
        CHECK_FALSE(b.consistent);
    }
}

TEST_SUITE("commutation") {
    TEST_CASE("quadratic paths agree") {
        Mat xi(3, 2);
        xi << 1.2, 0.1, -0.3, 0.9, 0.2, 0.4;
        const CommutationReport r = commutation_check(catalog("quadratic", 3, 3), {xi});
        REQUIRE(r.samples.size() == 1);
        CHECK(r.max_gap <= 1e-4);
        CHECK(r.flagged == 0);
        CHECK(r.samples[0].path_b.value() == doctest::Approx(xi.squaredNorm()).epsilon(1e-4));
    }
}

TEST_SUITE("thin_film") {
    TEST_CASE("parsing") {
        const ThinFilmSpec spec = thin_film_spec_from_json(flat_film());
        CHECK(spec.sigma.area() == 2.0);
        CHECK(spec.eps_list.size() == 5);
        CHECK(spec.quadrature == 4);
        CHECK(spec.psi.size() == 1);
        CHECK(thin_film_spec_from_json(to_json(spec)).psi.size() == 1);

        auto bad = flat_film();
        bad["eps"] = {0.1, 0.2};
        CHECK_THROWS_AS(thin_film_spec_from_json(bad), ConfigError);
        bad = flat_film();
        bad["eps"] = {0.1, 0.0};
        CHECK_THROWS_AS(thin_film_spec_from_json(bad), ConfigError);
        bad = flat_film();
        bad["quadrature"] = 7;
        CHECK_THROWS_AS(thin_film_spec_from_json(bad), ConfigError);
        bad = flat_film();
        bad["psi"] = {{"pieces", {{{"rect", {0.0, 1.0, 0.0, 1.0}}, {"gradient", {{1, 0}, {0, 1}, {0, 0}}}}}}};
        CHECK_THROWS_AS(thin_film_spec_from_json(bad), ConfigError);
        bad = flat_film();
        bad["director"] = {{"type", "radial"}};
        CHECK_THROWS_AS(thin_film_spec_from_json(bad), ConfigError);
    }

    TEST_CASE("thickness average returns psi") {
        auto j = flat_film();
        j["psi"] = {{"pieces",
                     {{{"rect", {0.0, 1.0, 0.0, 1.0}}, {"gradient", {{1, 0}, {0, 1}, {0, 0}}}, {"offset", {0, 0, 0}}},
                      {{"rect", {1.0, 2.0, 0.0, 1.0}},
                       {"gradient", {{1, 0}, {0, 1}, {0.5, 0}}},
                       {"offset", {0, 0, -0.5}}}}}};
        j["director"] = {{"type", "bilinear"}, {"corners", {{0, 0, 1}, {0.3, 0, 1.2}, {0, -0.2, 0.8}, {0.2, 0.1, 1.5}}}};
        const ThinFilmSpec spec = thin_film_spec_from_json(j);
        for (double x : {0.1, 0.7, 1.3, 1.9})
            for (double y : {0.2, 0.9}) {
                const Eigen::Vector3d psi = pi_average(spec, x, y);
                CHECK(psi(0) == doctest::Approx(x));
                CHECK(psi(1) == doctest::Approx(y));
                for (double eps : spec.eps_list)
                    CHECK((pi_average_quadrature(spec, eps, x, y) - psi).norm() <= 1e-12);
            }
    }

    TEST_CASE("constant director energy is thickness independent") {
        const Density W = catalog("det_barrier", 3, 3);
        const ThinFilmSpec spec = thin_film_spec_from_json(flat_film());
        Mat F = Mat::Identity(3, 3);
        F.col(2) = Eigen::Vector3d(0.1, 0.2, 1.0);
        const double expected = W(F).value() * spec.sigma.area();
        for (double eps : spec.eps_list)
            CHECK(std::abs(film_energy(W, spec, eps).value() - expected) <= 1e-12 * expected);
        CHECK(film_target(W, spec).value() == doctest::Approx(expected));
    }

    TEST_CASE("infinite integrand and precondition") {
        const Density W = catalog("det_barrier", 3, 3);
        auto j = flat_film();
        j["director"]["value"] = {0.0, 0.0, -1.0};
        const ThinFilmSpec spec = thin_film_spec_from_json(j);
        CHECK(film_energy(W, spec, 0.1).is_infinite());
        CHECK_THROWS_AS(recovery_convergence(W, spec), PreconditionError);
        j["director"]["value"] = {0.0, 0.0, 0.4};
        CHECK_THROWS_AS(recovery_convergence(W, thin_film_spec_from_json(j)), PreconditionError);
    }

    TEST_CASE("report forms") {
        const Density W = catalog("det_barrier", 3, 3);
        const RecoveryReport r = recovery_convergence(W, thin_film_spec_from_json(flat_film()));
        CHECK(r.passed());
        for (const RecoveryRow& row : r.rows)
            CHECK(row.error <= 1e-12 * (1.0 + row.target.value()));
        const std::string csv = r.to_csv();
        CHECK(csv.rfind("eps,energy,target,error,ratio\n", 0) == 0);
        CHECK(r.to_json()["rows"].size() == 5);
    }
}
