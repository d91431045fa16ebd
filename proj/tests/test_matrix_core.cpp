#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "envkit/errors.hpp"
#include "envkit/ext_real.hpp"
#include "envkit/io.hpp"
#include "envkit/linalg.hpp"

#include <random>

using namespace envkit;

namespace {

Mat random_matrix(int m, int n, std::mt19937_64& rng, double scale = 2.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat F(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            F(i, j) = u(rng);
    return F;
}

Mat from_rows(int m, int n, std::initializer_list<double> entries) {
    Mat F(m, n);
    auto it = entries.begin();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            F(i, j) = *it++;
    return F;
}

Vec vec(std::initializer_list<double> entries) {
    Vec v(static_cast<Eigen::Index>(entries.size()));
    Eigen::Index k = 0;
    for (double x : entries)
        v(k++) = x;
    return v;
}

} // namespace

TEST_SUITE("ext_real") {
    TEST_CASE("finite and infinite classes are exclusive") {
        const ExtReal a(2.0);
        CHECK(a.is_finite());
        CHECK_FALSE(a.is_infinite());
        CHECK(ExtReal::infinity().is_infinite());
        CHECK(ExtReal().value() == 0.0);
    }

    TEST_CASE("addition absorbs infinity") {
        CHECK((ExtReal(1.0) + ExtReal(2.5)).value() == 3.5);
        CHECK((ExtReal(1.0) + ExtReal::infinity()).is_infinite());
        ExtReal s;
        s += ExtReal::infinity();
        s += ExtReal(4.0);
        CHECK(s.is_infinite());
    }

    TEST_CASE("scaling by zero gives zero even for infinity") {
        CHECK(ExtReal::infinity().scaled(0.0).value() == 0.0);
        CHECK(ExtReal::infinity().scaled(0.5).is_infinite());
        CHECK(ExtReal(3.0).scaled(2.0).value() == 6.0);
        CHECK_THROWS_AS(ExtReal(1.0).scaled(-1.0), std::invalid_argument);
    }

    TEST_CASE("negative and NaN values are rejected") {
        CHECK_THROWS_AS(ExtReal(-1.0), std::invalid_argument);
        CHECK_THROWS_AS(ExtReal(std::nan("")), std::invalid_argument);
    }

    TEST_CASE("min is infinite only when both are") {
        CHECK(min(ExtReal::infinity(), ExtReal(3.0)).value() == 3.0);
        CHECK(min(ExtReal::infinity(), ExtReal::infinity()).is_infinite());
        CHECK(ExtReal(1.0) < ExtReal::infinity());
        CHECK(ExtReal::infinity() <= ExtReal::infinity());
    }

    TEST_CASE("text form") {
        CHECK(ExtReal::infinity().to_string() == "inf");
        CHECK(ExtReal(0.5).to_string() == "0.5");
    }
}

TEST_SUITE("linalg") {
    TEST_CASE("determinant examples") {
        CHECK(det(Mat::Identity(2, 2)) == doctest::Approx(1.0));
        CHECK(det(from_rows(2, 2, {2, 0, 0, 3})) == doctest::Approx(6.0));
        CHECK(det(from_rows(2, 2, {0, 1, 1, 0})) == doctest::Approx(-1.0));
        CHECK_THROWS_AS(det(Mat::Zero(3, 2)), DimensionError);
    }

    TEST_CASE("cross product norm examples") {
        CHECK(cross_product_norm(from_rows(3, 2, {1, 0, 0, 1, 0, 0})) == doctest::Approx(1.0));
        CHECK(cross_product_norm(from_rows(3, 2, {1, 2, 0, 0, 0, 0})) == 0.0);
        CHECK(cross_product_norm(from_rows(3, 2, {1, 1, 0, 1, 0, 0})) == doctest::Approx(1.0));
        CHECK_THROWS_AS(cross_product_norm(Mat::Zero(2, 2)), DimensionError);
    }

    TEST_CASE("min singular product examples") {
        CHECK(min_singular_product(from_rows(2, 2, {1, 0, 0, 2})) == doctest::Approx(2.0));
        CHECK(min_singular_product(from_rows(2, 2, {1, 2, 2, 4})) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK_THROWS_AS(min_singular_product(Mat::Zero(2, 3)), DimensionError);
    }

    TEST_CASE("min singular product matches |det| and the cross product") {
        std::mt19937_64 rng(11);
        for (int s = 0; s < 100; ++s) {
            const int n = 2 + s % 3;
            const Mat F = random_matrix(n, n, rng);
            CHECK(std::abs(min_singular_product(F) - std::abs(det(F))) <= kTolLin * (1.0 + std::abs(det(F))));
            const Mat xi = random_matrix(3, 2, rng);
            CHECK(std::abs(min_singular_product(xi) - cross_product_norm(xi)) <= kTolLin);
        }
    }

    TEST_CASE("svd_ascending examples") {
        const SvdFactorization f = svd_ascending(from_rows(2, 2, {3, 0, 0, 1}));
        CHECK(f.sv(0) == doctest::Approx(1.0));
        CHECK(f.sv(1) == doctest::Approx(3.0));
        const SvdFactorization id = svd_ascending(Mat::Identity(3, 3));
        for (int i = 0; i < 3; ++i)
            CHECK(id.sv(i) == doctest::Approx(1.0));
    }

    TEST_CASE("svd_ascending invariants on 1000 random matrices") {
        std::mt19937_64 rng(12);
        for (int s = 0; s < 1000; ++s) {
            const int n = 1 + s % 4;
            const int m = n + static_cast<int>(rng() % static_cast<unsigned>(5 - n));
            const Mat F = random_matrix(m, n, rng);
            const SvdFactorization f = svd_ascending(F);
            REQUIRE(f.sv.size() == n);
            for (int i = 0; i + 1 < n; ++i)
                CHECK(f.sv(i) <= f.sv(i + 1));
            CHECK(f.sv(0) >= 0.0);
            CHECK((f.P.transpose() * f.P - Mat::Identity(m, m)).norm() <= kTolLin);
            CHECK((f.Q.transpose() * f.Q - Mat::Identity(n, n)).norm() <= kTolLin);
            CHECK(std::abs(det(f.Q) - 1.0) <= kTolLin);
            const Mat D = f.sv.asDiagonal();
            const Mat R = f.P * rect_identity(m, n) * f.Q.transpose() * D * f.Q;
            CHECK((F - R).norm() <= kTolLin * (1.0 + F.norm()));
        }
    }

    TEST_CASE("svd_ascending rejects wide and non-finite input") {
        CHECK_THROWS_AS(svd_ascending(Mat::Zero(2, 3)), DimensionError);
        Mat bad = Mat::Identity(2, 2);
        bad(0, 0) = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(svd_ascending(bad), LinAlgError);
    }

    TEST_CASE("rank_one examples and rank") {
        CHECK(rank_one(vec({1, 0}), vec({1, 0})) == from_rows(2, 2, {1, 0, 0, 0}));
        CHECK(rank_one(vec({0, 0}), vec({1, 2})).isZero(0.0));
        CHECK(rank_one(vec({1, 1}), vec({1, 0, 0})) == from_rows(3, 2, {1, 1, 0, 0, 0, 0}));
        std::mt19937_64 rng(13);
        for (int s = 0; s < 50; ++s) {
            const Vec a = random_matrix(3, 1, rng);
            const Vec b = random_matrix(3, 1, rng);
            const SvdFactorization f = svd_ascending(rank_one(a, b));
            CHECK(f.sv(1) <= kTolLin * (1.0 + f.sv(2)));
            CHECK(is_rank_at_most_one(rank_one(a, b)));
        }
    }

    TEST_CASE("canonical diagonal is invariant under rotations") {
        std::mt19937_64 rng(14);
        for (int s = 0; s < 100; ++s) {
            const int n = 2 + s % 2;
            const Mat F = random_matrix(n, n, rng);
            Eigen::HouseholderQR<Eigen::MatrixXd> q1(Eigen::MatrixXd(random_matrix(n, n, rng)));
            Eigen::MatrixXd R = q1.householderQ();
            if (R.determinant() < 0)
                R.col(0) *= -1.0;
            const Vec c = canonical_diagonal(F);
            const Vec c2 = canonical_diagonal(Mat(R * Eigen::MatrixXd(F)));
            CHECK((c - c2).norm() <= 1e-9 * (1.0 + c.norm()));
            double prod = 1.0;
            for (int i = 0; i < n; ++i)
                prod *= c(i);
            CHECK(prod == doctest::Approx(det(F)).epsilon(1e-9));
        }
    }
}

TEST_SUITE("io") {
    TEST_CASE("matrix literal round trip") {
        const Mat F = parse_matrix_literal("0,0;0,2");
        CHECK(F.rows() == 2);
        CHECK(F(1, 1) == 2.0);
        std::mt19937_64 rng(15);
        const Mat G = random_matrix(3, 2, rng);
        CHECK(parse_matrix_literal(format_matrix_literal(G)) == G);
        CHECK_THROWS_AS(parse_matrix_literal("1,2;3"), ConfigError);
        CHECK_THROWS_AS(parse_matrix_literal("a,b"), ConfigError);
    }

    TEST_CASE("json matrix forms agree") {
        const Mat F = parse_matrix_literal("1,2;3,4");
        CHECK(matrix_from_json(matrix_to_json(F)) == F);
        CHECK(matrix_from_json(nlohmann::json("1,2;3,4")) == F);
    }

    TEST_CASE("extended reals in json") {
        CHECK(ext_to_json(ExtReal::infinity()) == "inf");
        CHECK(ext_from_json(ext_to_json(ExtReal(1.25))).value() == 1.25);
        CHECK(ext_from_json(nlohmann::json("inf")).is_infinite());
    }

    TEST_CASE("double formatting round trips") {
        for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, 2.0})
            CHECK(std::stod(format_double(x)) == x);
        CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    }

    TEST_CASE("FNV-1a reference values") {
        CHECK(fnv1a_hex("") == "cbf29ce484222325");
        CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    }

    TEST_CASE("artifact stamp") {
        nlohmann::json a = {{"x", 1}};
        stamp_artifact(a, {{"command", "verify"}}, 7);
        CHECK(a["tool_version"] == kToolVersion);
        CHECK(a["seed"] == 7);
        CHECK(a["config_digest"].get<std::string>().size() == 16);
    }
}
