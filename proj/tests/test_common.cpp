#include <doctest.h>

#include "flowcast/common.hpp"

using namespace flowcast;

TEST_CASE("gemm variants agree with naive multiplication") {
    Rng rng(3);
    Mat a(7, 5), b(5, 9);
    for (auto& v : a.v) v = rng.uniform(-1, 1);
    for (auto& v : b.v) v = rng.uniform(-1, 1);

    Mat ref(7, 9);
    for (size_t i = 0; i < 7; ++i)
        for (size_t j = 0; j < 9; ++j) {
            double s = 0;
            for (size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
            ref.at(i, j) = s;
        }

    Mat c(7, 9);
    gemm_nn(a, b, c, false);
    for (size_t i = 0; i < c.size(); ++i) CHECK(c.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));

    Mat bt = transpose(b);
    Mat c2(7, 9);
    gemm_nt(a, bt, c2, false);
    for (size_t i = 0; i < c2.size(); ++i) CHECK(c2.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));

    Mat at = transpose(a);
    Mat c3(7, 9);
    gemm_tn(at, b, c3, false);
    for (size_t i = 0; i < c3.size(); ++i) CHECK(c3.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
}

TEST_CASE("gemm accumulate adds instead of overwriting") {
    Mat a(2, 2), b(2, 2), c(2, 2);
    a.v = {1, 0, 0, 1};
    b.v = {1, 2, 3, 4};
    c.v = {10, 10, 10, 10};
    gemm_nn(a, b, c, true);
    CHECK(c.v[0] == 11);
    CHECK(c.v[1] == 12);
    CHECK(c.v[2] == 13);
    CHECK(c.v[3] == 14);
}

TEST_CASE("rng streams are deterministic and uniform draws stay in range") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(7);
    double s = 0, s2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.03);
    CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("base64 round trip") {
    Rng rng(5);
    for (size_t len : {size_t{0}, size_t{1}, size_t{2}, size_t{3}, size_t{17}, size_t{256}}) {
        std::vector<unsigned char> data(len);
        for (auto& b : data) b = static_cast<unsigned char>(rng.uniform_index(256));
        const std::string enc = base64_encode(data.data(), data.size());
        CHECK(base64_decode(enc) == data);
    }
}

TEST_CASE("format_double round trips exactly") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const double x = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-8, 8));
        double back;
        REQUIRE(parse_double(format_double(x), back));
        CHECK(back == x);
    }
}
