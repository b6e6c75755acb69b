#include <doctest.h>

#include <vector>

#include "stylepipe/kernels.hpp"
#include "stylepipe/rng.hpp"

using namespace stylepipe;

namespace {

std::vector<real> random_vec(int64_t n, Rng& rng) {
    std::vector<real> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<real>(rng.normal());
    return v;
}

struct BackendGuard {
    kernels::Backend prev = kernels::backend();
    ~BackendGuard() { kernels::set_backend(prev); }
};

}  // namespace

TEST_CASE("matmul_nn matches brute force") {
    Rng rng(1);
    const int64_t m = 3, k = 4, p = 2;
    auto a = random_vec(m * k, rng), b = random_vec(k * p, rng);
    std::vector<real> c(m * p, real(-1));
    kernels::matmul_nn(a.data(), b.data(), c.data(), m, k, p);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < p; ++j) {
            real acc = 0;
            for (int64_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * p + j];
            CHECK(c[i * p + j] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("transposed matmul variants agree with explicit transposes") {
    Rng rng(2);
    const int64_t m = 5, k = 3, p = 4;
    auto a = random_vec(m * k, rng), b = random_vec(k * p, rng);
    std::vector<real> c_ref(m * p);
    kernels::matmul_nn(a.data(), b.data(), c_ref.data(), m, k, p);

    // nt: given A[m,p] and B[k,p], C = A B^T. Feed c_ref[m,p] and b[k,p]:
    // result[m,k] should equal c_ref * b^T computed by hand.
    std::vector<real> c_nt(m * k);
    kernels::matmul_nt(c_ref.data(), b.data(), c_nt.data(), m, p, k);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < k; ++j) {
            real acc = 0;
            for (int64_t l = 0; l < p; ++l) acc += c_ref[i * p + l] * b[j * p + l];
            CHECK(c_nt[i * k + j] == doctest::Approx(acc).epsilon(1e-12));
        }

    std::vector<real> c_tn(k * p);
    kernels::matmul_tn(a.data(), c_ref.data(), c_tn.data(), m, k, p);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < p; ++j) {
            real acc = 0;
            for (int64_t l = 0; l < m; ++l) acc += a[l * k + i] * c_ref[l * p + j];
            CHECK(c_tn[i * p + j] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("parallel backend is bit-identical to serial") {
    BackendGuard guard;
    Rng rng(3);
    // large enough to cross the parallel grain thresholds
    const int64_t m = 96, k = 64, p = 80;
    auto a = random_vec(m * k, rng), b = random_vec(k * p, rng);

    kernels::set_backend(kernels::Backend::serial);
    std::vector<real> c1(m * p), sm1(m * k), ln1(m * k), mean1(m), rstd1(m);
    kernels::matmul_nn(a.data(), b.data(), c1.data(), m, k, p);
    kernels::softmax_rows(a.data(), sm1.data(), m, k);
    std::vector<real> gain(k, real(1.2)), bias(k, real(-0.1));
    kernels::layernorm_rows(a.data(), gain.data(), bias.data(), ln1.data(), mean1.data(),
                            rstd1.data(), m, k, real(1e-5));
    std::vector<real> g1(m * k);
    kernels::gelu(a.data(), g1.data(), m * k);

    kernels::set_backend(kernels::Backend::parallel);
    std::vector<real> c2(m * p), sm2(m * k), ln2(m * k), mean2(m), rstd2(m);
    kernels::matmul_nn(a.data(), b.data(), c2.data(), m, k, p);
    kernels::softmax_rows(a.data(), sm2.data(), m, k);
    kernels::layernorm_rows(a.data(), gain.data(), bias.data(), ln2.data(), mean2.data(),
                            rstd2.data(), m, k, real(1e-5));
    std::vector<real> g2(m * k);
    kernels::gelu(a.data(), g2.data(), m * k);

    CHECK(c1 == c2);
    CHECK(sm1 == sm2);
    CHECK(ln1 == ln2);
    CHECK(g1 == g2);
}

TEST_CASE("softmax rows sum to one and resist overflow") {
    std::vector<real> x = {1000, 0, 3, 2, 1, 0};
    std::vector<real> y(6);
    kernels::softmax_rows(x.data(), y.data(), 2, 3);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y[1] + y[2] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y[3] + y[4] + y[5] == doctest::Approx(1.0).epsilon(1e-12));
}
