#include <doctest.h>

#include <vector>

#include "stylepipe/tensor.hpp"
#include "test_helpers.hpp"

using namespace stylepipe;
using test_helpers::finite_diff_grad;
using test_helpers::rel_err;

TEST_CASE("matmul identity and hand examples") {
    auto I = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
    auto v = Tensor::from_vector({2, 1}, {3, 4});
    auto out = matmul(I, v);
    CHECK(out.data()[0] == 3);
    CHECK(out.data()[1] == 4);

    auto a = Tensor::from_vector({1, 2}, {1, 2});
    auto b = Tensor::from_vector({2, 1}, {3, 4});
    CHECK(matmul(a, b).item() == 11);
}

TEST_CASE("matmul against naive triple loop on random shapes") {
    Rng rng(7);
    auto a = Tensor::randn({3, 4}, rng);
    auto b = Tensor::randn({4, 2}, rng);
    auto c = matmul(a, b);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 2; ++j) {
            real acc = 0;
            for (int64_t k = 0; k < 4; ++k) acc += a.data()[i * 4 + k] * b.data()[k * 2 + j];
            CHECK(c.data()[i * 2 + j] == doctest::Approx(acc).epsilon(1e-13));
        }
}

TEST_CASE("matmul shape errors carry both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), DimensionError);
}

TEST_CASE("batched matmul broadcasts an unbatched rhs") {
    Rng rng(8);
    auto a = Tensor::randn({2, 3, 4}, rng);
    auto b = Tensor::randn({4, 5}, rng);
    auto c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 3, 5});
    for (int64_t bi = 0; bi < 2; ++bi)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 5; ++j) {
                real acc = 0;
                for (int64_t k = 0; k < 4; ++k)
                    acc += a.data()[bi * 12 + i * 4 + k] * b.data()[k * 5 + j];
                CHECK(c.data()[bi * 15 + i * 5 + j] == doctest::Approx(acc).epsilon(1e-13));
            }
}

TEST_CASE("softmax examples from first principles") {
    auto s = softmax_lastdim(Tensor::from_vector({2}, {0, 0}));
    CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-15));

    auto big = softmax_lastdim(Tensor::from_vector({2}, {1000, 0}));
    CHECK(big.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(big.data()[1] == doctest::Approx(0.0).epsilon(1e-12));

    // long-double oracle for direct formula
    auto x = Tensor::from_vector({3}, {1, 2, 3});
    auto y = softmax_lastdim(x);
    long double denom = 0;
    for (int i = 0; i < 3; ++i) denom += expl(static_cast<long double>(i + 1));
    for (int i = 0; i < 3; ++i)
        CHECK(y.data()[i] ==
              doctest::Approx(static_cast<double>(expl(i + 1.0L) / denom)).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one for magnitudes up to 1e3") {
    Rng rng(9);
    auto x = Tensor::randn({16, 8}, rng, 500);
    auto y = softmax_lastdim(x);
    for (int64_t r = 0; r < 16; ++r) {
        real s = 0;
        for (int64_t j = 0; j < 8; ++j) s += y.data()[r * 8 + j];
        CHECK(std::abs(s - real(1)) < 1e-12);
    }
}

TEST_CASE("softmax of empty shape is rejected") {
    CHECK_THROWS_AS(Tensor::zeros({0}), DimensionError);
}

TEST_CASE("backward on quadratic and constant") {
    auto w = Tensor::from_vector({2}, {1, 2}).set_requires_grad();
    auto loss = sum_all(mul(w, w));
    loss.backward();
    CHECK(w.grad()[0] == 2);
    CHECK(w.grad()[1] == 4);
    // repeated backward accumulates
    loss.backward();
    CHECK(w.grad()[0] == 4);
    CHECK(w.grad()[1] == 8);

    auto c = Tensor::scalar(5);
    CHECK_NOTHROW(c.backward());  // no parents, nothing to do

    auto vec = Tensor::zeros({3});
    CHECK_THROWS_AS(vec.backward(), ContractError);
}

TEST_CASE("mse(A x, y) gradient matches central finite differences") {
    Rng rng(11);
    auto A = Tensor::randn({4, 3}, rng);
    auto x = Tensor::randn({3, 1}, rng).set_requires_grad();
    auto y = Tensor::randn({4, 1}, rng);

    auto f = [&]() { return mse_loss(matmul(A, x), y).item(); };
    auto fd = finite_diff_grad(x, f);

    x.zero_grad();
    mse_loss(matmul(A, x), y).backward();
    for (int64_t i = 0; i < 3; ++i) CHECK(rel_err(x.grad()[i], fd[i]) < 1e-6);
}

TEST_CASE("gradcheck across op zoo") {
    Rng rng(12);
    auto w = Tensor::randn({4, 6}, rng).set_requires_grad();
    auto gain = Tensor::randn({6}, rng, real(0.3)).set_requires_grad();
    auto bias = Tensor::randn({6}, rng, real(0.3)).set_requires_grad();
    auto target = Tensor::randn({3, 8}, rng);

    auto build = [&]() {
        auto z = gelu(layer_norm(w, gain, bias));
        auto p = permute(reshape(z, {2, 2, 6}), {1, 0, 2});
        auto q = reshape(p, {3, 8});
        auto s = softmax_lastdim(q);
        return mse_loss(add(s, q), target);
    };
    auto f = [&]() { return build().item(); };

    for (Tensor* param : {&w, &gain, &bias}) {
        auto fd = finite_diff_grad(*param, f);
        w.zero_grad();
        gain.zero_grad();
        bias.zero_grad();
        build().backward();
        for (int64_t i = 0; i < param->numel(); ++i) {
            INFO("param index ", i);
            CHECK(rel_err(param->grad()[i], fd[static_cast<size_t>(i)]) < 1e-5);
        }
    }
}

TEST_CASE("permute and reshape round trips are bit exact") {
    Rng rng(13);
    auto x = Tensor::randn({3, 4, 5}, rng);
    auto rt = permute(permute(x, {2, 0, 1}), {1, 2, 0});
    CHECK(same_values(x, rt));
    auto rs = reshape(reshape(x, {60}), {3, 4, 5});
    CHECK(same_values(x, rs));
}

TEST_CASE("broadcast add and mul over leading dims") {
    auto a = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor::from_vector({3}, {10, 20, 30}).set_requires_grad();
    auto out = add(a, b);
    CHECK(out.data()[0] == 11);
    CHECK(out.data()[5] == 36);
    sum_all(out).backward();
    CHECK(b.grad()[0] == 2);  // two rows contribute
    CHECK(b.grad()[2] == 2);
}

TEST_CASE("embedding row lookup and scatter gradient") {
    auto table = Tensor::from_vector({3, 2}, {1, 2, 3, 4, 5, 6}).set_requires_grad();
    auto row = embedding_row(table, 1);
    CHECK(row.shape() == Shape{1, 2});
    CHECK(row.data()[0] == 3);
    sum_all(scale(row, 2)).backward();
    CHECK(table.grad()[2] == 2);
    CHECK(table.grad()[3] == 2);
    CHECK(table.grad()[0] == 0);
    CHECK_THROWS_AS(embedding_row(table, 3), ConfigError);
}

TEST_CASE("finite checks flag NaN when enabled") {
    set_finite_checks(true);
    auto x = Tensor::from_vector({2}, {1, 0});
    auto inv = Tensor::from_vector({2}, {0, 0});
    // log/sqrt style NaNs are produced upstream; emulate via division by zero
    // within mul of infinity: build inf by scale overflow is awkward, so
    // check the scanner directly.
    x.data()[0] = std::numeric_limits<real>::quiet_NaN();
    CHECK_THROWS_AS(check_finite(x, "test"), NumericError);
    set_finite_checks(false);
    (void)inv;
}

TEST_CASE("concat_lastdim splits gradient") {
    auto a = Tensor::from_vector({2, 2}, {1, 2, 3, 4}).set_requires_grad();
    auto b = Tensor::from_vector({2, 1}, {5, 6}).set_requires_grad();
    auto cat = concat_lastdim(a, b);
    CHECK(cat.shape() == Shape{2, 3});
    CHECK(cat.data()[2] == 5);
    sum_all(cat).backward();
    CHECK(a.grad()[3] == 1);
    CHECK(b.grad()[1] == 1);
}
