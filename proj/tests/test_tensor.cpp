#include <doctest.h>

#include <cmath>
#include <sstream>

#include "idan/errors.hpp"
#include "idan/tensor.hpp"
#include "idan/tensor_io.hpp"
#include "oracles.hpp"

using namespace idan;

namespace {

// weighted-sum loss decorrelates coordinate gradients so none sits near zero
template <typename S>
std::function<TensorT<S>(const TensorT<S>&)> weighted(std::function<TensorT<S>(const TensorT<S>&)> f,
                                                      std::uint64_t seed) {
    return [f = std::move(f), seed](const TensorT<S>& x) {
        TensorT<S> y = f(x);
        Rng rng(seed);
        TensorT<S> w = TensorT<S>::uniform(y.shape(), rng, S(0.3), S(1.7));
        return reduce_sum(mul(y, w));
    };
}

}  // namespace

TEST_CASE("conv2d: all-ones 3x3 gives the window sum") {
    auto x = Tensor::full({1, 1, 3, 3}, 1.f);
    auto w = Tensor::full({1, 1, 3, 3}, 1.f);
    auto y = conv2d(x, w, Tensor(), 1, 0);
    CHECK(y.shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.f));
}

TEST_CASE("conv2d: identity 1x1 kernel passes input through") {
    Rng rng(7);
    auto x = oracle::random_tensor<float>(rng, {2, 3, 5, 4});
    auto w = Tensor::full({3, 3, 1, 1}, 0.f);
    {
        auto wm = w.mutable_values();
        // one 1.0 per matching in/out channel
        for (int c = 0; c < 3; ++c) wm[static_cast<std::size_t>(c) * 3 + c] = 1.f;
    }
    auto y = conv2d(x, w, Tensor(), 1, 0);
    CHECK(oracle::bit_identical(x, y));
}

TEST_CASE("conv2d: random case matches the loop reference") {
    Rng rng(11);
    auto x = oracle::random_tensor<float>(rng, {1, 2, 5, 5});
    auto w = oracle::random_tensor<float>(rng, {3, 2, 3, 3});
    auto y = conv2d(x, w, Tensor(), 1, 1);
    auto ref = oracle::conv2d_reference(x, w, Tensor(), 1, 1);
    REQUIRE(y.shape() == ref.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i)
        CHECK(std::abs(y.at(i) - ref.at(i)) <= 1e-5f);
}

TEST_CASE("conv2d: stride 2 with bias matches the loop reference") {
    Rng rng(12);
    auto x = oracle::random_tensor<float>(rng, {2, 3, 9, 7});
    auto w = oracle::random_tensor<float>(rng, {4, 3, 3, 3});
    auto b = oracle::random_tensor<float>(rng, {4});
    auto y = conv2d(x, w, b, 2, 1);
    auto ref = oracle::conv2d_reference(x, w, b, 2, 1);
    REQUIRE(y.shape() == ref.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i)
        CHECK(std::abs(y.at(i) - ref.at(i)) <= 1e-5f);
}

TEST_CASE("conv2d: output shape sweep obeys floor((H+2p-K)/s)+1") {
    Rng rng(13);
    for (int h = 5; h <= 12; ++h)
        for (int k : {1, 3, 5})
            for (int p : {0, 1, 2})
                for (int s : {1, 2, 3}) {
                    if (k > h + 2 * p) continue;
                    auto x = oracle::random_tensor<float>(rng, {1, 1, h, h});
                    auto w = oracle::random_tensor<float>(rng, {1, 1, k, k});
                    auto y = conv2d(x, w, Tensor(), s, p);
                    const int expect = (h + 2 * p - k) / s + 1;
                    CHECK(y.dim(2) == expect);
                    CHECK(y.dim(3) == expect);
                }
}

TEST_CASE("conv2d: shape mismatch names both shapes") {
    auto x = Tensor::zeros({1, 2, 4, 4});
    auto w = Tensor::zeros({1, 3, 3, 3});
    try {
        conv2d(x, w, Tensor(), 1, 1);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(1,2,4,4)") != std::string::npos);
        CHECK(msg.find("(1,3,3,3)") != std::string::npos);
    }
}

TEST_CASE("max_pool2d: basics and reference") {
    auto x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(max_pool2d(x).item() == doctest::Approx(4.f));

    auto c = Tensor::full({1, 2, 4, 4}, 0.7f);
    auto yc = max_pool2d(c);
    for (std::int64_t i = 0; i < yc.numel(); ++i) CHECK(yc.at(i) == 0.7f);

    Rng rng(21);
    auto r = oracle::random_tensor<float>(rng, {1, 1, 8, 8});
    CHECK(oracle::bit_identical(max_pool2d(r), oracle::max_pool2d_reference(r)));

    CHECK_THROWS_AS(max_pool2d(Tensor::zeros({1, 1, 3, 4})), std::invalid_argument);
}

TEST_CASE("max_pool2d: gradient goes to the first-found argmax") {
    // two equal maxima in the window: scan order (0,0),(0,1),(1,0),(1,1)
    auto x = Tensor::from_data({1, 1, 2, 2}, {5.f, 5.f, 1.f, 0.f}, true);
    auto y = max_pool2d(x);
    backward(reduce_sum(y));
    CHECK(x.grad()[0] == 1.f);  // first-found wins
    CHECK(x.grad()[1] == 0.f);
    CHECK(x.grad()[2] == 0.f);
}

TEST_CASE("upsample_bilinear: identity, constants, frozen 2x2 table") {
    Rng rng(31);
    auto x = oracle::random_tensor<float>(rng, {1, 2, 3, 3});
    CHECK(oracle::bit_identical(upsample_bilinear(x, 1), x));

    auto c = Tensor::full({1, 1, 2, 2}, 0.25f);
    auto yc = upsample_bilinear(c, 3);
    for (std::int64_t i = 0; i < yc.numel(); ++i) CHECK(yc.at(i) == doctest::Approx(0.25f));

    // hand-evaluated align-corners-false grid for [[0,1],[2,3]], factor 2
    auto t = Tensor::from_data({1, 1, 2, 2}, {0, 1, 2, 3});
    auto y = upsample_bilinear(t, 2);
    const float expect[16] = {0.f, 0.25f, 0.75f, 1.f,    0.5f, 0.75f, 1.25f, 1.5f,
                              1.5f, 1.75f, 2.25f, 2.5f,  2.f,  2.25f, 2.75f, 3.f};
    REQUIRE(y.numel() == 16);
    for (int i = 0; i < 16; ++i) CHECK(y.at(i) == doctest::Approx(expect[i]).epsilon(1e-6));

    CHECK_THROWS_AS(upsample_bilinear(t, 0), std::invalid_argument);
}

TEST_CASE("relu and sigmoid: pointwise contracts") {
    auto x = Tensor::from_data({4}, {-3.f, 0.f, 3.f, 100.f});
    auto r = relu(x);
    CHECK(r.at(0) == 0.f);
    CHECK(r.at(1) == 0.f);
    CHECK(r.at(2) == 3.f);

    auto s = sigmoid(Tensor::from_data({4}, {0.f, -100.f, 100.f, 1.f}));
    CHECK(s.at(0) == doctest::Approx(0.5f));
    CHECK(s.at(1) > 0.f);  // strictly inside (0,1) even at saturation
    CHECK(s.at(2) < 1.f);
    for (int i = 0; i < 4; ++i) {
        CHECK(s.at(i) > 0.f);
        CHECK(s.at(i) < 1.f);
    }
}

TEST_CASE("sigmoid: gradient at 0 is 0.25 against central differences") {
    auto f = [](const TensorD& x) { return reduce_sum(sigmoid(x)); };
    auto p = TensorD::from_data({1}, {0.0});
    CHECK(grad_check<double>(f, p, 1e-6) <= 1e-7);
    // analytic value itself
    auto x = TensorD::from_data({1}, {0.0}, true);
    backward(reduce_sum(sigmoid(x)));
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("concat/split: round trips, ordering, gradients") {
    Rng rng(41);
    auto a = oracle::random_tensor<float>(rng, {2, 2, 3, 3});
    auto b = oracle::random_tensor<float>(rng, {2, 2, 3, 3});
    auto cat = concat_channels(a, b);
    CHECK(cat.dim(1) == 4);
    auto [h1, h2] = split_channels_half(cat);
    CHECK(oracle::bit_identical(h1, a));
    CHECK(oracle::bit_identical(h2, b));

    auto six = oracle::random_tensor<float>(rng, {1, 6, 2, 2});
    auto [s1, s2] = split_channels_half(six);
    CHECK(s1.dim(1) == 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) {
                CHECK(s1.at(0, c, y, x) == six.at(0, c, y, x));
                CHECK(s2.at(0, c, y, x) == six.at(0, c + 3, y, x));
            }

    CHECK_THROWS_AS(split_channels_half(Tensor::zeros({1, 5, 2, 2})), std::invalid_argument);

    // gradient of sum(first half) is an indicator of the first half
    auto p = Tensor::from_data({1, 4, 1, 1}, {1, 2, 3, 4}, true);
    auto parts = split_channels_half(p);
    backward(reduce_sum(parts.first));
    CHECK(p.grad()[0] == 1.f);
    CHECK(p.grad()[1] == 1.f);
    CHECK(p.grad()[2] == 0.f);
    CHECK(p.grad()[3] == 0.f);
}

TEST_CASE("elementwise ops: identities") {
    Rng rng(51);
    auto x = oracle::random_tensor<float>(rng, {2, 3, 4, 4});
    auto z = abs(sub(x, x));
    for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z.at(i) == 0.f);

    auto ones = Tensor::full({3, 5}, 1.f);
    CHECK(reduce_sum(ones).item() == doctest::Approx(15.f));

    auto m = reduce_mean_channels(Tensor::from_data({1, 2, 1, 2}, {1, 3, 5, 7}));
    CHECK(m.shape() == std::vector<int>{1, 1, 1, 2});
    CHECK(m.at(0) == doctest::Approx(3.f));
    CHECK(m.at(1) == doctest::Approx(5.f));
}

TEST_CASE("backward: double call and no-grad losses are errors") {
    auto x = Tensor::from_data({2}, {1.f, 2.f}, true);
    auto loss = reduce_sum(mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), std::runtime_error);

    auto y = Tensor::from_data({2}, {1.f, 2.f});
    auto l2 = reduce_sum(y);
    CHECK_THROWS_AS(backward(l2), std::runtime_error);

    CHECK_THROWS_AS(backward(x), std::invalid_argument);  // non-scalar
}

TEST_CASE("grad_check: sum has exact gradient") {
    Rng rng(61);
    auto p = oracle::random_tensor<double>(rng, {3, 4});
    auto f = [](const TensorD& x) { return reduce_sum(x); };
    CHECK(grad_check<double>(f, p, 1e-6) <= 1e-7);
}

TEST_CASE("grad_check: sum of sigmoid at a random point") {
    Rng rng(62);
    auto p = oracle::random_tensor<double>(rng, {2, 3, 4, 4});
    auto f = [](const TensorD& x) { return reduce_sum(sigmoid(x)); };
    CHECK(grad_check<double>(f, p, 1e-6) <= 1e-5);
}

TEST_CASE("gradient sweep: every differentiable op, 10 seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);

        // conv2d w.r.t. input, weight and bias
        {
            auto x = oracle::random_tensor<double>(rng, {1, 2, 5, 5});
            auto w = oracle::random_tensor<double>(rng, {3, 2, 3, 3});
            auto b = oracle::random_tensor<double>(rng, {3});
            auto fx = weighted<double>(
                [w, b](const TensorD& p) { return conv2d(p, w, b, 1, 1); }, seed);
            CHECK(grad_check<double>(fx, x, 1e-6) <= 1e-5);
            auto fw = weighted<double>(
                [x, b](const TensorD& p) { return conv2d(x, p, b, 1, 1); }, seed);
            CHECK(grad_check<double>(fw, w, 1e-6) <= 1e-5);
            auto fb = weighted<double>(
                [x, w](const TensorD& p) { return conv2d(x, w, p, 2, 1); }, seed);
            CHECK(grad_check<double>(fb, b, 1e-6) <= 1e-5);
        }

        // max_pool2d: windows built with distinct, well-separated values
        {
            std::vector<double> v(36);
            for (std::size_t i = 0; i < v.size(); ++i)
                v[i] = -2.0 + 0.11 * static_cast<double>(i) + rng.uniform(-0.02, 0.02);
            // deterministic shuffle so the argmax cell varies
            for (std::size_t i = v.size(); i > 1; --i)
                std::swap(v[i - 1], v[static_cast<std::size_t>(
                                         rng.uniform_int(0, static_cast<int>(i) - 1))]);
            auto x = TensorD::from_data({1, 1, 6, 6}, v);
            auto f = weighted<double>([](const TensorD& p) { return max_pool2d(p); }, seed);
            CHECK(grad_check<double>(f, x, 1e-6) <= 1e-5);
        }

        // bilinear upsample / resize
        {
            auto x = oracle::random_tensor<double>(rng, {1, 2, 3, 4});
            auto fu = weighted<double>(
                [](const TensorD& p) { return upsample_bilinear(p, 2); }, seed);
            CHECK(grad_check<double>(fu, x, 1e-6) <= 1e-5);
            auto fr = weighted<double>(
                [](const TensorD& p) { return resize_bilinear(p, 5, 7); }, seed);
            CHECK(grad_check<double>(fr, x, 1e-6) <= 1e-5);
        }

        // relu (kink-protected) and sigmoid
        {
            auto x0 = oracle::random_tensor<double>(rng, {2, 3, 3, 3});
            auto x = oracle::away_from(x0, 0.0, 1e-3);
            auto f = weighted<double>([](const TensorD& p) { return relu(p); }, seed);
            CHECK(grad_check<double>(f, x, 1e-6) <= 1e-4);
            auto g = weighted<double>([](const TensorD& p) { return sigmoid(p); }, seed);
            CHECK(grad_check<double>(g, x0, 1e-6) <= 1e-5);
        }

        // abs (kink-protected)
        {
            auto x = oracle::away_from(oracle::random_tensor<double>(rng, {3, 4}), 0.0, 1e-3);
            auto f = weighted<double>([](const TensorD& p) { return abs(p); }, seed);
            CHECK(grad_check<double>(f, x, 1e-6) <= 1e-4);
        }

        // add/sub/mul/div/add_const/mul_const against a fixed partner
        {
            auto x = oracle::random_tensor<double>(rng, {2, 5});
            auto other0 = oracle::random_tensor<double>(rng, {2, 5});
            auto other = oracle::away_from(other0, 0.0, 0.3);  // keep division benign
            auto fa = weighted<double>(
                [other](const TensorD& p) { return add(p, other); }, seed);
            CHECK(grad_check<double>(fa, x, 1e-6) <= 1e-5);
            auto fs = weighted<double>(
                [other](const TensorD& p) { return sub(p, other); }, seed);
            CHECK(grad_check<double>(fs, x, 1e-6) <= 1e-5);
            auto fm = weighted<double>(
                [other](const TensorD& p) { return mul(p, other); }, seed);
            CHECK(grad_check<double>(fm, x, 1e-6) <= 1e-5);
            auto fd1 = weighted<double>(
                [other](const TensorD& p) { return div(p, other); }, seed);
            CHECK(grad_check<double>(fd1, x, 1e-6) <= 1e-5);
            auto xd = oracle::away_from(x, 0.0, 0.3);
            auto fd2 = weighted<double>(
                [other](const TensorD& p) { return div(other, p); }, seed);
            CHECK(grad_check<double>(fd2, xd, 1e-6) <= 1e-5);
            auto fc = weighted<double>(
                [](const TensorD& p) { return add_const(mul_const(p, 1.7), -0.4); }, seed);
            CHECK(grad_check<double>(fc, x, 1e-6) <= 1e-5);
        }

        // reductions and channel plumbing
        {
            auto x = oracle::random_tensor<double>(rng, {2, 4, 3, 3});
            auto f = weighted<double>(
                [](const TensorD& p) { return reduce_mean_channels(p); }, seed);
            CHECK(grad_check<double>(f, x, 1e-6) <= 1e-5);
            auto other = oracle::random_tensor<double>(rng, {2, 4, 3, 3});
            auto fc = weighted<double>(
                [other](const TensorD& p) { return concat_channels(p, other); }, seed);
            CHECK(grad_check<double>(fc, x, 1e-6) <= 1e-5);
            auto fs = weighted<double>(
                [](const TensorD& p) {
                    auto parts = split_channels_half(p);
                    return add(parts.first, mul_const(parts.second, 0.5));
                },
                seed);
            CHECK(grad_check<double>(fs, x, 1e-6) <= 1e-5);
        }
    }
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
    Rng rng(71);
    auto x = oracle::random_tensor<float>(rng, {1, 3, 8, 8});
    auto w = oracle::random_tensor<float>(rng, {4, 3, 3, 3});
    auto y1 = conv2d(x, w, Tensor(), 1, 1);
    auto y2 = conv2d(x, w, Tensor(), 1, 1);
    CHECK(oracle::bit_identical(y1, y2));
    CHECK(oracle::bit_identical(sigmoid(x), sigmoid(x)));
}

TEST_CASE("optimizer: sgd and adam update rules") {
    // sgd: p <- p - lr * g
    {
        ParameterT<float> p{"p", Tensor::from_data({1}, {1.f}, true)};
        backward(reduce_sum(mul_const(p.value, 1.f)));  // grad = 1
        Optimizer opt(OptKind::sgd, 0.1f, {&p});
        opt.step();
        CHECK(p.value.at(0) == doctest::Approx(0.9f));
    }
    // zero gradient leaves parameters alone (both kinds)
    for (auto kind : {OptKind::sgd, OptKind::adam}) {
        ParameterT<float> p{"p", Tensor::from_data({2}, {1.5f, -0.5f}, true)};
        auto zero = Tensor::zeros({2});
        backward(reduce_sum(mul(p.value, zero)));  // grad = 0
        OptimizerT<float> opt(kind, 0.1f, {&p});
        opt.step();
        CHECK(p.value.at(0) == 1.5f);
        CHECK(p.value.at(1) == -0.5f);
    }
    // adam first step from zeroed moments: p -= lr * g / (|g| + eps)
    {
        ParameterT<float> p{"p", Tensor::from_data({1}, {1.f}, true)};
        backward(reduce_sum(mul_const(p.value, 0.5f)));  // grad = 0.5
        Optimizer opt(OptKind::adam, 0.1f, {&p});
        opt.step();
        const double expect = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8));
        CHECK(p.value.at(0) == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("IDTN: round trip preserves shape and bits") {
    Rng rng(81);
    auto t = oracle::random_tensor<float>(rng, {2, 3, 4, 5});
    std::ostringstream out(std::ios::binary);
    write_idtn(out, t);
    std::istringstream in(out.str(), std::ios::binary);
    auto back = read_idtn(in);
    CHECK(oracle::bit_identical(t, back));
}

TEST_CASE("IDTN: corrupt streams fail with a byte offset") {
    auto t = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    std::ostringstream out(std::ios::binary);
    write_idtn(out, t);
    const std::string good = out.str();

    {
        std::string bad = good;
        bad[0] = 'X';
        std::istringstream in(bad, std::ios::binary);
        CHECK_THROWS_WITH_AS(read_idtn(in), doctest::Contains("byte 0"), IoError);
    }
    {
        std::string bad = good;
        bad[4] = 9;  // version
        std::istringstream in(bad, std::ios::binary);
        CHECK_THROWS_WITH_AS(read_idtn(in), doctest::Contains("version"), IoError);
    }
    {
        std::string truncated = good.substr(0, good.size() - 3);
        std::istringstream in(truncated, std::ios::binary);
        CHECK_THROWS_WITH_AS(read_idtn(in), doctest::Contains("truncated"), IoError);
    }
}
