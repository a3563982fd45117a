#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "gradcheck.hpp"
#include "tinyvlm/serialize.hpp"
#include "tinyvlm/tensor.hpp"

using namespace tinyvlm;
using tinyvlm::testing::gradcheck;
using tinyvlm::testing::random_tensor;

TEST_CASE("matmul identity and small product") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
    Tensor c = matmul(eye, b);
    CHECK(c.data() == b.data());

    Tensor r = matmul(Tensor::from_data({1, 2}, {1, 2}), Tensor::from_data({2, 1}, {3, 4}));
    CHECK(r.item() == doctest::Approx(11.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({5, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[3 x 4]"), std::invalid_argument);
}

TEST_CASE("matmul gradient: sum(C) wrt A equals ones*B^T and finite differences") {
    Tensor a = random_tensor({3, 4}, 1);
    Tensor b = random_tensor({4, 2}, 2);

    a.set_requires_grad(true);
    {
        Tape tape;
        Tensor loss = sum(matmul(a, b));
        tape.backward(loss);
    }
    // dA = ones(3,2) * B^T
    for (int i = 0; i < 3; ++i)
        for (int p = 0; p < 4; ++p) {
            double expect = b.at(p, 0) + b.at(p, 1);
            CHECK(a.grad()[static_cast<std::size_t>(i * 4 + p)] == doctest::Approx(expect).epsilon(1e-10));
        }
    a.set_requires_grad(false);

    auto rep = gradcheck([&]() { return matmul(a, b); }, {a, b});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
}

TEST_CASE("softmax uniform, stability, and distribution property") {
    Tensor x = Tensor::zeros({4});
    Tensor s = softmax(x, 0);
    for (double v : s.data()) CHECK(v == doctest::Approx(0.25));

    Tensor big = Tensor::from_data({2}, {1000.0, 0.0});
    Tensor sb = softmax(big, 0);
    CHECK(sb.at(0) == doctest::Approx(1.0));
    CHECK(sb.at(1) == doctest::Approx(0.0));
    CHECK(std::isfinite(sb.at(0)));

    Tensor r = random_tensor({5, 7}, 3, 10.0);
    Tensor sr = softmax(r, 1);
    for (int i = 0; i < 5; ++i) {
        double row = 0.0;
        for (int j = 0; j < 7; ++j) row += sr.at(i, j);
        CHECK(std::abs(row - 1.0) < 1e-9);
    }
}

TEST_CASE("softmax jacobian matches finite differences") {
    Tensor x = random_tensor({8}, 4);
    auto rep = gradcheck([&]() { return softmax(x, 0); }, {x});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);

    Tensor m = random_tensor({3, 5}, 5);
    auto rep2 = gradcheck([&]() { return softmax(m, 0); }, {m});
    CHECK_MESSAGE(rep2.max_rel_err < 1e-4, rep2.worst_location);

    // middle axis of a rank-3 tensor
    Tensor cube = random_tensor({2, 4, 3}, 33);
    Tensor sc = softmax(cube, 1);
    for (int o = 0; o < 2; ++o)
        for (int in = 0; in < 3; ++in) {
            double s = 0.0;
            for (int i = 0; i < 4; ++i) s += sc.at(o, i, in);
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    auto rep3 = gradcheck([&]() { return softmax(cube, 1); }, {cube});
    CHECK_MESSAGE(rep3.max_rel_err < 1e-4, rep3.worst_location);
}

TEST_CASE("mish values and asymptotes") {
    Tensor x = Tensor::from_data({4}, {0.0, 1.0, 50.0, -50.0});
    Tensor y = mish(x);
    CHECK(y.at(0) == 0.0);
    CHECK(y.at(1) == doctest::Approx(0.8650983882673103).epsilon(1e-12));
    CHECK(y.at(2) == doctest::Approx(50.0).epsilon(1e-12));       // saturation, no overflow
    CHECK(std::abs(y.at(2) - 50.0) < 1e-9);                        // mish(x) - x -> 0
    CHECK(std::abs(y.at(3)) < 1e-12);                              // mish(x) -> 0 for x -> -inf
    CHECK(std::isfinite(y.at(2)));

    Tensor r = random_tensor({9}, 6);
    auto rep = gradcheck([&]() { return mish(r); }, {r});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
}

TEST_CASE("silu and gelu gradients") {
    Tensor r = random_tensor({11}, 7);
    auto rep = gradcheck([&]() { return silu(r); }, {r});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
    auto rep2 = gradcheck([&]() { return gelu(r); }, {r});
    CHECK_MESSAGE(rep2.max_rel_err < 1e-4, rep2.worst_location);
}

TEST_CASE("rms_norm identity cases and gradient") {
    Tensor ones4 = Tensor::ones({4});
    Tensor w = Tensor::ones({4});
    Tensor y = rms_norm(ones4, w, 0.0);
    for (double v : y.data()) CHECK(v == doctest::Approx(1.0));

    Tensor twos = Tensor::full({4}, 2.0);
    Tensor y2 = rms_norm(twos, w, 0.0);
    for (double v : y2.data()) CHECK(v == doctest::Approx(1.0));   // scale invariance

    Tensor x = random_tensor({3, 6}, 8);
    Tensor wr = random_tensor({6}, 9);
    auto rep = gradcheck([&]() { return rms_norm(x, wr, 1e-6); }, {x, wr});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);

    CHECK_THROWS_AS(rms_norm(x, Tensor::ones({5}), 1e-6), std::invalid_argument);
}

TEST_CASE("cross_entropy_masked values, mask contract, and brute-force check") {
    SUBCASE("uniform logits, one masked position") {
        Tensor logits = Tensor::zeros({3, 4});
        Tensor loss = cross_entropy_masked(logits, {1, 2, 3}, {false, true, false});
        CHECK(loss.item() == doctest::Approx(1.3862943611198906).epsilon(1e-12));  // ln 4
    }
    SUBCASE("peaked logits drive loss to zero") {
        Tensor logits = Tensor::zeros({2, 4});
        logits.set(0, 1, 100.0);
        logits.set(1, 3, 100.0);
        Tensor loss = cross_entropy_masked(logits, {1, 3}, {true, true});
        CHECK(loss.item() < 1e-9);
    }
    SUBCASE("2 of 5 masked equals hand-summed NLL / 2; unmasked rows get zero grad") {
        Tensor logits = random_tensor({5, 6}, 10);
        std::vector<std::int64_t> targets{0, 3, 5, 1, 2};
        std::vector<bool> mask{false, true, false, true, false};

        // independent route: per-position NLL via the softmax primitive
        double expected = 0.0;
        for (int i : {1, 3}) {
            Tensor row = slice(logits, 0, i, i + 1);
            Tensor p = softmax(row, 1);
            expected += -std::log(p.at(0, targets[static_cast<std::size_t>(i)]));
        }
        expected /= 2.0;

        logits.set_requires_grad(true);
        Tape tape;
        Tensor loss = cross_entropy_masked(logits, targets, mask);
        tape.backward(loss);
        CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-10));
        for (int i : {0, 2, 4})
            for (int j = 0; j < 6; ++j)
                CHECK(logits.grad()[static_cast<std::size_t>(i * 6 + j)] == 0.0);
    }
    SUBCASE("all-false mask raises the empty-mask error") {
        Tensor logits = Tensor::zeros({2, 4});
        CHECK_THROWS_WITH_AS(cross_entropy_masked(logits, {0, 1}, {false, false}), doctest::Contains("empty mask"),
                             std::invalid_argument);
    }
    SUBCASE("loss is invariant to logit content at unmasked rows") {
        Tensor logits = random_tensor({4, 5}, 11);
        std::vector<std::int64_t> targets{1, 2, 3, 4};
        std::vector<bool> mask{true, false, true, false};
        double before = cross_entropy_masked(logits, targets, mask).item();
        for (int j = 0; j < 5; ++j) {
            logits.set(1, j, 1e6 * (j + 1));
            logits.set(3, j, -17.0 * j);
        }
        double after = cross_entropy_masked(logits, targets, mask).item();
        CHECK(before == after);  // exact floating-point identity
    }
    SUBCASE("gradient matches finite differences") {
        Tensor logits = random_tensor({4, 5}, 12);
        std::vector<std::int64_t> targets{1, 2, 3, 4};
        std::vector<bool> mask{true, false, true, true};
        auto rep = gradcheck([&]() { return cross_entropy_masked(logits, targets, mask); }, {logits});
        CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
    }
}

TEST_CASE("backward basics: seed, accumulation, error on non-scalar") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    {
        Tape tape;
        Tensor loss = sum(x);
        tape.backward(loss);
        for (double g : x.grad()) CHECK(g == 1.0);
    }
    x.zero_grad();
    {
        Tape tape;
        Tensor loss = sum(add(x, x));
        tape.backward(loss);
        for (double g : x.grad()) CHECK(g == 2.0);
    }
    {
        Tape tape;
        Tensor y = add(x, x);
        CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
    }
    {
        Tape tape;
        Tensor detached = Tensor::scalar(1.0);
        CHECK_THROWS_AS(tape.backward(detached), std::invalid_argument);
    }
}

TEST_CASE("requires_grad=false tensors never accumulate gradient") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tensor frozen = Tensor::from_data({2}, {3, 4}, false);
    Tape tape;
    Tensor loss = sum(mul(x, frozen));
    tape.backward(loss);
    CHECK(x.has_grad());
    CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("reshape and transpose round-trips are bitwise exact") {
    Tensor x = random_tensor({3, 8}, 13);
    Tensor back = reshape(reshape(x, {4, 6}), {3, 8});
    CHECK(back.data() == x.data());
    Tensor tt = transpose(transpose(x));
    CHECK(tt.data() == x.data());

    auto rep = gradcheck([&]() { return transpose(x); }, {x});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
    auto rep2 = gradcheck([&]() { return reshape(x, {24}); }, {x});
    CHECK_MESSAGE(rep2.max_rel_err < 1e-4, rep2.worst_location);
}

TEST_CASE("add, add_bias, mul, scale, mean gradients") {
    Tensor a = random_tensor({4, 3}, 14);
    Tensor b = random_tensor({4, 3}, 15);
    Tensor bias = random_tensor({3}, 16);
    auto r1 = gradcheck([&]() { return add(a, b); }, {a, b});
    CHECK_MESSAGE(r1.max_rel_err < 1e-4, r1.worst_location);
    auto r2 = gradcheck([&]() { return mul(a, b); }, {a, b});
    CHECK_MESSAGE(r2.max_rel_err < 1e-4, r2.worst_location);
    auto r3 = gradcheck([&]() { return scale(a, -2.5); }, {a});
    CHECK_MESSAGE(r3.max_rel_err < 1e-4, r3.worst_location);
    auto r4 = gradcheck([&]() { return add_bias(a, bias); }, {a, bias});
    CHECK_MESSAGE(r4.max_rel_err < 1e-4, r4.worst_location);
    auto r5 = gradcheck([&]() { return mean(a); }, {a});
    CHECK_MESSAGE(r5.max_rel_err < 1e-4, r5.worst_location);
    CHECK_THROWS_AS(add(a, Tensor::zeros({3, 4})), std::invalid_argument);
}

TEST_CASE("concat and slice") {
    Tensor a = random_tensor({2, 3}, 17);
    Tensor b = random_tensor({4, 3}, 18);
    Tensor cat = concat({a, b}, 0);
    CHECK(cat.shape() == Shape{6, 3});
    CHECK(slice(cat, 0, 0, 2).data() == a.data());
    CHECK(slice(cat, 0, 2, 6).data() == b.data());

    Tensor c = random_tensor({2, 5}, 19);
    Tensor cat1 = concat({a, reshape(c, {2, 5})}, 1);
    CHECK(cat1.shape() == Shape{2, 8});

    auto rep = gradcheck([&]() { return concat({a, b}, 0); }, {a, b});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
    auto rep2 = gradcheck([&]() { return slice(b, 0, 1, 3); }, {b});
    CHECK_MESSAGE(rep2.max_rel_err < 1e-4, rep2.worst_location);
    auto rep3 = gradcheck([&]() { return slice(b, 1, 0, 2); }, {b});
    CHECK_MESSAGE(rep3.max_rel_err < 1e-4, rep3.worst_location);

    // middle-axis concat on rank-3 tensors
    Tensor u = random_tensor({2, 2, 3}, 34);
    Tensor w = random_tensor({2, 5, 3}, 35);
    Tensor cat3 = concat({u, w}, 1);
    CHECK(cat3.shape() == Shape{2, 7, 3});
    CHECK(slice(cat3, 1, 0, 2).data() == u.data());
    CHECK(slice(cat3, 1, 2, 7).data() == w.data());
    auto rep4 = gradcheck([&]() { return concat({u, w}, 1); }, {u, w});
    CHECK_MESSAGE(rep4.max_rel_err < 1e-4, rep4.worst_location);

    CHECK_THROWS_AS(concat({a, Tensor::zeros({2, 4})}, 0), std::invalid_argument);
    CHECK_THROWS_AS(slice(a, 0, 1, 5), std::invalid_argument);
}

TEST_CASE("causal_mask_fill zeroes the strict upper triangle") {
    Tensor s = random_tensor({4, 4}, 20);
    Tensor masked = causal_mask_fill(s);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (j > i)
                CHECK(masked.at(i, j) == -std::numeric_limits<double>::infinity());
            else
                CHECK(masked.at(i, j) == s.at(i, j));
        }
    // softmax over a masked row is still a distribution
    Tensor p = softmax(masked, 1);
    for (int i = 0; i < 4; ++i) {
        double row = 0.0;
        for (int j = 0; j < 4; ++j) row += p.at(i, j);
        CHECK(std::abs(row - 1.0) < 1e-9);
        for (int j = i + 1; j < 4; ++j) CHECK(p.at(i, j) == 0.0);
    }
    auto rep = gradcheck([&]() { return softmax(causal_mask_fill(s), 1); }, {s});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
}

TEST_CASE("embedding_lookup rows and one-hot gradient") {
    Tensor table = random_tensor({5, 3}, 21);
    Tensor out = embedding_lookup(table, {2, 2, 4});
    CHECK(out.shape() == Shape{3, 3});
    for (int c = 0; c < 3; ++c) {
        CHECK(out.at(0, c) == out.at(1, c));
        CHECK(out.at(0, c) == table.at(2, c));
    }

    table.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(embedding_lookup(table, {1, 3}));
    tape.backward(loss);
    for (int v = 0; v < 5; ++v)
        for (int c = 0; c < 3; ++c) {
            const double g = table.grad()[static_cast<std::size_t>(v * 3 + c)];
            if (v == 1 || v == 3)
                CHECK(g == 1.0);
            else
                CHECK(g == 0.0);
        }
    table.set_requires_grad(false);
    CHECK_THROWS_AS(embedding_lookup(table, {5}), std::out_of_range);

    Tensor empty = embedding_lookup(table, {});
    CHECK(empty.shape() == Shape{0, 3});
}

TEST_CASE("rope rotates pairs and keeps norms; gradient checks") {
    Tensor x = random_tensor({5, 8}, 22);
    Tensor y = rope(x, 2, 10000.0);
    CHECK(y.shape() == x.shape());
    // position 0 gets angle 0 for every frequency
    for (int c = 0; c < 8; ++c) CHECK(y.at(0, c) == doctest::Approx(x.at(0, c)).epsilon(1e-12));
    // rotations preserve the per-pair norm
    for (int p = 0; p < 5; ++p)
        for (int h = 0; h < 2; ++h)
            for (int i = 0; i < 2; ++i) {
                const double a0 = x.at(p, h * 4 + i), b0 = x.at(p, h * 4 + i + 2);
                const double a1 = y.at(p, h * 4 + i), b1 = y.at(p, h * 4 + i + 2);
                CHECK(a0 * a0 + b0 * b0 == doctest::Approx(a1 * a1 + b1 * b1).epsilon(1e-10));
            }
    auto rep = gradcheck([&]() { return rope(x, 2, 10000.0); }, {x});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
    CHECK_THROWS_AS(rope(x, 3, 10000.0), std::invalid_argument);
}

TEST_CASE("conv and pooling primitives match finite differences") {
    Tensor x = random_tensor({2, 4, 4}, 23);
    Tensor dw = random_tensor({2, 3, 3}, 24);
    Tensor db = random_tensor({2}, 25);
    auto r1 = gradcheck([&]() { return depthwise_conv2d(x, dw, db, 1, 1); }, {x, dw, db});
    CHECK_MESSAGE(r1.max_rel_err < 1e-4, r1.worst_location);
    auto r2 = gradcheck([&]() { return depthwise_conv2d(x, dw, db, 2, 1); }, {x, dw, db});
    CHECK_MESSAGE(r2.max_rel_err < 1e-4, r2.worst_location);

    CHECK(depthwise_conv2d(x, dw, db, 1, 1).shape() == Shape{2, 4, 4});
    CHECK(depthwise_conv2d(x, dw, db, 2, 1).shape() == Shape{2, 2, 2});

    Tensor pw = random_tensor({3, 2}, 26);
    Tensor pb = random_tensor({3}, 27);
    auto r3 = gradcheck([&]() { return pointwise_conv2d(x, pw, pb); }, {x, pw, pb});
    CHECK_MESSAGE(r3.max_rel_err < 1e-4, r3.worst_location);
    CHECK(pointwise_conv2d(x, pw, pb).shape() == Shape{3, 4, 4});

    auto r4 = gradcheck([&]() { return average_pool2d(x, 2, 2); }, {x});
    CHECK_MESSAGE(r4.max_rel_err < 1e-4, r4.worst_location);
    CHECK(average_pool2d(x, 2, 2).shape() == Shape{2, 2, 2});
    CHECK_THROWS_AS(average_pool2d(x, 3, 2), std::invalid_argument);
}

TEST_CASE("window_merge layout and gradient") {
    // 4x4 grid, 1 channel, tokens numbered 0..15 row-major
    std::vector<double> vals(16);
    for (int i = 0; i < 16; ++i) vals[static_cast<std::size_t>(i)] = i;
    Tensor tokens = Tensor::from_data({16, 1}, vals);
    Tensor merged = window_merge(tokens, 4, 2, 2);
    CHECK(merged.shape() == Shape{4, 4});
    // first window reads grid cells (0,0),(0,1),(1,0),(1,1) = tokens 0,1,4,5
    CHECK(merged.at(0, 0) == 0.0);
    CHECK(merged.at(0, 1) == 1.0);
    CHECK(merged.at(0, 2) == 4.0);
    CHECK(merged.at(0, 3) == 5.0);
    // last window reads tokens 10,11,14,15
    CHECK(merged.at(3, 0) == 10.0);
    CHECK(merged.at(3, 3) == 15.0);

    Tensor r = random_tensor({36, 3}, 28);
    auto rep = gradcheck([&]() { return window_merge(r, 6, 3, 2); }, {r});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
    CHECK_THROWS_AS(window_merge(r, 6, 4, 2), std::invalid_argument);
}

TEST_CASE("multihead_attention rows are distributions and gradients flow") {
    Tensor q = random_tensor({5, 8}, 29);
    Tensor k = random_tensor({5, 8}, 30);
    Tensor v = random_tensor({5, 8}, 31);
    Tensor out = multihead_attention(q, k, v, 2, true);
    CHECK(out.shape() == Shape{5, 8});
    auto rep = gradcheck([&]() { return multihead_attention(q, k, v, 2, true); }, {q, k, v});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst_location);
    auto rep2 = gradcheck([&]() { return multihead_attention(q, k, v, 2, false); }, {q, k, v});
    CHECK_MESSAGE(rep2.max_rel_err < 1e-4, rep2.worst_location);

    // with v = ones each output element is the row sum of attention
    // probabilities, so every entry must be 1
    Tensor ones_v = Tensor::ones({5, 8});
    for (bool causal : {true, false}) {
        Tensor sums = multihead_attention(q, k, ones_v, 2, causal);
        for (double s : sums.data()) CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("tensor container round-trips through both dtypes") {
    Tensor t = random_tensor({2, 3, 4}, 32);
    std::stringstream ss;
    write_tensor(ss, t, DType::f64);
    Tensor back = read_tensor(ss);
    CHECK(back.shape() == t.shape());
    CHECK(back.data() == t.data());   // f64 is exact

    std::stringstream ss32;
    write_tensor(ss32, t, DType::f32);
    Tensor back32 = read_tensor(ss32);
    CHECK(back32.shape() == t.shape());
    for (std::size_t i = 0; i < t.data().size(); ++i)
        CHECK(back32.data()[i] == doctest::Approx(t.data()[i]).epsilon(1e-6));
}

TEST_CASE("no tape means no recording and no grad buffers") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tensor y = add(x, x);  // outside any tape
    CHECK_FALSE(y.requires_grad());
    CHECK_FALSE(x.has_grad());
}
