#include "doctest.h"

#include "ccaf/autodiff.hpp"
#include "ccaf/rng.hpp"
#include "helpers.hpp"

using namespace ccaf;
using ccaf::testing::check_gradients;

TEST_CASE("elementwise and matmul gradients match finite differences") {
    Rng rng(11);
    Var a = leaf(rng.normal_mat(4, 5));
    Var b = leaf(rng.normal_mat(4, 5));
    Var w = leaf(rng.normal_mat(5, 3));
    auto make = [&] {
        Var h = relu(add(mul(a, b), scale(sub(a, b), 0.5)));
        return mean_all(matmul(h, w));
    };
    auto r = check_gradients({a, b, w}, make);
    CHECK(r.ok);
}

TEST_CASE("row ops gradients: normalize, norm, log-softmax, transpose, subset") {
    Rng rng(12);
    Var a = leaf(rng.normal_mat(6, 4));
    auto make = [&] {
        Var n = row_normalize(a);
        Var ls = log_softmax_rows(transpose(n));
        Var sub = rows_subset(ls, {0, 2, 3});
        return add(mean_all(sub), mean_all(rowwise_norm(a)));
    };
    CHECK(check_gradients({a}, make).ok);
}

TEST_CASE("grouping ops gradients: group_row_mean, flatten_rows, rowwise_add") {
    Rng rng(13);
    Var a = leaf(rng.normal_mat(8, 3));
    Var bias = leaf(rng.normal_mat(1, 3));
    auto make = [&] {
        Var g = group_row_mean(rowwise_add(a, bias), 2);  // 4 x 3
        Var f = flatten_rows(g, 2);                       // 2 x 6
        return sum_all(mul(f, f));
    };
    CHECK(check_gradients({a, bias}, make).ok);
}

TEST_CASE("batch_norm training-mode gradients match finite differences") {
    Rng rng(14);
    Var x = leaf(rng.normal_mat(6, 3));
    Var gamma = leaf(Mat::Ones(1, 3) + 0.1 * rng.normal_mat(1, 3));
    Var beta = leaf(rng.normal_mat(1, 3));
    auto make = [&] {
        Mat rm = Mat::Zero(1, 3), rv = Mat::Ones(1, 3);
        return mean_all(relu(batch_norm(x, gamma, beta, rm, rv, true)));
    };
    CHECK(check_gradients({x, gamma, beta}, make).ok);
}

TEST_CASE("batch_norm eval mode uses running statistics, not the batch") {
    Rng rng(15);
    Var gamma = leaf(Mat::Ones(1, 2));
    Var beta = leaf(Mat::Zero(1, 2));
    Mat rm = Mat::Constant(1, 2, 3.0), rv = Mat::Constant(1, 2, 4.0);
    Var x1 = constant(rng.normal_mat(5, 2));
    Mat rm1 = rm, rv1 = rv;
    Mat y1 = batch_norm(x1, gamma, beta, rm1, rv1, false)->value;
    // expected: (x - rm) / sqrt(rv + eps)
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(y1(i, j) ==
                  doctest::Approx((x1->value(i, j) - 3.0) / std::sqrt(4.0 + 1e-5)));
    CHECK(rm1 == rm);  // eval mode leaves running stats alone
    CHECK(rv1 == rv);
}

TEST_CASE("detach blocks gradient flow") {
    Var a = leaf(Mat::Constant(2, 2, 1.5));
    Var loss = sum_all(mul(detach(a), a));
    backward(loss);
    CHECK(a->grad == Mat::Constant(2, 2, 1.5));  // only the live factor
}

TEST_CASE("backward accumulates; zero_grad resets") {
    Var a = leaf(Mat::Ones(2, 2));
    backward(sum_all(a));
    backward(sum_all(a));
    CHECK(a->grad == Mat::Constant(2, 2, 2.0));
    zero_grad({a});
    CHECK(a->grad == Mat::Zero(2, 2));
}

TEST_CASE("shared subexpression receives both contributions") {
    Var a = leaf(Mat::Constant(1, 1, 3.0));
    Var sq = mul(a, a);
    backward(add(sq, sq));
    // d(2a^2)/da = 4a = 12
    CHECK(a->grad(0, 0) == doctest::Approx(12.0));
}
