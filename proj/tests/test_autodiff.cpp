/*
 * Copyright 2026 The lipkernel authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <doctest.h>

#include "lipkernel/autodiff.hpp"
#include "lipkernel/errors.hpp"
#include "lipkernel/rng.hpp"

using namespace lipkernel;
using namespace lipkernel::ad;
using la::Mat;

namespace {

Mat randn(Rng &rng, int r, int c, double s = 1.0) {
    Mat m(r, c);
    for (size_t k = 0; k < m.size(); ++k)
        m.at(k) = s * rng.normal();
    return m;
}

Mat rand_spd(Rng &rng, int n) {
    Mat g = randn(rng, n, n);
    Mat a = la::matmul_tn(g, g);
    for (int i = 0; i < n; ++i)
        a(i, i) += 0.7;
    return a;
}

// moves entries away from zero so relu/abs stay kink-free under FD probing
Mat randn_offset(Rng &rng, int r, int c) {
    Mat m = randn(rng, r, c);
    for (size_t k = 0; k < m.size(); ++k) {
        if (std::fabs(m.at(k)) < 0.05)
            m.at(k) = m.at(k) >= 0 ? 0.05 : -0.05;
    }
    return m;
}

} // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("gradient of sum is all ones") {
    Tape t;
    Var x = t.input(Mat(3, 2, {1, 2, 3, 4, 5, 6}));
    t.backward(t.sum(x));
    const Mat &g = t.grad(x);
    for (size_t k = 0; k < g.size(); ++k)
        CHECK(g.at(k) == 1.0);
}

TEST_CASE("gradient of sum of squares is 2x") {
    Tape t;
    Mat xv(2, 2, {1, -2, 0.5, 3});
    Var x = t.input(xv);
    t.backward(t.sum_sq(x));
    CHECK(la::max_abs_diff(t.grad(x), la::scale(xv, 2.0)) == 0.0);
}

TEST_CASE("matmul adjoint matches the closed form") {
    Rng rng(3);
    Mat av = randn(rng, 3, 4), bv = randn(rng, 4, 2), cv = randn(rng, 3, 2);
    Tape t;
    Var a = t.input(av), b = t.input(bv), c = t.constant(cv);
    t.backward(t.sum(t.hadamard(t.matmul(a, b), c)));
    CHECK(la::max_abs_diff(t.grad(a), la::matmul_nt(cv, bv)) <= 1e-13);
    CHECK(la::max_abs_diff(t.grad(b), la::matmul_tn(av, cv)) <= 1e-13);
}

TEST_CASE("gradient of a detached leaf is zero") {
    Tape t;
    Var x = t.input(Mat(2, 2, {1, 2, 3, 4}));
    Var y = t.input(Mat(2, 2, {5, 6, 7, 8}));
    t.backward(t.sum(x));
    CHECK(la::max_abs(t.grad(y)) == 0.0);
}

TEST_CASE("backward requires a scalar") {
    Tape t;
    Var x = t.input(Mat(2, 2));
    CHECK_THROWS_AS(t.backward(x), NotScalarLoss);
}

TEST_CASE("backward runs only once per tape") {
    Tape t;
    Var x = t.input(Mat(1, 1, {2.0}));
    Var l = t.sum_sq(x);
    t.backward(l);
    CHECK_THROWS_AS(t.backward(l), InvalidParameter);
}

TEST_CASE("elementwise op adjoints agree with finite differences") {
    Rng rng(17);
    auto weighted = [](Tape &t, Var y, const Mat &w) { return t.sum(t.hadamard(y, t.constant(w))); };
    Mat w = randn(rng, 3, 3);

    auto run = [&](const char *name, const LossFn &f, const Mat &point) {
        auto res = grad_check(f, {point});
        INFO(name, " rel err ", res.max_rel_err);
        CHECK(res.pass);
    };

    run("exp", [&](Tape &t, const std::vector<Var> &v) { return weighted(t, t.exp(v[0]), w); },
        randn(rng, 3, 3, 0.5));
    run("log", [&](Tape &t, const std::vector<Var> &v) { return weighted(t, t.log(v[0]), w); },
        [&] {
            Mat m = randn(rng, 3, 3);
            for (size_t k = 0; k < m.size(); ++k)
                m.at(k) = 0.5 + std::fabs(m.at(k));
            return m;
        }());
    run("tanh", [&](Tape &t, const std::vector<Var> &v) { return weighted(t, t.tanh(v[0]), w); },
        randn(rng, 3, 3));
    run("relu", [&](Tape &t, const std::vector<Var> &v) { return weighted(t, t.relu(v[0]), w); },
        randn_offset(rng, 3, 3));
    run("abs", [&](Tape &t, const std::vector<Var> &v) { return weighted(t, t.abs(v[0]), w); },
        randn_offset(rng, 3, 3));
    run("sqrt", [&](Tape &t, const std::vector<Var> &v) { return weighted(t, t.sqrt(v[0]), w); },
        [&] {
            Mat m = randn(rng, 3, 3);
            for (size_t k = 0; k < m.size(); ++k)
                m.at(k) = 0.5 + std::fabs(m.at(k));
            return m;
        }());
    run("inv_elem",
        [&](Tape &t, const std::vector<Var> &v) { return weighted(t, t.inv_elem(v[0]), w); },
        [&] {
            Mat m = randn(rng, 3, 3);
            for (size_t k = 0; k < m.size(); ++k)
                m.at(k) = 1.0 + std::fabs(m.at(k));
            return m;
        }());
}

TEST_CASE("structural op adjoints agree with finite differences") {
    Rng rng(29);
    Mat w53 = randn(rng, 5, 3);

    auto res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) {
            Var stacked = t.concat_v({v[0], t.transpose(v[1])});
            Var sl = t.slice(stacked, 1, 0, 3, 3);
            Var wide = t.concat_h({sl, v[2]});
            return t.sum_sq(t.hadamard(wide, wide));
        },
        {randn(rng, 3, 3), randn(rng, 3, 2), randn(rng, 3, 1)});
    CHECK(res.pass);

    res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) {
            Var d = t.diag_embed(v[0]);
            return t.sum_sq(t.add(d, t.matmul(d, d)));
        },
        {randn(rng, 4, 1)});
    CHECK(res.pass);

    res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) {
            return t.sum_sq(t.diag_part(t.matmul(v[0], v[0])));
        },
        {randn(rng, 3, 3)});
    CHECK(res.pass);

    Mat w51 = randn(rng, 5, 1);
    res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) {
            Var y = t.add_row_broadcast(v[0], v[1]);
            return t.sum(t.hadamard(t.row_sum(y), t.constant(w51)));
        },
        {w53, randn(rng, 1, 3)});
    CHECK(res.pass);
}

TEST_CASE("gather adjoint agrees with finite differences") {
    Rng rng(31);
    // scatter with repeats, a structural zero, and a dropped input entry
    std::vector<long> idx = {0, 3, 3, -1, 5, 1, 2, 0};
    auto res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) {
            Var y = t.gather(v[0], idx, 2, 4);
            return t.sum_sq(y);
        },
        {randn(rng, 2, 4)});
    CHECK(res.pass);
}

TEST_CASE("pooling adjoints agree with finite differences") {
    Rng rng(37);
    PoolGeom g{1, 4, 4, 2, 2, 2, 2, 2};
    Mat img = randn_offset(rng, 16, 2); // distinct values keep argmax stable
    auto res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) { return t.sum_sq(t.pool_avg(v[0], g)); }, {img});
    CHECK(res.pass);
    res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) { return t.sum_sq(t.pool_max(v[0], g)); }, {img});
    CHECK(res.pass);
}

TEST_CASE("cholesky adjoint agrees with finite differences") {
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        int n = 2 + static_cast<int>(rng.uniform_int(4));
        Mat w = randn(rng, n, n);
        auto res = grad_check(
            [&](Tape &t, const std::vector<Var> &v) {
                return t.sum(t.hadamard(t.cholesky(v[0]), t.constant(w)));
            },
            {rand_spd(rng, n)});
        INFO("trial ", trial, " rel err ", res.max_rel_err);
        CHECK(res.pass);
    }
}

TEST_CASE("solve adjoints agree with finite differences") {
    Rng rng(43);
    int n = 4;
    Mat a = rand_spd(rng, n), b = randn(rng, n, 2);

    auto res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) { return t.sum_sq(t.solve_psd(v[0], v[1])); },
        {a, b});
    CHECK(res.pass);

    res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) { return t.sum_sq(t.inverse_psd(v[0])); }, {a});
    CHECK(res.pass);

    Mat gen = randn(rng, n, n);
    for (int i = 0; i < n; ++i)
        gen(i, i) += 4.0;
    res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) { return t.sum_sq(t.solve_lu(v[0], v[1])); },
        {gen, b});
    CHECK(res.pass);
}

TEST_CASE("deep composite gradient matches finite differences") {
    Rng rng(53);
    auto res = grad_check(
        [&](Tape &t, const std::vector<Var> &v) {
            Var spd = t.add(t.matmul(t.transpose(v[0]), v[0]),
                            t.constant(la::scale(Mat::identity(3), 0.8)));
            Var l = t.cholesky(spd);
            Var x = t.solve_psd(spd, v[1]);
            Var y = t.matmul(l, x);
            return t.add(t.sum_sq(y), t.sum(t.exp(t.scale(t.diag_part(l), 0.3))));
        },
        {randn(rng, 3, 3), randn(rng, 3, 2)});
    INFO("rel err ", res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("gradients are deterministic") {
    auto run = [] {
        Rng rng(61);
        Tape t;
        Var a = t.input(randn(rng, 4, 4));
        Var spd = t.add(t.matmul(t.transpose(a), a), t.constant(la::scale(Mat::identity(4), 0.5)));
        t.backward(t.sum_sq(t.cholesky(spd)));
        return t.grad(a);
    };
    Mat g1 = run(), g2 = run();
    for (size_t k = 0; k < g1.size(); ++k)
        CHECK(g1.at(k) == g2.at(k));
}

TEST_SUITE_END();
