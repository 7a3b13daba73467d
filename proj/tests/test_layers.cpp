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
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "lipkernel/autodiff.hpp"
#include "lipkernel/errors.hpp"
#include "lipkernel/layers.hpp"
#include "lipkernel/linalg.hpp"
#include "lipkernel/rng.hpp"
#include "lipkernel/statespace.hpp"

using namespace lipkernel;
using namespace lipkernel::la;
using namespace lipkernel::layers;
using ad::Tape;
using ad::Var;

TEST_SUITE_BEGIN("layers");

namespace {

Mat randn(Rng &rng, int r, int c, double std = 1.0) {
    Mat m(r, c);
    for (size_t k = 0; k < m.size(); ++k)
        m.at(k) = std * rng.normal();
    return m;
}

// well-conditioned square factor so the input metric stays invertible
Mat rand_factor(Rng &rng, int d) {
    Mat m = randn(rng, d, d, 0.3);
    for (int i = 0; i < d; ++i)
        m(i, i) += 1.5;
    return m;
}

double lmi_floor(const Mat &m) { return -1e-8 * std::max(1.0, frob(m)); }

std::map<std::string, Var> lift(Tape &t, const std::map<std::string, Mat> &phi) {
    std::map<std::string, Var> out;
    for (const auto &[name, value] : phi)
        out.emplace(name, t.input(value));
    return out;
}

std::map<std::string, Mat> random_phi(const LayerGeom &g, Rng &rng, double std) {
    std::map<std::string, Mat> phi = init_params(g, rng, std);
    for (auto &[name, m] : phi) {
        if (name == "g_log" || name == "l_log" || name == "q_log" || name == "b")
            m = randn(rng, m.rows(), m.cols(), 0.3);
        else if (name == "delta")
            m = randn(rng, m.rows(), m.cols(), 0.5);
        else if (name == "omega" || name == "g_t")
            for (size_t k = 0; k < m.size(); ++k)
                m.at(k) = rng.uniform(0.5, 1.5);
    }
    return phi;
}

// run one parameterize + assemble_lmi round on a fresh tape
Mat lmi_of(const LayerGeom &g, const std::map<std::string, Mat> &phi, const GainFactor &prev,
           const Mat *q_factor = nullptr) {
    Tape t;
    auto vars = lift(t, phi);
    GainVar pv = gain_constant(t, prev);
    LayerVars lv = parameterize(t, g, vars, pv, q_factor);
    return t.val(assemble_lmi(t, lv, pv, q_factor));
}

} // namespace

TEST_CASE("cayley of a skew seed gives the expected rotation") {
    Mat y(2, 2, {0.0, 1.0, -1.0, 0.0});
    auto [u, v] = cayley(y, Mat(0, 2));
    CHECK(v.rows() == 0);
    CHECK(u(0, 0) == doctest::Approx(-0.6).epsilon(1e-12));
    CHECK(u(0, 1) == doctest::Approx(-0.8).epsilon(1e-12));
    CHECK(u(1, 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(u(1, 1) == doctest::Approx(-0.6).epsilon(1e-12));
    Mat gram = matmul_tn(u, u);
    CHECK(max_abs_diff(gram, Mat::identity(2)) < 1e-12);
}

TEST_CASE("cayley satisfies U^T U + V^T V = I for rectangular Z") {
    Rng rng(11);
    for (auto [c, m] : {std::pair{3, 0}, std::pair{3, 2}, std::pair{2, 5}}) {
        Mat y = randn(rng, c, c);
        Mat z = randn(rng, m, c);
        auto [u, v] = cayley(y, z);
        Mat gram = matmul_tn(u, u);
        if (m > 0)
            gram = add(gram, matmul_tn(v, v));
        CHECK(max_abs_diff(gram, Mat::identity(c)) < 1e-10);

        Tape t;
        auto [ut, vt] = cayley(t, t.input(y), t.input(z));
        CHECK(max_abs_diff(t.val(ut), u) < 1e-12);
        if (m > 0)
            CHECK(max_abs_diff(t.val(vt), v) < 1e-12);
    }
}

TEST_CASE("cayley_tall produces orthonormal columns and matches the stacked pair") {
    Rng rng(12);
    Mat g = randn(rng, 7, 3);
    Mat tall = cayley_tall(g, 3);
    CHECK(tall.rows() == 7);
    CHECK(max_abs_diff(matmul_tn(tall, tall), Mat::identity(3)) < 1e-10);
    auto [u, v] = cayley(block(g, 0, 0, 3, 3), block(g, 3, 0, 4, 3));
    CHECK(max_abs_diff(tall, vcat({u, v})) < 1e-12);

    Tape t;
    CHECK(max_abs_diff(t.val(cayley_tall(t, t.input(g), 3)), tall) < 1e-12);
    CHECK_THROWS_AS(cayley_tall(randn(rng, 2, 3), 3), ShapeMismatch);
}

TEST_CASE("gain factor expansion matches the explicit Kronecker product") {
    Rng rng(13);
    GainFactor g{randn(rng, 3, 3), false, 1};
    GainFactor e = gain_expand(g, 4);
    CHECK(e.dim() == 12);
    CHECK(max_abs_diff(e.full(), kron_identity(4, g.L)) < 1e-15);

    Tape t;
    Var l = t.input(g.L);
    Var k = kron_identity_var(t, l, 4);
    CHECK(max_abs_diff(t.val(k), e.full()) < 1e-15);
    t.backward(t.sum(t.hadamard(k, k)));
    Mat expect = scale(g.L, 2.0 * 4);
    CHECK(max_abs_diff(t.grad(l), expect) < 1e-12);
}

TEST_CASE("free parameter tables and default initialization") {
    Rng rng(14);
    LayerGeom g;
    g.kind = LayerKind::Conv2d;
    g.c_in = 2;
    g.c_out = 3;
    g.r1 = 2;
    g.r2 = 1;
    auto shapes = free_param_shapes(g);
    std::map<std::string, std::pair<int, int>> tab(shapes.begin(), shapes.end());
    CHECK(tab.at("H1") == std::pair{3, 6});
    CHECK(tab.at("H2") == std::pair{2, 2});
    CHECK(tab.at("A12") == std::pair{6, 2});
    CHECK(tab.at("B1") == std::pair{6, 2});
    CHECK(tab.at("Z") == std::pair{4, 3});
    CHECK(tab.at("delta") == std::pair{3, 1});

    auto phi = init_params(g, rng);
    CHECK(phi.size() == shapes.size());
    CHECK(phi.at("delta")(0, 0) == 1.0);
    CHECK(phi.at("q_log")(1, 0) == 0.0);
    CHECK(phi.at("b")(0, 2) == 0.0);
    CHECK(std::fabs(phi.at("Y")(0, 0)) < 0.2);
    CHECK(phi.at("Y")(0, 0) != 0.0);

    g.maxpool = true;
    auto mp = free_param_shapes(g);
    std::map<std::string, std::pair<int, int>> mt(mp.begin(), mp.end());
    CHECK(mt.at("Yt") == std::pair{4, 3});
    CHECK(mt.at("omega") == std::pair{3, 1});
    CHECK(mt.count("Y") == 0);
    auto phim = init_params(g, rng);
    CHECK(phim.at("omega")(0, 0) == 1.0);
}

TEST_CASE("one dimensional Gramian hand values and exact Stein identity") {
    Tape t;
    Var h = t.input(Mat(1, 2));
    Var x = t.input(Mat(1, 1, {1.0}));
    Var tv = gramian_1d(t, 1, 1, 2, h, x, 0.01);
    Mat tm = t.val(tv);
    CHECK(tm(0, 0) == doctest::Approx(1.02).epsilon(1e-14));
    CHECK(tm(1, 1) == doctest::Approx(1.01).epsilon(1e-14));
    CHECK(std::fabs(tm(0, 1)) < 1e-15);

    ss::Roesser1D st = ss::realize_1d(ss::Kernel1D::zeros(1, 1, 2));
    Mat inj(2, 2, {0.01, 0.0, 0.0, 1.01});
    Mat resid = sub(sub(tm, matmul(matmul(st.A, tm), transpose(st.A))), inj);
    CHECK(max_abs(resid) < 1e-14);
}

TEST_CASE("one dimensional Gramian satisfies the Stein identity for random data") {
    Rng rng(15);
    int ci = 2, co = 3, r = 3;
    Mat lp = rand_factor(rng, ci);
    Mat xp = matmul_tn(lp, lp);
    Mat hm = randn(rng, ci, r * ci, 0.4);
    Tape t;
    Var tv = gramian_1d(t, ci, co, r, t.input(hm), t.input(xp), 1e-3);
    Mat tm = t.val(tv);
    ss::Roesser1D st = ss::realize_1d(ss::Kernel1D::zeros(ci, co, r));
    Mat inj = add(matmul(matmul(st.B, inverse_psd(xp)), transpose(st.B)), matmul_tn(hm, hm));
    inj = add(inj, scale(Mat::identity(r * ci), 1e-3));
    Mat resid = sub(sub(tm, matmul(matmul(st.A, tm), transpose(st.A))), inj);
    CHECK(max_abs(resid) < 1e-11);
    CHECK(min_eig_sym(sym(tm)) > 0.0);
}

TEST_CASE("two dimensional Gramian hand values and induced F") {
    LayerGeom g;
    g.kind = LayerKind::Conv2d;
    g.c_in = 1;
    g.c_out = 1;
    g.r1 = 1;
    g.r2 = 1;
    g.eps = 0.01;
    Tape t;
    Var a12 = t.input(Mat(1, 1, {1.0}));
    Var b1 = t.input(Mat(1, 1, {0.0}));
    Var h1 = t.input(Mat(1, 1));
    Var h2 = t.input(Mat(1, 1));
    Var xp = t.input(Mat(1, 1, {1.0}));
    Gramian2D gr = gramian_2d(t, g, a12, b1, h1, h2, xp);
    CHECK(t.val(gr.t2)(0, 0) == doctest::Approx(1.01).epsilon(1e-14));
    CHECK(t.val(gr.t1)(0, 0) == doctest::Approx(1.02).epsilon(1e-14));

    // assemble P, A, B and the dissipation block F
    Mat p = Mat::diag({1.0 / 1.02, 1.0 / 1.01});
    Mat a(2, 2, {0.0, 1.0, 0.0, 0.0});
    Mat b(2, 1, {0.0, 1.0});
    Var fv = build_f(t, t.input(p), t.input(a), t.input(b), xp);
    Mat f = t.val(fv);
    CHECK(f.rows() == 3);
    CHECK(f(0, 0) == doctest::Approx(1.0 / 1.02).epsilon(1e-14));
    CHECK(f(1, 1) == doctest::Approx(1.0 / 1.01 - 1.0 / 1.02).epsilon(1e-12));
    CHECK(f(2, 2) == doctest::Approx(1.0 - 1.0 / 1.01).epsilon(1e-12));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j)
                CHECK(std::fabs(f(i, j)) < 1e-14);
}

TEST_CASE("two dimensional Gramian Stein identities for random data") {
    Rng rng(16);
    LayerGeom g;
    g.kind = LayerKind::Conv2d;
    g.c_in = 2;
    g.c_out = 3;
    g.r1 = 2;
    g.r2 = 2;
    g.eps = 1e-3;
    int n1 = g.n1(), n2 = g.n2();
    Mat lp = rand_factor(rng, g.c_in);
    Mat xp = matmul_tn(lp, lp);
    Mat a12 = randn(rng, n1, n2, 0.4);
    Mat b1m = randn(rng, n1, g.c_in, 0.4);
    Mat h1m = randn(rng, g.c_out, n1, 0.4);
    Mat h2m = randn(rng, g.c_in, n2, 0.4);
    Tape t;
    Gramian2D gr = gramian_2d(t, g, t.input(a12), t.input(b1m), t.input(h1m), t.input(h2m),
                              t.input(xp));
    Mat t1 = t.val(gr.t1), t2 = t.val(gr.t2);
    ss::Roesser2D st = ss::realize_2d(ss::Kernel2D::zeros(g.c_in, g.c_out, g.r1, g.r2));
    Mat xinv = inverse_psd(xp);

    Mat inj2 = add(add(matmul(matmul(st.B2, xinv), transpose(st.B2)), matmul_tn(h2m, h2m)),
                   scale(Mat::identity(n2), g.eps));
    Mat r2 = sub(sub(t2, matmul(matmul(st.A22, t2), transpose(st.A22))), inj2);
    CHECK(max_abs(r2) < 1e-11);

    // recompute the cross-coupled injection for the first direction
    Mat x11 = matmul(matmul(b1m, xinv), transpose(b1m));
    Mat x12 = matmul(matmul(b1m, xinv), transpose(st.B2));
    Mat x22 = matmul(matmul(st.B2, xinv), transpose(st.B2));
    Mat w = add(x12, matmul(matmul(a12, t2), transpose(st.A22)));
    Mat pivot = sub(sub(t2, matmul(matmul(st.A22, t2), transpose(st.A22))), x22);
    Mat xhat = add(add(matmul(matmul(a12, t2), transpose(a12)), x11),
                   matmul(w, solve_psd(pivot, transpose(w))));
    Mat inj1 = add(add(xhat, matmul_tn(h1m, h1m)), scale(Mat::identity(n1), g.eps));
    Mat r1 = sub(sub(t1, matmul(matmul(st.A11, t1), transpose(st.A11))), inj1);
    CHECK(max_abs(r1) < 1e-10);
    CHECK(min_eig_sym(sym(t1)) > 0.0);
    CHECK(min_eig_sym(sym(t2)) > 0.0);
}

TEST_CASE("diagonally dominant scaling on the worked example") {
    Tape t;
    Var s = t.input(Mat(2, 2, {2.0, 1.0, 1.0, 2.0}));
    Var delta = t.input(Mat(2, 1));
    Var q = t.input(Mat(2, 1, {1.0, 1.0}));
    Var g = gamma_dd(t, s, delta, q, 0.01);
    CHECK(t.val(g)(0, 0) == doctest::Approx(1.51).epsilon(1e-14));
    CHECK(t.val(g)(1, 0) == doctest::Approx(1.51).epsilon(1e-14));
    Mat two_g_minus_s(2, 2, {2 * 1.51 - 2.0, -1.0, -1.0, 2 * 1.51 - 2.0});
    CHECK(min_eig_sym(two_g_minus_s) == doctest::Approx(0.02).epsilon(1e-10));
}

TEST_CASE("scalar dense layer reproduces hand computed weight and a tight certificate") {
    LayerGeom g;
    g.kind = LayerKind::Fc;
    g.c_in = 1;
    g.c_out = 1;
    std::map<std::string, Mat> phi{{"Y", Mat(1, 1, {0.0})},
                                   {"Z", Mat(1, 1, {0.5})},
                                   {"g_log", Mat(1, 1)},
                                   {"b", Mat(1, 1)}};
    GainFactor prev{Mat(1, 1, {1.0}), false, 1};
    Tape t;
    auto vars = lift(t, phi);
    GainVar pv = gain_constant(t, prev);
    LayerVars lv = parameterize(t, g, vars, pv);
    double w = t.val(lv.W)(0, 0);
    CHECK(w == doctest::Approx(std::sqrt(2.0) * 0.8).epsilon(1e-12));
    CHECK(t.val(lv.lambda)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(t.val(lv.out.L)(0, 0) == doctest::Approx(std::sqrt(2.0) * 0.6).epsilon(1e-12));
    Mat m = t.val(assemble_lmi(t, lv, pv));
    CHECK(m.rows() == 2);
    CHECK(m(0, 0) == doctest::Approx(1.0));
    CHECK(m(1, 1) == doctest::Approx(2.0 - 0.72).epsilon(1e-12));
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    CHECK(std::fabs(det) < 1e-12);
    CHECK(min_eig_sym(sym(m)) > lmi_floor(m));
}

TEST_CASE("dense layer with zero seeds is the identity point") {
    LayerGeom g;
    g.kind = LayerKind::Fc;
    g.c_in = 3;
    g.c_out = 3;
    std::map<std::string, Mat> phi{{"Y", Mat(3, 3)},
                                   {"Z", Mat(3, 3)},
                                   {"g_log", Mat(3, 1)},
                                   {"b", Mat(1, 3)}};
    GainFactor prev{Mat::identity(3), false, 1};
    Tape t;
    auto vars = lift(t, phi);
    GainVar pv = gain_constant(t, prev);
    LayerVars lv = parameterize(t, g, vars, pv);
    CHECK(max_abs(t.val(lv.W)) < 1e-15);
    CHECK(max_abs_diff(t.val(lv.out.L), scale(Mat::identity(3), std::sqrt(2.0))) < 1e-14);
    Mat m = t.val(assemble_lmi(t, lv, pv));
    Mat expect(6, 6);
    for (int i = 0; i < 3; ++i)
        expect(i, i) = 1.0;
    CHECK(max_abs_diff(m, expect) < 1e-13);
}

TEST_CASE("dense layer certificates hold for random parameters") {
    Rng rng(17);
    LayerGeom g;
    g.kind = LayerKind::Fc;
    g.c_in = 3;
    g.c_out = 4;
    for (int trial = 0; trial < 200; ++trial) {
        GainFactor prev{rand_factor(rng, 3), false, 1};
        Mat m = lmi_of(g, random_phi(g, rng, 0.5), prev);
        double lo = min_eig_sym(sym(m));
        CHECK(lo > lmi_floor(m));
        CHECK(lo < 1e-6 * std::max(1.0, frob(m)));
    }
}

TEST_CASE("dense layer on an expanded factor matches the materialized Kronecker form") {
    Rng rng(18);
    int d = 3, blocks = 4;
    LayerGeom g;
    g.kind = LayerKind::Fc;
    g.c_in = d * blocks;
    g.c_out = 5;
    g.pre_expand = blocks;
    auto phi = random_phi(g, rng, 0.4);
    Mat base = rand_factor(rng, d);
    GainFactor expanded{base, false, blocks};
    GainFactor flat{kron_identity(blocks, base), false, 1};

    Tape t1;
    auto v1 = lift(t1, phi);
    GainVar p1 = gain_constant(t1, expanded);
    LayerVars l1 = parameterize(t1, g, v1, p1);

    LayerGeom gf = g;
    gf.pre_expand = 1;
    Tape t2;
    auto v2 = lift(t2, phi);
    GainVar p2 = gain_constant(t2, flat);
    LayerVars l2 = parameterize(t2, gf, v2, p2);

    CHECK(max_abs_diff(t1.val(l1.W), t2.val(l2.W)) < 1e-12);
    Mat m1 = t1.val(assemble_lmi(t1, l1, p1));
    Mat m2 = t2.val(assemble_lmi(t2, l2, p2));
    CHECK(max_abs_diff(m1, m2) < 1e-12);
}

TEST_CASE("output layer certificates hold with and without a target metric") {
    Rng rng(19);
    LayerGeom g;
    g.kind = LayerKind::LastFc;
    g.c_in = 5;
    g.c_out = 3;
    Mat lq = scale(Mat::identity(3), 0.8); // Q = 0.64 I
    for (int trial = 0; trial < 100; ++trial) {
        GainFactor prev{rand_factor(rng, 5), false, 1};
        auto phi = random_phi(g, rng, 0.6);
        Mat m0 = lmi_of(g, phi, prev);
        CHECK(min_eig_sym(sym(m0)) > lmi_floor(m0));
        Mat mq = lmi_of(g, phi, prev, &lq);
        CHECK(min_eig_sym(sym(mq)) > lmi_floor(mq));
    }
}

TEST_CASE("one dimensional conv certificates hold and sit on the boundary") {
    Rng rng(20);
    LayerGeom g;
    g.kind = LayerKind::Conv1d;
    g.c_in = 2;
    g.c_out = 3;
    g.r1 = 2;
    for (int trial = 0; trial < 100; ++trial) {
        GainFactor prev{rand_factor(rng, 2), false, 1};
        Mat m = lmi_of(g, random_phi(g, rng, 0.5), prev);
        CHECK(m.rows() == g.n1() + g.c_in + g.c_out);
        double lo = min_eig_sym(sym(m));
        CHECK(lo > lmi_floor(m));
        CHECK(lo < 1e-6 * std::max(1.0, frob(m)));
    }
}

TEST_CASE("one dimensional conv with max pool certificates hold") {
    Rng rng(21);
    LayerGeom g;
    g.kind = LayerKind::Conv1d;
    g.c_in = 2;
    g.c_out = 3;
    g.r1 = 2;
    g.maxpool = true;
    g.pool.kind = PoolKind::Max;
    g.pool.rho_p = 1.0;
    for (int trial = 0; trial < 100; ++trial) {
        GainFactor prev{rand_factor(rng, 2), false, 1};
        Tape t;
        auto vars = lift(t, random_phi(g, rng, 0.5));
        GainVar pv = gain_constant(t, gain_expand(prev, 1));
        LayerVars lv = parameterize(t, g, vars, pv);
        CHECK(lv.out.diagonal);
        Mat m = t.val(assemble_lmi(t, lv, pv));
        double lo = min_eig_sym(sym(m));
        CHECK(lo > lmi_floor(m));
        CHECK(lo < 1e-6 * std::max(1.0, frob(m)));
    }
}

TEST_CASE("order zero conv collapses to the dense layer on a triangular factor") {
    Rng rng(22);
    int ci = 3, c = 4;
    std::map<std::string, Mat> shared{{"Y", randn(rng, c, c, 0.5)},
                                      {"Z", randn(rng, ci, c, 0.5)},
                                      {"g_log", randn(rng, c, 1, 0.3)},
                                      {"b", Mat(1, c)}};
    GainFactor prev{scale(Mat::identity(ci), 1.5), false, 1};

    LayerGeom gf;
    gf.kind = LayerKind::Fc;
    gf.c_in = ci;
    gf.c_out = c;
    Tape tf;
    auto vf = lift(tf, shared);
    GainVar pf = gain_constant(tf, prev);
    LayerVars lf = parameterize(tf, gf, vf, pf);

    LayerGeom gc;
    gc.kind = LayerKind::Conv1d;
    gc.c_in = ci;
    gc.c_out = c;
    gc.r1 = 0;
    auto conv_phi = shared;
    conv_phi.emplace("H", Mat(ci, 0));
    Tape tc;
    auto vc = lift(tc, conv_phi);
    GainVar pc = gain_constant(tc, prev);
    LayerVars lc = parameterize(tc, gc, vc, pc);

    CHECK(max_abs_diff(tf.val(lf.W), tc.val(lc.D1d)) < 1e-12);
    CHECK(max_abs_diff(tf.val(lf.out.L), tc.val(lc.out.L)) < 1e-12);
}

TEST_CASE("two dimensional conv certificates hold, plain and with average pooling") {
    Rng rng(23);
    LayerGeom g;
    g.kind = LayerKind::Conv2d;
    g.c_in = 2;
    g.c_out = 3;
    g.r1 = 2;
    g.r2 = 1;
    for (int trial = 0; trial < 60; ++trial) {
        GainFactor prev{rand_factor(rng, 2), false, 1};
        Mat m = lmi_of(g, random_phi(g, rng, 0.5), prev);
        CHECK(m.rows() == g.n1() + g.n2() + g.c_in + g.c_out);
        double lo = min_eig_sym(sym(m));
        CHECK(lo > lmi_floor(m));
        CHECK(lo < 1e-6 * std::max(1.0, frob(m)));
    }
    g.pool.kind = PoolKind::Avg;
    g.pool.k1 = g.pool.k2 = 2;
    g.pool.s1 = g.pool.s2 = 2;
    g.pool.rho_p = 0.5;
    for (int trial = 0; trial < 40; ++trial) {
        GainFactor prev{rand_factor(rng, 2), false, 1};
        Mat m = lmi_of(g, random_phi(g, rng, 0.5), prev);
        double lo = min_eig_sym(sym(m));
        CHECK(lo > lmi_floor(m));
        CHECK(lo < 1e-6 * std::max(1.0, frob(m)));
    }
}

TEST_CASE("two dimensional conv with max pool certificates hold") {
    Rng rng(24);
    LayerGeom g;
    g.kind = LayerKind::Conv2d;
    g.c_in = 2;
    g.c_out = 3;
    g.r1 = 1;
    g.r2 = 1;
    g.maxpool = true;
    g.pool.kind = PoolKind::Max;
    g.pool.k1 = g.pool.k2 = 2;
    g.pool.s1 = g.pool.s2 = 2;
    g.pool.rho_p = 1.0;
    for (int trial = 0; trial < 60; ++trial) {
        GainFactor prev{rand_factor(rng, 2), false, 1};
        Tape t;
        auto vars = lift(t, random_phi(g, rng, 0.5));
        GainVar pv = gain_constant(t, prev);
        LayerVars lv = parameterize(t, g, vars, pv);
        CHECK(lv.out.diagonal);
        Mat m = t.val(assemble_lmi(t, lv, pv));
        double lo = min_eig_sym(sym(m));
        CHECK(lo > lmi_floor(m));
        CHECK(lo < 1e-6 * std::max(1.0, frob(m)));
    }

    auto phi = random_phi(g, rng, 0.5);
    phi.at("omega")(1, 0) = 0.0;
    GainFactor prev{rand_factor(rng, 2), false, 1};
    CHECK_THROWS_AS(lmi_of(g, phi, prev), InvalidParameter);
}

TEST_CASE("extraction round trips kernels, taps and output factors") {
    Rng rng(25);
    LayerGeom g;
    g.kind = LayerKind::Conv2d;
    g.c_in = 2;
    g.c_out = 3;
    g.r1 = 2;
    g.r2 = 1;
    auto phi = random_phi(g, rng, 0.4);
    GainFactor prev{rand_factor(rng, 2), false, 1};

    Tape t;
    auto vars = lift(t, phi);
    GainVar pv = gain_constant(t, prev);
    LayerVars lv = parameterize(t, g, vars, pv);
    MaterializedLayer m = extract(t, lv);
    CHECK(m.k2.r1 == 2);
    CHECK(m.k2.r2 == 1);
    auto taps = tap_vars(t, lv);
    REQUIRE(taps.size() == static_cast<size_t>((g.r1 + 1) * (g.r2 + 1)));
    size_t idx = 0;
    for (int t1 = 0; t1 <= g.r1; ++t1)
        for (int t2 = 0; t2 <= g.r2; ++t2)
            CHECK(max_abs_diff(t.val(taps[idx++]), m.k2.tap(t1, t2)) < 1e-15);
    CHECK(max_abs_diff(m.out.L, t.val(lv.out.L)) < 1e-15);
    REQUIRE(m.lambda.size() == 3);
    CHECK(m.lambda[1] == t.val(lv.lambda)(1, 0));
    CHECK(m.P1.rows() == g.n1());
    CHECK(m.P2.rows() == g.n2());

    // materialize is deterministic and equals the tape extraction
    MaterializedLayer m2 = materialize(g, phi, prev);
    for (int t1 = 0; t1 <= g.r1; ++t1)
        for (int t2 = 0; t2 <= g.r2; ++t2)
            CHECK(max_abs_diff(m2.k2.tap(t1, t2), m.k2.tap(t1, t2)) == 0.0);
    CHECK(max_abs_diff(m2.out.L, m.out.L) == 0.0);

    // a one dimensional layer round trips through its realization
    LayerGeom g1;
    g1.kind = LayerKind::Conv1d;
    g1.c_in = 2;
    g1.c_out = 3;
    g1.r1 = 2;
    auto phi1 = random_phi(g1, rng, 0.4);
    MaterializedLayer mm = materialize(g1, phi1, prev);
    ss::Roesser1D st = ss::realize_1d(mm.k1);
    ss::Kernel1D back = ss::kernel_from_realization_1d(st);
    for (int k = 0; k <= g1.r1; ++k)
        CHECK(max_abs_diff(back.taps[k], mm.k1.taps[k]) == 0.0);
}

TEST_CASE("parameter validation rejects malformed inputs") {
    Rng rng(26);
    LayerGeom g;
    g.kind = LayerKind::Fc;
    g.c_in = 3;
    g.c_out = 4;
    auto phi = random_phi(g, rng, 0.3);
    GainFactor prev{rand_factor(rng, 3), false, 1};
    GainFactor wrong{rand_factor(rng, 2), false, 1};

    Tape t;
    GainVar pw = gain_constant(t, wrong);
    CHECK_THROWS_AS(parameterize(t, g, lift(t, phi), pw), ChainMismatch);

    auto missing = phi;
    missing.erase("Z");
    Tape t2;
    GainVar p2 = gain_constant(t2, prev);
    CHECK_THROWS_AS(parameterize(t2, g, lift(t2, missing), p2), InvalidParameter);

    auto bad = phi;
    bad.at("Z") = randn(rng, 2, 4);
    Tape t3;
    GainVar p3 = gain_constant(t3, prev);
    CHECK_THROWS_AS(parameterize(t3, g, lift(t3, bad), p3), InvalidParameter);
}

namespace {

// finite difference check of a full parameterize + certificate pipeline
void check_layer_gradients(const LayerGeom &g, const GainFactor &prev, Rng &rng, double std) {
    auto phi = random_phi(g, rng, std);
    auto shapes = free_param_shapes(g);
    std::vector<Mat> point;
    for (const auto &[name, shape] : shapes)
        point.push_back(phi.at(name));
    auto loss = [&](Tape &t, const std::vector<Var> &vars) {
        std::map<std::string, Var> named;
        for (size_t i = 0; i < shapes.size(); ++i)
            named.emplace(shapes[i].first, vars[i]);
        GainVar pv = gain_constant(t, prev);
        LayerVars lv = parameterize(t, g, named, pv);
        Var total = t.sum_sq(assemble_lmi(t, lv, pv));
        if (lv.W.valid())
            total = t.add(total, t.sum_sq(lv.W));
        if (lv.out.L.valid())
            total = t.add(total, t.sum_sq(lv.out.L));
        return total;
    };
    auto res = ad::grad_check(loss, point, 2e-4, 1e-6);
    CHECK(res.pass);
}

} // namespace

TEST_CASE("layer pipelines are differentiable end to end") {
    Rng rng(27);
    GainFactor prev1{rand_factor(rng, 1), false, 1};
    GainFactor prev2{rand_factor(rng, 2), false, 1};

    LayerGeom fc;
    fc.kind = LayerKind::Fc;
    fc.c_in = 2;
    fc.c_out = 2;
    check_layer_gradients(fc, prev2, rng, 0.4);

    LayerGeom c1;
    c1.kind = LayerKind::Conv1d;
    c1.c_in = 1;
    c1.c_out = 2;
    c1.r1 = 1;
    check_layer_gradients(c1, prev1, rng, 0.4);

    LayerGeom c1m = c1;
    c1m.c_out = 1;
    c1m.maxpool = true;
    c1m.pool.kind = PoolKind::Max;
    check_layer_gradients(c1m, prev1, rng, 0.4);

    LayerGeom c2;
    c2.kind = LayerKind::Conv2d;
    c2.c_in = 1;
    c2.c_out = 1;
    c2.r1 = 1;
    c2.r2 = 1;
    check_layer_gradients(c2, prev1, rng, 0.4);

    LayerGeom c2m = c2;
    c2m.maxpool = true;
    c2m.pool.kind = PoolKind::Max;
    c2m.pool.rho_p = 1.0;
    check_layer_gradients(c2m, prev1, rng, 0.4);

    LayerGeom last;
    last.kind = LayerKind::LastFc;
    last.c_in = 2;
    last.c_out = 2;
    check_layer_gradients(last, prev2, rng, 0.4);
}

TEST_SUITE_END();
