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

#include "lipkernel/layers.hpp"

#include <cmath>

#include "lipkernel/errors.hpp"

namespace lipkernel::layers {

using namespace lipkernel::la;
using ss::Kernel1D;
using ss::Kernel2D;

namespace {
const double kSqrt2 = std::sqrt(2.0);
}

// ---- Cayley transforms --------------------------------------------------

std::pair<Mat, Mat> cayley(const Mat &y, const Mat &z) {
    if (y.rows() != y.cols())
        throw ShapeMismatch("cayley: Y must be square");
    if (z.rows() > 0 && z.cols() != y.cols())
        throw ShapeMismatch("cayley: Z column count must match Y");
    int c = y.rows();
    Mat m = sub(y, transpose(y));
    if (z.rows() > 0)
        m = add(m, matmul_tn(z, z));
    Mat ipm = add(Mat::identity(c), m);
    Mat u = solve_lu(ipm, sub(Mat::identity(c), m));
    Mat v(0, c);
    if (z.rows() > 0)
        v = transpose(solve_lu(transpose(ipm), transpose(scale(z, 2.0))));
    return {u, v};
}

std::pair<Var, Var> cayley(Tape &t, Var y, Var z) {
    int c = t.val(y).rows();
    Var m = t.sub(y, t.transpose(y));
    bool has_z = z.valid() && t.val(z).rows() > 0;
    if (has_z)
        m = t.add(m, t.matmul(t.transpose(z), z));
    Var eye = t.constant(Mat::identity(c));
    Var ipm = t.add(eye, m);
    Var u = t.solve_lu(ipm, t.sub(eye, m));
    Var v{};
    if (has_z)
        v = t.transpose(t.solve_lu(t.transpose(ipm), t.transpose(t.scale(z, 2.0))));
    return {u, v};
}

Mat cayley_tall(const Mat &g, int c) {
    if (g.rows() < c || g.cols() != c)
        throw ShapeMismatch("cayley_tall: need at least c rows and exactly c columns");
    auto [u, v] = cayley(block(g, 0, 0, c, c), block(g, c, 0, g.rows() - c, c));
    return v.rows() > 0 ? vcat({u, v}) : u;
}

Var cayley_tall(Tape &t, Var g, int c) {
    const Mat &gv = t.val(g);
    if (gv.rows() < c || gv.cols() != c)
        throw ShapeMismatch("cayley_tall: need at least c rows and exactly c columns");
    Var y = t.slice(g, 0, 0, c, c);
    if (gv.rows() == c)
        return cayley(t, y, Var{}).first;
    Var z = t.slice(g, c, 0, gv.rows() - c, c);
    auto [u, v] = cayley(t, y, z);
    return t.concat_v({u, v});
}

// ---- gain factors -------------------------------------------------------

Mat GainFactor::full() const { return expand == 1 ? L : kron_identity(expand, L); }

GainVar gain_constant(Tape &t, const GainFactor &g) {
    return GainVar{t.constant(g.L), g.diagonal, g.expand, g.L.cols()};
}

GainFactor gain_expand(const GainFactor &g, int m) {
    GainFactor out = g;
    out.expand *= m;
    return out;
}

Var kron_identity_var(Tape &t, Var l, int m) {
    const Mat &lv = t.val(l);
    int r = lv.rows(), c = lv.cols();
    std::vector<long> idx(static_cast<size_t>(m) * r * m * c, -1);
    for (int k = 0; k < m; ++k)
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < c; ++b)
                idx[(static_cast<size_t>(k) * r + a) * (m * c) + k * c + b] =
                    static_cast<long>(a) * c + b;
    return t.gather(l, std::move(idx), m * r, m * c);
}

namespace {

// full factor var: materializes the Kronecker expansion when needed
Var gain_full(Tape &t, const GainVar &g) {
    return g.expand == 1 ? g.L : kron_identity_var(t, g.L, g.expand);
}

Var metric_of(Tape &t, Var l_full) { return t.matmul(t.transpose(l_full), l_full); }

} // namespace

// ---- geometry -----------------------------------------------------------

int LayerGeom::n1() const { return kind == LayerKind::Conv2d ? c_out * r1 : c_in * r1; }
int LayerGeom::n2() const { return kind == LayerKind::Conv2d ? c_in * r2 : 0; }

std::vector<std::pair<std::string, std::pair<int, int>>> free_param_shapes(const LayerGeom &g) {
    using S = std::pair<int, int>;
    std::vector<std::pair<std::string, S>> out;
    int c = g.c_out, ci = g.c_in;
    switch (g.kind) {
    case LayerKind::Fc:
        out = {{"Y", {c, c}}, {"Z", {ci, c}}, {"g_log", {c, 1}}, {"b", {1, c}}};
        break;
    case LayerKind::LastFc:
        out = {{"Y", {c, c}}, {"Z", {ci, c}}, {"b", {1, c}}};
        break;
    case LayerKind::Conv1d: {
        int n = g.n1();
        if (g.maxpool)
            out = {{"Yt", {n + ci, c}},
                   {"H", {ci, n}},
                   {"g_t", {c, 1}},
                   {"l_log", {c, 1}},
                   {"b", {1, c}}};
        else
            out = {{"Y", {c, c}},
                   {"Z", {n + ci, c}},
                   {"H", {ci, n}},
                   {"g_log", {c, 1}},
                   {"b", {1, c}}};
        break;
    }
    case LayerKind::Conv2d: {
        int n1 = g.n1(), n2 = g.n2();
        out = {{"H1", {c, n1}}, {"H2", {ci, n2}}, {"A12", {n1, n2}}, {"B1", {n1, ci}}};
        if (g.maxpool) {
            out.emplace_back("Yt", S{n2 + ci, c});
            out.emplace_back("omega", S{c, 1});
        } else {
            out.emplace_back("Y", S{c, c});
            out.emplace_back("Z", S{n2 + ci, c});
        }
        out.emplace_back("delta", S{c, 1});
        out.emplace_back("q_log", S{c, 1});
        out.emplace_back("b", S{1, c});
        break;
    }
    }
    return out;
}

std::map<std::string, Mat> init_params(const LayerGeom &g, Rng &rng, double weight_std) {
    std::map<std::string, Mat> out;
    for (const auto &[name, shape] : free_param_shapes(g)) {
        Mat m(shape.first, shape.second);
        if (name == "Y" || name == "Z" || name == "Yt" || name == "H" || name == "H1" ||
            name == "H2" || name == "A12" || name == "B1") {
            for (size_t k = 0; k < m.size(); ++k)
                m.at(k) = weight_std * rng.normal();
        } else if (name == "delta" || name == "omega" || name == "g_t") {
            for (size_t k = 0; k < m.size(); ++k)
                m.at(k) = 1.0;
        }
        // g_log, l_log, q_log, b start at zero
        out.emplace(name, std::move(m));
    }
    return out;
}

namespace {

void check_phi(const LayerGeom &g, const std::map<std::string, Var> &phi, const Tape &t) {
    auto shapes = free_param_shapes(g);
    if (phi.size() != shapes.size())
        throw InvalidParameter("parameterize: expected " + std::to_string(shapes.size()) +
                               " free parameters, got " + std::to_string(phi.size()));
    for (const auto &[name, shape] : shapes) {
        auto it = phi.find(name);
        if (it == phi.end())
            throw InvalidParameter("parameterize: missing parameter " + name);
        const Mat &v = t.val(it->second);
        if (v.rows() != shape.first || v.cols() != shape.second)
            throw InvalidParameter("parameterize: parameter " + name + " has shape " +
                                   std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                                   ", expected " + std::to_string(shape.first) + "x" +
                                   std::to_string(shape.second));
    }
}

void check_chain(const LayerGeom &g, const GainVar &prev) {
    if (g.pre_expand != prev.expand || g.c_in != prev.dim())
        throw ChainMismatch("parameterize: layer expects input metric of dim " +
                            std::to_string(g.c_in) + " (expand " + std::to_string(g.pre_expand) +
                            "), incoming factor has dim " + std::to_string(prev.dim()) +
                            " (expand " + std::to_string(prev.expand) + ")");
}

} // namespace

// ---- Gramian construction -----------------------------------------------

Var gramian_1d(Tape &t, int c_in, int c_out, int r, Var h, Var x_prev, double eps) {
    ss::Roesser1D st = ss::realize_1d(Kernel1D::zeros(c_in, c_out, r));
    int n = st.n();
    Var bc = t.constant(st.B);
    Var xinv = t.inverse_psd(x_prev);
    Var inj = t.matmul(bc, t.matmul(xinv, t.transpose(bc)));
    inj = t.add(inj, t.matmul(t.transpose(h), h));
    inj = t.add(inj, t.constant(scale(Mat::identity(n), eps)));
    // A is nilpotent with index r, so the series stops after r terms
    Var total = inj;
    Mat ak = st.A;
    for (int k = 1; k < r; ++k) {
        Var akc = t.constant(ak);
        total = t.add(total, t.matmul(akc, t.matmul(inj, t.transpose(akc))));
        ak = matmul(ak, st.A);
    }
    return total;
}

Gramian2D gramian_2d(Tape &t, const LayerGeom &g, Var a12, Var b1, Var h1, Var h2, Var x_prev) {
    ss::Roesser2D st = ss::realize_2d(Kernel2D::zeros(g.c_in, g.c_out, g.r1, g.r2));
    int n1 = g.n1(), n2 = g.n2();
    Var xinv = t.inverse_psd(x_prev);
    Var b2c = t.constant(st.B2);
    Gramian2D out;
    Var x22, t2a22t; // pieces reused below
    if (g.r2 > 0) {
        x22 = t.matmul(b2c, t.matmul(xinv, t.transpose(b2c)));
        Var inj2 = t.add(x22, t.matmul(t.transpose(h2), h2));
        inj2 = t.add(inj2, t.constant(scale(Mat::identity(n2), g.eps)));
        Var total = inj2;
        Mat ak = st.A22;
        for (int k = 1; k < g.r2; ++k) {
            Var akc = t.constant(ak);
            total = t.add(total, t.matmul(akc, t.matmul(inj2, t.transpose(akc))));
            ak = matmul(ak, st.A22);
        }
        out.t2 = total;
    }
    if (g.r1 > 0) {
        Var x11 = t.matmul(b1, t.matmul(xinv, t.transpose(b1)));
        Var xhat11 = x11;
        if (g.r2 > 0) {
            Var a22c = t.constant(st.A22);
            Var x12 = t.matmul(b1, t.matmul(xinv, t.transpose(b2c)));
            Var w = t.add(x12, t.matmul(a12, t.matmul(out.t2, t.transpose(a22c))));
            Var pivot = t.sub(t.sub(out.t2, t.matmul(a22c, t.matmul(out.t2, t.transpose(a22c)))),
                              x22);
            Var corr = t.matmul(w, t.solve_psd(pivot, t.transpose(w)));
            xhat11 = t.add(t.add(t.matmul(a12, t.matmul(out.t2, t.transpose(a12))), x11), corr);
        }
        Var inj1 = t.add(xhat11, t.matmul(t.transpose(h1), h1));
        inj1 = t.add(inj1, t.constant(scale(Mat::identity(n1), g.eps)));
        Var total = inj1;
        Mat ak = st.A11;
        for (int k = 1; k < g.r1; ++k) {
            Var akc = t.constant(ak);
            total = t.add(total, t.matmul(akc, t.matmul(inj1, t.transpose(akc))));
            ak = matmul(ak, st.A11);
        }
        out.t1 = total;
    }
    return out;
}

Var build_f(Tape &t, Var p, Var a, Var b, Var x_prev) {
    int n = p.valid() ? t.val(p).rows() : 0;
    if (n == 0)
        return x_prev;
    Var pa = t.matmul(p, a);
    Var pb = t.matmul(p, b);
    Var tl = t.sub(p, t.matmul(t.transpose(a), pa));
    Var tr = t.neg(t.matmul(t.transpose(a), pb));
    Var br = t.sub(x_prev, t.matmul(t.transpose(b), pb));
    return t.concat_v({t.concat_h({tl, tr}), t.concat_h({t.transpose(tr), br})});
}

namespace {

Var dd_vec(Tape &t, Var s, Var delta, Var q, double eps, double weight) {
    int c = t.val(delta).rows();
    Mat eps_vec(c, 1);
    for (int i = 0; i < c; ++i)
        eps_vec(i, 0) = eps;
    Var u = t.matmul(t.abs(s), q);
    Var g = t.add(t.constant(eps_vec), t.hadamard(delta, delta));
    return t.add(g, t.scale(t.hadamard(u, t.inv_elem(q)), weight));
}

} // namespace

Var gamma_dd(Tape &t, Var s, Var delta, Var q, double eps) {
    return dd_vec(t, s, delta, q, eps, 0.5);
}

// ---- parameterizations --------------------------------------------------

namespace {

// W-style product against a Kronecker-expanded factor, block by block:
// rows of vt are sliced per expansion block and multiplied by the base factor.
Var blockwise_right_factor(Tape &t, Var vt, const GainVar &prev) {
    int c = t.val(vt).rows();
    int d = prev.base_dim;
    if (prev.expand == 1)
        return t.matmul(vt, prev.L);
    std::vector<Var> parts;
    parts.reserve(prev.expand);
    for (int k = 0; k < prev.expand; ++k)
        parts.push_back(t.matmul(t.slice(vt, 0, k * d, c, d), prev.L));
    return t.concat_h(parts);
}

LayerVars param_fc(Tape &t, const LayerGeom &g, const std::map<std::string, Var> &phi,
                   const GainVar &prev) {
    auto [u, v] = cayley(t, phi.at("Y"), phi.at("Z"));
    Var gamma = t.exp(phi.at("g_log"));
    Var w0 = blockwise_right_factor(t, t.transpose(v), prev);
    LayerVars lv;
    lv.geom = g;
    lv.W = t.scale(t.matmul(t.diag_embed(t.inv_elem(gamma)), w0), kSqrt2);
    lv.bias = phi.at("b");
    lv.lambda = t.exp(t.scale(phi.at("g_log"), 2.0));
    lv.out = GainVar{t.scale(t.matmul(u, t.diag_embed(gamma)), kSqrt2), false, 1, g.c_out};
    return lv;
}

LayerVars param_last_fc(Tape &t, const LayerGeom &g, const std::map<std::string, Var> &phi,
                        const GainVar &prev, const Mat *q_factor) {
    auto [u, v] = cayley(t, phi.at("Y"), phi.at("Z"));
    (void)u;
    Var w = blockwise_right_factor(t, t.transpose(v), prev);
    if (q_factor != nullptr) {
        Mat lq_inv = solve_upper(*q_factor, Mat::identity(q_factor->rows()));
        w = t.matmul(t.constant(lq_inv), w);
    }
    LayerVars lv;
    lv.geom = g;
    lv.W = w;
    lv.bias = phi.at("b");
    return lv;
}

LayerVars param_conv1d(Tape &t, const LayerGeom &g, const std::map<std::string, Var> &phi,
                       const GainVar &prev) {
    int n = g.n1(), ci = g.c_in, c = g.c_out;
    Var l_full = gain_full(t, prev);
    Var x_prev = metric_of(t, l_full);
    LayerVars lv;
    lv.geom = g;
    Var f;
    if (g.r1 > 0) {
        lv.T1 = gramian_1d(t, ci, c, g.r1, phi.at("H"), x_prev, g.eps);
        ss::Roesser1D st = ss::realize_1d(Kernel1D::zeros(ci, c, g.r1));
        f = build_f(t, t.inverse_psd(lv.T1), t.constant(st.A), t.constant(st.B), x_prev);
    } else {
        f = x_prev;
    }
    Var lf = t.cholesky(f);
    Var chat;
    if (g.maxpool) {
        if (n + ci < c)
            throw InvalidGeometry("conv1d max-pool variant needs (r+1)*c_in >= c_out");
        Var ut = cayley_tall(t, phi.at("Yt"), c);
        Var gt = phi.at("g_t");
        Var l = t.exp(phi.at("l_log"));
        double rp = g.pool.rho_p;
        lv.lambda = t.scale(t.add(t.hadamard(gt, gt), t.scale(t.hadamard(l, l), rp * rp)), 0.5);
        Var row_scale = t.diag_embed(t.hadamard(gt, t.inv_elem(lv.lambda)));
        chat = t.matmul(row_scale, t.matmul(t.transpose(ut), lf));
        lv.out = GainVar{t.diag_embed(l), true, 1, c};
    } else {
        auto [u, v] = cayley(t, phi.at("Y"), phi.at("Z"));
        Var gamma = t.exp(phi.at("g_log"));
        chat = t.scale(
            t.matmul(t.diag_embed(t.inv_elem(gamma)), t.matmul(t.transpose(v), lf)), kSqrt2);
        lv.lambda = t.exp(t.scale(phi.at("g_log"), 2.0));
        lv.out = GainVar{t.scale(t.matmul(u, t.diag_embed(gamma)), kSqrt2), false, 1, c};
    }
    lv.C1d = t.slice(chat, 0, 0, c, n);
    lv.D1d = t.slice(chat, 0, n, c, ci);
    lv.bias = phi.at("b");
    return lv;
}

LayerVars param_conv2d(Tape &t, const LayerGeom &g, const std::map<std::string, Var> &phi,
                       const GainVar &prev) {
    int n1 = g.n1(), n2 = g.n2(), ci = g.c_in, c = g.c_out;
    ss::Roesser2D st = ss::realize_2d(Kernel2D::zeros(ci, c, g.r1, g.r2));
    Var l_full = gain_full(t, prev);
    Var x_prev = metric_of(t, l_full);
    LayerVars lv;
    lv.geom = g;
    lv.A12 = phi.at("A12");
    lv.B1 = phi.at("B1");
    auto gram = gramian_2d(t, g, lv.A12, lv.B1, phi.at("H1"), phi.at("H2"), x_prev);
    lv.T1 = gram.t1;
    lv.T2 = gram.t2;

    Var f;
    if (n1 + n2 > 0) {
        std::vector<Var> pdiag;
        if (g.r1 > 0)
            pdiag.push_back(t.inverse_psd(lv.T1));
        if (g.r2 > 0)
            pdiag.push_back(t.inverse_psd(lv.T2));
        Var p;
        if (pdiag.size() == 2) {
            Var z12 = t.constant(Mat(n1, n2));
            p = t.concat_v({t.concat_h({pdiag[0], z12}),
                            t.concat_h({t.transpose(z12), pdiag[1]})});
        } else {
            p = pdiag[0];
        }
        Var a;
        {
            Var a11 = t.constant(st.A11);
            Var a22 = t.constant(st.A22);
            Var a21 = t.constant(Mat(n2, n1));
            Var top = n2 > 0 ? t.concat_h({a11, lv.A12}) : a11;
            Var bot = n1 > 0 ? t.concat_h({a21, a22}) : a22;
            a = (n1 > 0 && n2 > 0) ? t.concat_v({top, bot}) : (n1 > 0 ? top : bot);
        }
        Var b = n1 > 0 ? (n2 > 0 ? t.concat_v({lv.B1, t.constant(st.B2)}) : lv.B1)
                       : t.constant(st.B2);
        f = build_f(t, p, a, b, x_prev);
    } else {
        f = x_prev;
    }

    // Schur pieces of F with respect to the x1 block
    Var s, cg, f_schur;
    if (n1 > 0) {
        Var f1 = t.slice(f, 0, 0, n1, n1);
        Var f12 = t.slice(f, 0, n1, n1, n2 + ci);
        Var f1_inv = t.inverse_psd(f1);
        s = t.slice(f1_inv, n1 - c, n1 - c, c, c);
        Var gsol = t.matmul(f1_inv, f12);
        cg = t.slice(gsol, n1 - c, 0, c, n2 + ci);
        f_schur = t.sub(t.slice(f, n1, n1, n2 + ci, n2 + ci), t.matmul(t.transpose(f12), gsol));
    } else {
        s = t.constant(Mat(c, c));
        f_schur = f;
    }
    Var lf = t.cholesky(f_schur);

    Var q = t.exp(phi.at("q_log"));
    Var delta = phi.at("delta");
    Var chat2;
    double rp = g.pool.rho_p;
    if (g.maxpool) {
        if (n2 + ci < c)
            throw InvalidGeometry("conv2d max-pool variant needs (r2+1)*c_in >= c_out");
        for (size_t k = 0; k < t.val(phi.at("omega")).size(); ++k)
            if (std::fabs(t.val(phi.at("omega")).at(k)) < 1e-12)
                throw InvalidParameter("conv2d max-pool: omega entries must be nonzero");
        Var eta = dd_vec(t, s, delta, q, g.eps, 1.0);
        Var omega = phi.at("omega");
        Var gamma = t.add(t.scale(eta, 0.5), t.hadamard(omega, omega));
        Var l = t.hadamard(t.sqrt(t.sub(t.scale(gamma, 2.0), eta)),
                           t.inv_elem(t.scale(gamma, rp)));
        // 2*Gamma - rho^2*Gamma*X*Gamma - S with X = diag(l^2)
        Var dvec = t.sub(t.scale(gamma, 2.0),
                         t.scale(t.hadamard(t.hadamard(gamma, gamma), t.hadamard(l, l)), rp * rp));
        Var lg = t.cholesky(t.sub(t.diag_embed(dvec), s));
        Var ut = cayley_tall(t, phi.at("Yt"), c);
        Var corr = t.matmul(t.transpose(lg), t.matmul(t.transpose(ut), lf));
        chat2 = n1 > 0 ? t.sub(cg, corr) : t.neg(corr);
        lv.lambda = t.inv_elem(gamma);
        lv.out = GainVar{t.diag_embed(l), true, 1, c};
    } else {
        Var gamma = gamma_dd(t, s, delta, q, g.eps);
        Var lg = t.cholesky(t.sub(t.diag_embed(t.scale(gamma, 2.0)), s));
        auto [u, v] = cayley(t, phi.at("Y"), phi.at("Z"));
        Var corr = t.matmul(t.transpose(lg), t.matmul(t.transpose(v), lf));
        chat2 = n1 > 0 ? t.sub(cg, corr) : t.neg(corr);
        lv.lambda = t.inv_elem(gamma);
        Var l_out = t.matmul(u, t.matmul(lg, t.diag_embed(t.inv_elem(gamma))));
        if (g.pool.kind == PoolKind::Avg)
            l_out = t.scale(l_out, 1.0 / rp);
        lv.out = GainVar{l_out, false, 1, c};
    }
    lv.C2 = t.slice(chat2, 0, 0, c, n2);
    lv.D = t.slice(chat2, 0, n2, c, ci);
    lv.bias = phi.at("b");
    return lv;
}

} // namespace

LayerVars parameterize(Tape &t, const LayerGeom &g, const std::map<std::string, Var> &phi,
                       const GainVar &prev, const Mat *q_factor) {
    check_phi(g, phi, t);
    check_chain(g, prev);
    switch (g.kind) {
    case LayerKind::Fc:
        return param_fc(t, g, phi, prev);
    case LayerKind::LastFc:
        return param_last_fc(t, g, phi, prev, q_factor);
    case LayerKind::Conv1d:
        return param_conv1d(t, g, phi, prev);
    case LayerKind::Conv2d:
        return param_conv2d(t, g, phi, prev);
    }
    throw InvalidParameter("parameterize: unknown layer kind");
}

// ---- LMI assembly -------------------------------------------------------

Var assemble_lmi(Tape &t, const LayerVars &lv, const GainVar &prev, const Mat *q_factor) {
    const LayerGeom &g = lv.geom;
    Var x_prev = metric_of(t, gain_full(t, prev));
    double rp2 = g.pool.rho_p * g.pool.rho_p;
    if (g.kind == LayerKind::LastFc) {
        Var wq = q_factor != nullptr ? t.matmul(t.constant(*q_factor), lv.W) : lv.W;
        return t.sub(x_prev, t.matmul(t.transpose(wq), wq));
    }
    if (g.kind == LayerKind::Fc) {
        Var lam = t.diag_embed(lv.lambda);
        Var x = metric_of(t, lv.out.L);
        Var wl = t.matmul(lam, lv.W);
        Var br = t.sub(t.scale(lam, 2.0), x);
        return t.concat_v({t.concat_h({x_prev, t.neg(t.transpose(wl))}),
                           t.concat_h({t.neg(wl), br})});
    }
    // conv variants: [[F, -C^T Lam; * , 2 Lam - rho^2 X]] with F from build_f
    int c = g.c_out, ci = g.c_in;
    Var a, b, cd, p;
    if (g.kind == LayerKind::Conv1d) {
        ss::Roesser1D st = ss::realize_1d(Kernel1D::zeros(ci, c, g.r1));
        a = t.constant(st.A);
        b = t.constant(st.B);
        cd = t.concat_h({lv.C1d, lv.D1d});
        if (g.r1 > 0)
            p = t.inverse_psd(lv.T1);
    } else {
        ss::Roesser2D st = ss::realize_2d(Kernel2D::zeros(ci, c, g.r1, g.r2));
        int n1 = g.n1(), n2 = g.n2();
        Var a11 = t.constant(st.A11), a22 = t.constant(st.A22);
        Var top = n2 > 0 ? t.concat_h({a11, lv.A12}) : a11;
        Var bot = n1 > 0 ? t.concat_h({t.constant(Mat(n2, n1)), a22}) : a22;
        if (n1 > 0 && n2 > 0)
            a = t.concat_v({top, bot});
        else if (n1 > 0)
            a = top;
        else
            a = bot;
        b = n1 > 0 ? (n2 > 0 ? t.concat_v({lv.B1, t.constant(st.B2)}) : lv.B1)
                   : t.constant(st.B2);
        Var cfull = n2 > 0 ? t.concat_h({t.constant(st.C1), lv.C2}) : t.constant(st.C1);
        cd = t.concat_h({cfull, lv.D});
        std::vector<Var> pdiag;
        if (g.r1 > 0)
            pdiag.push_back(t.inverse_psd(lv.T1));
        if (g.r2 > 0)
            pdiag.push_back(t.inverse_psd(lv.T2));
        if (pdiag.size() == 2) {
            Var z12 = t.constant(Mat(n1, n2));
            p = t.concat_v({t.concat_h({pdiag[0], z12}), t.concat_h({t.transpose(z12), pdiag[1]})});
        } else if (pdiag.size() == 1) {
            p = pdiag[0];
        }
    }
    Var f = build_f(t, p, a, b, x_prev);
    Var lam = t.diag_embed(lv.lambda);
    Var lcd = t.matmul(lam, cd);
    Var x = metric_of(t, lv.out.L);
    Var br = t.sub(t.scale(lam, 2.0), t.scale(x, rp2));
    return t.concat_v({t.concat_h({f, t.neg(t.transpose(lcd))}), t.concat_h({t.neg(lcd), br})});
}

// ---- extraction ---------------------------------------------------------

MaterializedLayer extract(const Tape &t, const LayerVars &lv) {
    MaterializedLayer m;
    m.geom = lv.geom;
    const LayerGeom &g = lv.geom;
    m.bias = t.val(lv.bias);
    if (lv.lambda.valid())
        for (int i = 0; i < t.val(lv.lambda).rows(); ++i)
            m.lambda.push_back(t.val(lv.lambda)(i, 0));
    if (g.kind == LayerKind::Fc || g.kind == LayerKind::LastFc) {
        m.W = t.val(lv.W);
    } else if (g.kind == LayerKind::Conv1d) {
        ss::Roesser1D st = ss::realize_1d(Kernel1D::zeros(g.c_in, g.c_out, g.r1));
        st.C = t.val(lv.C1d);
        st.D = t.val(lv.D1d);
        m.k1 = ss::kernel_from_realization_1d(st);
        if (g.r1 > 0)
            m.P1 = inverse_psd(sym(t.val(lv.T1)));
    } else {
        ss::Roesser2D st = ss::realize_2d(Kernel2D::zeros(g.c_in, g.c_out, g.r1, g.r2));
        st.A12 = t.val(lv.A12);
        st.B1 = t.val(lv.B1);
        st.C2 = t.val(lv.C2);
        st.D = t.val(lv.D);
        m.k2 = ss::kernel_from_realization_2d(st);
        if (g.r1 > 0)
            m.P1 = inverse_psd(sym(t.val(lv.T1)));
        if (g.r2 > 0)
            m.P2 = inverse_psd(sym(t.val(lv.T2)));
    }
    if (lv.out.L.valid())
        m.out = GainFactor{t.val(lv.out.L), lv.out.diagonal, lv.out.expand};
    return m;
}

MaterializedLayer materialize(const LayerGeom &g, const std::map<std::string, Mat> &phi,
                              const GainFactor &prev, const Mat *q_factor) {
    Tape t;
    std::map<std::string, Var> vars;
    for (const auto &[name, value] : phi)
        vars.emplace(name, t.input(value));
    LayerVars lv = parameterize(t, g, vars, gain_constant(t, prev), q_factor);
    return extract(t, lv);
}

std::vector<Var> tap_vars(Tape &t, const LayerVars &lv) {
    const LayerGeom &g = lv.geom;
    if (g.kind != LayerKind::Conv2d)
        throw InvalidParameter("tap_vars: only conv2d layers have 2-D taps");
    int c = g.c_out, ci = g.c_in;
    std::vector<Var> taps;
    taps.reserve(static_cast<size_t>(g.r1 + 1) * (g.r2 + 1));
    for (int t1 = 0; t1 <= g.r1; ++t1)
        for (int t2 = 0; t2 <= g.r2; ++t2) {
            if (t1 == 0 && t2 == 0)
                taps.push_back(lv.D);
            else if (t1 == 0)
                taps.push_back(t.slice(lv.C2, 0, (g.r2 - t2) * ci, c, ci));
            else if (t2 == 0)
                taps.push_back(t.slice(lv.B1, (g.r1 - t1) * c, 0, c, ci));
            else
                taps.push_back(t.slice(lv.A12, (g.r1 - t1) * c, (g.r2 - t2) * ci, c, ci));
        }
    return taps;
}

} // namespace lipkernel::layers
