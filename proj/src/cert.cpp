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

#include "lipkernel/cert.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lipkernel/autodiff.hpp"
#include "lipkernel/errors.hpp"
#include "lipkernel/rng.hpp"

namespace lipkernel::cert {

using namespace lipkernel::la;
using ad::Tape;
using ad::Var;
using layers::GainFactor;
using layers::LayerKind;
using layers::MaterializedLayer;
using layers::PoolKind;

namespace {

Mat diag_from(const std::vector<double> &v) {
    Mat m(static_cast<int>(v.size()), static_cast<int>(v.size()));
    for (size_t i = 0; i < v.size(); ++i)
        m(static_cast<int>(i), static_cast<int>(i)) = v[i];
    return m;
}

Mat scale_rows(const std::vector<double> &d, const Mat &m) {
    if (static_cast<int>(d.size()) != m.rows())
        throw ShapeMismatch("multiplier length does not match the weight rows");
    Mat out = m;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            out(i, j) *= d[static_cast<size_t>(i)];
    return out;
}

Mat lmi_conv_impl(const Mat &a, const Mat &b, const Mat &cd, const Mat &p, const Mat &lam,
                  const Mat &x_prev, const Mat &x, double rho_p) {
    int n = a.rows();
    Mat f;
    if (n > 0) {
        Mat pa = matmul(p, a), pb = matmul(p, b);
        Mat tl = sub(p, matmul_tn(a, pa));
        Mat tr = scale(matmul_tn(a, pb), -1.0);
        Mat br = sub(x_prev, matmul_tn(b, pb));
        f = vcat({hcat({tl, tr}), hcat({transpose(tr), br})});
    } else {
        f = x_prev;
    }
    Mat lcd = matmul(lam, cd);
    Mat br2 = sub(scale(lam, 2.0), scale(x, rho_p * rho_p));
    return sym(vcat({hcat({f, scale(transpose(lcd), -1.0)}), hcat({scale(lcd, -1.0), br2})}));
}

} // namespace

Mat lmi_fc(const Mat &w, const std::vector<double> &lambda, const Mat &x_prev, const Mat &x,
           int expand) {
    if (w.cols() != x_prev.rows() * expand || w.rows() != x.rows())
        throw ShapeMismatch("lmi_fc: inconsistent shapes");
    Mat xt = expand == 1 ? x_prev : kron_identity(expand, x_prev);
    Mat lw = scale_rows(lambda, w);
    Mat br = sub(scale(diag_from(lambda), 2.0), x);
    return sym(vcat({hcat({xt, scale(transpose(lw), -1.0)}), hcat({scale(lw, -1.0), br})}));
}

Mat lmi_conv(const ss::Roesser1D &rz, const Mat &p, const std::vector<double> &lambda,
             const Mat &x_prev, const Mat &x, double rho_p) {
    Mat cd = hcat({rz.C, rz.D});
    return lmi_conv_impl(rz.A, rz.B, cd, p, diag_from(lambda), x_prev, x, rho_p);
}

Mat lmi_conv(const ss::Roesser2D &rz, const Mat &p, const std::vector<double> &lambda,
             const Mat &x_prev, const Mat &x, double rho_p) {
    int n1 = rz.n1(), n2 = rz.n2();
    Mat a, b, c;
    if (n1 > 0 && n2 > 0) {
        a = vcat({hcat({rz.A11, rz.A12}), hcat({rz.A21, rz.A22})});
        b = vcat({rz.B1, rz.B2});
        c = hcat({rz.C1, rz.C2});
    } else if (n1 > 0) {
        a = rz.A11;
        b = rz.B1;
        c = rz.C1;
    } else {
        a = rz.A22;
        b = rz.B2;
        c = rz.C2;
    }
    Mat cd = hcat({c, rz.D});
    return lmi_conv_impl(a, b, cd, p, diag_from(lambda), x_prev, x, rho_p);
}

Mat lmi_last(const Mat &w, const Mat &x_prev, const Mat &q) {
    if (w.cols() != x_prev.rows() || q.rows() != w.rows())
        throw ShapeMismatch("lmi_last: inconsistent shapes");
    return sym(sub(x_prev, matmul_tn(w, matmul(q, w))));
}

// ---- certification ------------------------------------------------------

namespace {

const int kSchurThreshold = 512; // direct eigensolve above this gets slow

std::string layer_name(const layers::LayerGeom &g) {
    std::ostringstream os;
    switch (g.kind) {
    case LayerKind::Fc:
        os << "fc " << g.c_in << "->" << g.c_out;
        break;
    case LayerKind::LastFc:
        os << "output " << g.c_in << "->" << g.c_out;
        break;
    case LayerKind::Conv1d:
        os << "conv1d " << g.c_in << "->" << g.c_out << " r" << g.r1;
        break;
    case LayerKind::Conv2d:
        os << "conv " << g.c_in << "->" << g.c_out << " " << (g.r1 + 1) << "x" << (g.r2 + 1);
        break;
    }
    if (g.pool.kind == PoolKind::Avg)
        os << " avgpool";
    else if (g.pool.kind == PoolKind::Max)
        os << " maxpool";
    return os.str();
}

struct Checked {
    int dim;
    double min_eig;
    double scale; // tolerance reference, max(1, norm of the checked matrix)
};

Checked check_matrix(const Mat &m) {
    Mat s = sym(m);
    return {m.rows(), min_eig_sym(s), std::max(1.0, frob(s))};
}

// block form of the dense LMI is sign-equivalent to its Schur complement
// against the (known PD) input block; used when the full matrix is large
Mat gram_against_inverse(const Mat &w, const Mat &x_base, int expand) {
    int d = x_base.rows();
    int c = w.rows();
    Mat xinv = inverse_psd(x_base);
    Mat s(c, c);
    for (int k = 0; k < expand; ++k) {
        Mat wk = block(w, 0, k * d, c, d);
        s = add(s, matmul(wk, matmul(xinv, transpose(wk))));
    }
    return s;
}

Checked check_fc_schur(const Mat &w, const std::vector<double> &lambda, const Mat &x_base,
                       const Mat &x, int expand) {
    int d = x_base.rows();
    int c = w.rows();
    Mat s = gram_against_inverse(w, x_base, expand);
    Mat lam_s = scale_rows(lambda, transpose(scale_rows(lambda, transpose(s))));
    Mat reduced = sym(sub(sub(scale(diag_from(lambda), 2.0), x), lam_s));
    return {d * expand + c, min_eig_sym(reduced), std::max(1.0, frob(reduced))};
}

// X_prev - W^T Q W is sign-equivalent to I - Lq S Lq^T with S = W X_prev^-1 W^T
Checked check_last_schur(const Mat &w, const Mat &x_base, const Mat &lq, int expand) {
    int c = w.rows();
    Mat s = gram_against_inverse(w, x_base, expand);
    Mat q_side = lq.rows() > 0 ? matmul(lq, matmul_nt(s, lq)) : s;
    Mat reduced = sym(sub(Mat::identity(c), q_side));
    return {x_base.rows() * expand, min_eig_sym(reduced), std::max(1.0, frob(reduced))};
}

} // namespace

Certificate certify_network(const std::vector<MaterializedLayer> &layer_list, const Mat &l0,
                            const Mat &lq, double tol) {
    Certificate cert;
    cert.has_q = lq.rows() > 0;
    if (l0.rows() > 0 && l0.rows() == l0.cols()) {
        bool scalar = true;
        for (int i = 0; i < l0.rows() && scalar; ++i)
            for (int j = 0; j < l0.cols() && scalar; ++j)
                if (std::fabs(l0(i, j) - (i == j ? l0(0, 0) : 0.0)) > 0.0)
                    scalar = false;
        if (scalar)
            cert.rho = l0(0, 0);
    }
    GainFactor prev{l0, false, 1};
    bool all_ok = true;
    double worst = 1e300;
    for (const MaterializedLayer &m : layer_list) {
        const auto &g = m.geom;
        GainFactor fed = layers::gain_expand(prev, g.pre_expand);
        if (fed.dim() != g.c_in)
            throw ChainMismatch("certify: factor of dim " + std::to_string(fed.dim()) +
                                " feeds a layer expecting " + std::to_string(g.c_in));
        Mat x_base = matmul_tn(fed.L, fed.L);
        Checked res{};
        double rho_p = g.pool.rho_p;
        switch (g.kind) {
        case LayerKind::Fc: {
            Mat x = matmul_tn(m.out.full(), m.out.full());
            if (g.c_in + g.c_out > kSchurThreshold)
                res = check_fc_schur(m.W, m.lambda, x_base, x, fed.expand);
            else
                res = check_matrix(lmi_fc(m.W, m.lambda, x_base, x, fed.expand));
            break;
        }
        case LayerKind::LastFc: {
            if (g.c_in > kSchurThreshold) {
                res = check_last_schur(m.W, x_base, lq, fed.expand);
                break;
            }
            Mat q = lq.rows() > 0 ? matmul_tn(lq, lq) : Mat::identity(g.c_out);
            Mat x_full = fed.expand == 1 ? x_base : kron_identity(fed.expand, x_base);
            res = check_matrix(lmi_last(m.W, x_full, q));
            break;
        }
        case LayerKind::Conv1d: {
            ss::Roesser1D rz = ss::realize_1d(m.k1);
            Mat x_full = fed.expand == 1 ? x_base : kron_identity(fed.expand, x_base);
            Mat x = matmul_tn(m.out.full(), m.out.full());
            res = check_matrix(lmi_conv(rz, m.P1, m.lambda, x_full, x, rho_p));
            break;
        }
        case LayerKind::Conv2d: {
            ss::Roesser2D rz = ss::realize_2d(m.k2);
            int n1 = rz.n1(), n2 = rz.n2();
            Mat p(n1 + n2, n1 + n2);
            if (n1 > 0)
                set_block(p, 0, 0, m.P1);
            if (n2 > 0)
                set_block(p, n1, n1, m.P2);
            Mat x_full = fed.expand == 1 ? x_base : kron_identity(fed.expand, x_base);
            Mat x = matmul_tn(m.out.full(), m.out.full());
            res = check_matrix(lmi_conv(rz, p, m.lambda, x_full, x, rho_p));
            break;
        }
        }
        LayerReport rep;
        rep.name = layer_name(g);
        rep.dim = res.dim;
        rep.min_eig = res.min_eig;
        rep.ok = res.min_eig >= -tol * res.scale;
        cert.layers.push_back(rep);
        all_ok = all_ok && rep.ok;
        worst = std::min(worst, rep.min_eig);
        prev = m.out;
    }
    cert.valid = all_ok;
    cert.slack = layer_list.empty() ? 0.0 : worst;
    return cert;
}

Certificate certify(const nn::PlainNetwork &net, double tol) {
    Certificate cert = certify_network(net.layers, nn::input_factor(net.spec), net.spec.l_q, tol);
    if (net.spec.l_0.rows() == 0)
        cert.rho = net.spec.rho;
    return cert;
}

std::string Certificate::report() const {
    std::ostringstream os;
    os << "layer                          dim    min eig        status\n";
    for (const LayerReport &r : layers) {
        os << r.name;
        for (size_t k = r.name.size(); k < 31; ++k)
            os << ' ';
        std::ostringstream dim;
        dim << r.dim;
        os << dim.str();
        for (size_t k = dim.str().size(); k < 7; ++k)
            os << ' ';
        std::ostringstream ev;
        ev.setf(std::ios::scientific);
        ev.precision(3);
        ev << r.min_eig;
        os << ev.str();
        for (size_t k = ev.str().size(); k < 15; ++k)
            os << ' ';
        os << (r.ok ? "ok" : "VIOLATED") << "\n";
    }
    os << "verdict: " << (valid ? "CERTIFIED" : "NOT CERTIFIED");
    if (rho > 0.0)
        os << " (gain bound " << rho << ")";
    os << "\n";
    return os.str();
}

std::string Certificate::kv_block() const {
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(17);
    os << "valid=" << (valid ? 1 : 0) << "\n";
    os << "rho=" << rho << "\n";
    os << "has_q=" << (has_q ? 1 : 0) << "\n";
    os << "slack=" << slack << "\n";
    os << "layers=" << layers.size() << "\n";
    for (size_t i = 0; i < layers.size(); ++i) {
        os << "layer" << i << ".name=" << layers[i].name << "\n";
        os << "layer" << i << ".dim=" << layers[i].dim << "\n";
        os << "layer" << i << ".min_eig=" << layers[i].min_eig << "\n";
        os << "layer" << i << ".ok=" << (layers[i].ok ? 1 : 0) << "\n";
    }
    return os.str();
}

// ---- empirical bounds ---------------------------------------------------

namespace {

double norm2(const Mat &m) {
    double acc = 0.0;
    for (size_t k = 0; k < m.size(); ++k)
        acc += m.at(k) * m.at(k);
    return std::sqrt(acc);
}

// v <- J^T u at the point x, via reverse mode with constant weights
Mat vjp_at(const nn::PlainNetwork &net, const Mat &x, const Mat &u) {
    Tape t;
    Var xv = t.input(x);
    Var yv = nn::plain_forward_tape(t, net, xv, x.rows());
    t.backward(t.sum(t.hadamard(yv, t.constant(u))));
    return t.grad(xv);
}

} // namespace

double empirical_lipschitz(const nn::PlainNetwork &net, int trials, int iters,
                           std::uint64_t seed) {
    Rng rng(seed);
    int d = net.spec.in_dim();
    double best = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        Mat x(1, d);
        for (int j = 0; j < d; ++j)
            x(0, j) = rng.uniform();
        Mat v(1, d);
        for (int j = 0; j < d; ++j)
            v(0, j) = rng.normal();
        double nv = norm2(v);
        for (int j = 0; j < d; ++j)
            v(0, j) /= nv;
        double sigma = 0.0;
        for (int it = 0; it < iters; ++it) {
            auto [y, jv] = nn::forward_jvp(net, x, v);
            (void)y;
            sigma = norm2(jv);
            Mat w = vjp_at(net, x, jv);
            double nw = norm2(w);
            if (nw < 1e-14)
                break;
            for (int j = 0; j < d; ++j)
                v(0, j) = w(0, j) / nw;
        }
        best = std::max(best, sigma);

        // finite-ratio refinement around the found direction
        Mat y0 = nn::forward(net, x);
        Mat delta = scale(v, 1e-3);
        for (int step = 0; step < 15; ++step) {
            Tape t;
            Var dv = t.input(delta);
            Var xp = t.add(t.constant(x), dv);
            Var y1 = nn::plain_forward_tape(t, net, xp, 1);
            Var num = t.sum_sq(t.sub(y1, t.constant(y0)));
            Var den = t.sum_sq(dv);
            Var obj = t.hadamard(num, t.inv_elem(den));
            double ratio = std::sqrt(std::max(0.0, t.scalar(obj)));
            best = std::max(best, ratio);
            t.backward(obj);
            Mat gr = t.grad(dv);
            double ng = norm2(gr);
            if (ng < 1e-16)
                break;
            double step_len = 0.25 * norm2(delta) / ng;
            delta = add(delta, scale(gr, step_len));
        }
    }
    return best;
}

std::vector<double> margins(const Mat &logits, const std::vector<int> &labels) {
    if (logits.rows() != static_cast<int>(labels.size()))
        throw ShapeMismatch("margins: label count mismatch");
    std::vector<double> out(labels.size());
    for (int i = 0; i < logits.rows(); ++i) {
        int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= logits.cols())
            throw InvalidParameter("margins: label out of range");
        double top = -1e300;
        for (int j = 0; j < logits.cols(); ++j)
            if (j != y)
                top = std::max(top, logits(i, j));
        out[static_cast<size_t>(i)] = logits(i, y) - top;
    }
    return out;
}

double certified_accuracy(const std::vector<double> &margin_list, double rho, double eps) {
    if (rho <= 0.0 || eps < 0.0)
        throw InvalidParameter("certified_accuracy: need rho > 0 and eps >= 0");
    if (margin_list.empty())
        return 0.0;
    double threshold = std::sqrt(2.0) * rho * eps;
    int count = 0;
    for (double m : margin_list)
        if (m > threshold && m > 0.0)
            ++count;
    return static_cast<double>(count) / static_cast<double>(margin_list.size());
}

double pooling_gain(PoolKind kind, int k1, int k2, int s1, int s2, int in_h, int in_w) {
    if (kind == PoolKind::None)
        return 1.0;
    if (k1 < 1 || k2 < 1 || s1 < 1 || s2 < 1 || s1 > k1 || s2 > k2)
        throw InvalidGeometry("pooling: need 1 <= stride <= window");
    if (in_h < k1 || in_w < k2)
        throw InvalidGeometry("pooling: window exceeds the input grid");
    int oh = (in_h - k1) / s1 + 1;
    int ow = (in_w - k2) / s2 + 1;
    if (kind == PoolKind::Max) {
        if (s1 >= k1 && s2 >= k2)
            return 1.0;
        auto max_membership = [](int k, int s, int out, int in) {
            int best = 0;
            for (int i = 0; i < in; ++i) {
                int count = 0;
                for (int j = 0; j < out; ++j)
                    if (j * s <= i && i < j * s + k)
                        ++count;
                best = std::max(best, count);
            }
            return best;
        };
        double m = static_cast<double>(max_membership(k1, s1, oh, in_h)) *
                   max_membership(k2, s2, ow, in_w);
        return std::sqrt(m);
    }
    // average pooling: exact for disjoint windows, operator norm otherwise
    if (s1 >= k1 && s2 >= k2)
        return 1.0 / std::sqrt(static_cast<double>(k1) * k2);
    Mat op(oh * ow, in_h * in_w);
    double inv = 1.0 / (static_cast<double>(k1) * k2);
    for (int oi = 0; oi < oh; ++oi)
        for (int oj = 0; oj < ow; ++oj)
            for (int di = 0; di < k1; ++di)
                for (int dj = 0; dj < k2; ++dj)
                    op(oi * ow + oj, (oi * s1 + di) * in_w + oj * s2 + dj) += inv;
    return spectral_norm(op);
}

} // namespace lipkernel::cert
