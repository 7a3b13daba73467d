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

#include "lipkernel/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "lipkernel/errors.hpp"

namespace lipkernel::ad {

using namespace lipkernel::la;

namespace {

// lower triangle kept, diagonal halved, upper zeroed
Mat phi_lower_half(const Mat &x) {
    Mat out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        for (int j = 0; j < i; ++j)
            out(i, j) = x(i, j);
        out(i, i) = 0.5 * x(i, i);
    }
    return out;
}

} // namespace

Var Tape::push(Mat val, std::function<void()> back) {
    nodes_.push_back(Node{std::move(val), Mat(), std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::acc(int id, const Mat &gr) {
    Mat &dst = nodes_[id].grad;
    if (dst.size() == 0)
        dst = Mat(nodes_[id].val.rows(), nodes_[id].val.cols());
    if (!dst.same_shape(gr))
        throw ShapeMismatch("gradient accumulation shape mismatch");
    for (size_t k = 0; k < dst.size(); ++k)
        dst.at(k) += gr.at(k);
}

const Mat &Tape::val(Var x) const { return nodes_[x.id].val; }

const Mat &Tape::grad(Var x) const {
    static const Mat empty;
    const Node &n = nodes_[x.id];
    if (n.grad.size() == 0 && n.val.size() != 0) {
        // untouched by backward: gradient is zero
        const_cast<Node &>(n).grad = Mat(n.val.rows(), n.val.cols());
    }
    return n.grad;
}

Var Tape::input(Mat v) { return push(std::move(v)); }
Var Tape::constant(Mat v) { return push(std::move(v)); }

Var Tape::add(Var a, Var b) {
    Mat out = la::add(v(a.id), v(b.id));
    return push(std::move(out), [this, a, b, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, g(id));
        acc(b.id, g(id));
    });
}

Var Tape::sub(Var a, Var b) {
    Mat out = la::sub(v(a.id), v(b.id));
    return push(std::move(out), [this, a, b, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, g(id));
        acc(b.id, la::scale(g(id), -1.0));
    });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double s) {
    Mat out = la::scale(v(a.id), s);
    return push(std::move(out), [this, a, s, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::scale(g(id), s));
    });
}

Var Tape::matmul(Var a, Var b) {
    Mat out = la::matmul(v(a.id), v(b.id));
    return push(std::move(out), [this, a, b, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::matmul_nt(g(id), v(b.id)));
        acc(b.id, la::matmul_tn(v(a.id), g(id)));
    });
}

Var Tape::transpose(Var a) {
    Mat out = la::transpose(v(a.id));
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::transpose(g(id)));
    });
}

Var Tape::hadamard(Var a, Var b) {
    Mat out = la::hadamard(v(a.id), v(b.id));
    return push(std::move(out), [this, a, b, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), v(b.id)));
        acc(b.id, la::hadamard(g(id), v(a.id)));
    });
}

Var Tape::slice(Var a, int i0, int j0, int rows, int cols) {
    Mat out = la::block(v(a.id), i0, j0, rows, cols);
    return push(std::move(out), [this, a, i0, j0, id = static_cast<int>(nodes_.size())]() {
        Mat full(v(a.id).rows(), v(a.id).cols());
        la::set_block(full, i0, j0, g(id));
        acc(a.id, full);
    });
}

Var Tape::concat_h(const std::vector<Var> &parts) {
    std::vector<Mat> vals;
    vals.reserve(parts.size());
    for (Var p : parts)
        vals.push_back(v(p.id));
    Mat out = la::hcat(vals);
    return push(std::move(out), [this, parts, id = static_cast<int>(nodes_.size())]() {
        int j0 = 0;
        for (Var p : parts) {
            const Mat &pv = v(p.id);
            acc(p.id, la::block(g(id), 0, j0, pv.rows(), pv.cols()));
            j0 += pv.cols();
        }
    });
}

Var Tape::concat_v(const std::vector<Var> &parts) {
    std::vector<Mat> vals;
    vals.reserve(parts.size());
    for (Var p : parts)
        vals.push_back(v(p.id));
    Mat out = la::vcat(vals);
    return push(std::move(out), [this, parts, id = static_cast<int>(nodes_.size())]() {
        int i0 = 0;
        for (Var p : parts) {
            const Mat &pv = v(p.id);
            acc(p.id, la::block(g(id), i0, 0, pv.rows(), pv.cols()));
            i0 += pv.rows();
        }
    });
}

Var Tape::diag_embed(Var x) {
    const Mat &xv = v(x.id);
    if (xv.cols() != 1)
        throw ShapeMismatch("diag_embed expects a column vector");
    Mat out(xv.rows(), xv.rows());
    for (int i = 0; i < xv.rows(); ++i)
        out(i, i) = xv(i, 0);
    return push(std::move(out), [this, x, id = static_cast<int>(nodes_.size())]() {
        const Mat &gr = g(id);
        Mat gx(v(x.id).rows(), 1);
        for (int i = 0; i < gx.rows(); ++i)
            gx(i, 0) = gr(i, i);
        acc(x.id, gx);
    });
}

Var Tape::diag_part(Var a) {
    const Mat &av = v(a.id);
    int n = std::min(av.rows(), av.cols());
    Mat out(n, 1);
    for (int i = 0; i < n; ++i)
        out(i, 0) = av(i, i);
    return push(std::move(out), [this, a, n, id = static_cast<int>(nodes_.size())]() {
        Mat ga(v(a.id).rows(), v(a.id).cols());
        for (int i = 0; i < n; ++i)
            ga(i, i) = g(id)(i, 0);
        acc(a.id, ga);
    });
}

Var Tape::sum(Var a) {
    double s = 0.0;
    const Mat &av = v(a.id);
    for (size_t k = 0; k < av.size(); ++k)
        s += av.at(k);
    Mat out(1, 1);
    out(0, 0) = s;
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        double gs = g(id)(0, 0);
        Mat ga(v(a.id).rows(), v(a.id).cols());
        for (size_t k = 0; k < ga.size(); ++k)
            ga.at(k) = gs;
        acc(a.id, ga);
    });
}

Var Tape::sum_sq(Var a) {
    double s = 0.0;
    const Mat &av = v(a.id);
    for (size_t k = 0; k < av.size(); ++k)
        s += av.at(k) * av.at(k);
    Mat out(1, 1);
    out(0, 0) = s;
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        double gs = g(id)(0, 0);
        acc(a.id, la::scale(v(a.id), 2.0 * gs));
    });
}

Var Tape::row_sum(Var a) {
    const Mat &av = v(a.id);
    Mat out(av.rows(), 1);
    for (int i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < av.cols(); ++j)
            s += av(i, j);
        out(i, 0) = s;
    }
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        const Mat &gr = g(id);
        Mat ga(v(a.id).rows(), v(a.id).cols());
        for (int i = 0; i < ga.rows(); ++i)
            for (int j = 0; j < ga.cols(); ++j)
                ga(i, j) = gr(i, 0);
        acc(a.id, ga);
    });
}

Var Tape::add_row_broadcast(Var a, Var row) {
    const Mat &av = v(a.id);
    const Mat &rv = v(row.id);
    if (rv.rows() != 1 || rv.cols() != av.cols())
        throw ShapeMismatch("add_row_broadcast: row must be 1 x cols(a)");
    Mat out = av;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j)
            out(i, j) += rv(0, j);
    return push(std::move(out), [this, a, row, id = static_cast<int>(nodes_.size())]() {
        const Mat &gr = g(id);
        acc(a.id, gr);
        Mat grow(1, gr.cols());
        for (int i = 0; i < gr.rows(); ++i)
            for (int j = 0; j < gr.cols(); ++j)
                grow(0, j) += gr(i, j);
        acc(row.id, grow);
    });
}

namespace {
template <typename F> Mat map_mat(const Mat &a, F f) {
    Mat out(a.rows(), a.cols());
    for (size_t k = 0; k < a.size(); ++k)
        out.at(k) = f(a.at(k));
    return out;
}
} // namespace

Var Tape::exp(Var a) {
    Mat out = map_mat(v(a.id), [](double x) { return std::exp(x); });
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), v(id)));
    });
}

Var Tape::log(Var a) {
    Mat out = map_mat(v(a.id), [](double x) { return std::log(x); });
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), map_mat(v(a.id), [](double x) { return 1.0 / x; })));
    });
}

Var Tape::tanh(Var a) {
    Mat out = map_mat(v(a.id), [](double x) { return std::tanh(x); });
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), map_mat(v(id), [](double y) { return 1.0 - y * y; })));
    });
}

Var Tape::relu(Var a) {
    Mat out = map_mat(v(a.id), [](double x) { return x > 0.0 ? x : 0.0; });
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), map_mat(v(a.id), [](double x) { return x > 0.0 ? 1.0 : 0.0; })));
    });
}

Var Tape::abs(Var a) {
    Mat out = map_mat(v(a.id), [](double x) { return std::fabs(x); });
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), map_mat(v(a.id), [](double x) {
                                   return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                               })));
    });
}

Var Tape::sqrt(Var a) {
    Mat out = map_mat(v(a.id), [](double x) { return std::sqrt(x); });
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), map_mat(v(id), [](double y) { return 0.5 / y; })));
    });
}

Var Tape::inv_elem(Var a) {
    Mat out = map_mat(v(a.id), [](double x) { return 1.0 / x; });
    return push(std::move(out), [this, a, id = static_cast<int>(nodes_.size())]() {
        acc(a.id, la::hadamard(g(id), map_mat(v(id), [](double y) { return -y * y; })));
    });
}

Var Tape::cholesky(Var a) {
    Mat l = la::cholesky(la::sym(v(a.id)));
    return push(std::move(l), [this, a, id = static_cast<int>(nodes_.size())]() {
        // a = l^T l with l upper: abar = sym(l^{-1} phi(l lbar^T) l^{-T})
        const Mat &l = v(id);
        Mat p = phi_lower_half(la::matmul_nt(l, g(id)));
        Mat y = la::solve_upper(l, p);
        Mat abar = la::transpose(la::solve_upper(l, la::transpose(y)));
        acc(a.id, la::sym(abar));
    });
}

Var Tape::solve_psd(Var a, Var b) {
    Mat x = la::solve_psd(la::sym(v(a.id)), v(b.id));
    return push(std::move(x), [this, a, b, id = static_cast<int>(nodes_.size())]() {
        Mat s = la::solve_psd(la::sym(v(a.id)), g(id));
        acc(b.id, s);
        acc(a.id, la::sym(la::scale(la::matmul_nt(s, v(id)), -1.0)));
    });
}

Var Tape::inverse_psd(Var a) {
    Mat x = la::inverse_psd(la::sym(v(a.id)));
    return push(std::move(x), [this, a, id = static_cast<int>(nodes_.size())]() {
        const Mat &x = v(id);
        Mat t = la::matmul(x, la::matmul(g(id), x));
        acc(a.id, la::sym(la::scale(t, -1.0)));
    });
}

Var Tape::solve_lu(Var a, Var b) {
    Mat x = la::solve_lu(v(a.id), v(b.id));
    return push(std::move(x), [this, a, b, id = static_cast<int>(nodes_.size())]() {
        Mat s = la::solve_lu(la::transpose(v(a.id)), g(id));
        acc(b.id, s);
        acc(a.id, la::scale(la::matmul_nt(s, v(id)), -1.0));
    });
}

Var Tape::gather(Var a, std::vector<long> idx, int out_rows, int out_cols) {
    if (idx.size() != static_cast<size_t>(out_rows) * out_cols)
        throw ShapeMismatch("gather: index count does not match output shape");
    const Mat &av = v(a.id);
    Mat out(out_rows, out_cols);
    for (size_t k = 0; k < idx.size(); ++k)
        out.at(k) = idx[k] < 0 ? 0.0 : av.at(static_cast<size_t>(idx[k]));
    return push(std::move(out),
                [this, a, idx = std::move(idx), id = static_cast<int>(nodes_.size())]() {
                    const Mat &gr = g(id);
                    Mat ga(v(a.id).rows(), v(a.id).cols());
                    for (size_t k = 0; k < idx.size(); ++k)
                        if (idx[k] >= 0)
                            ga.at(static_cast<size_t>(idx[k])) += gr.at(k);
                    acc(a.id, ga);
                });
}

namespace {
void check_pool_geom(const Mat &av, const PoolGeom &g, const char *op) {
    if (av.rows() != g.batch * g.h * g.w || av.cols() != g.c)
        throw ShapeMismatch(std::string(op) + ": input rows/cols do not match geometry");
    if (g.k1 < 1 || g.k2 < 1 || g.s1 < 1 || g.s2 < 1 || g.k1 > g.h || g.k2 > g.w)
        throw ShapeMismatch(std::string(op) + ": bad window");
}
} // namespace

Var Tape::pool_avg(Var a, const PoolGeom &geo) {
    const Mat &av = v(a.id);
    check_pool_geom(av, geo, "pool_avg");
    int oh = geo.out_h(), ow = geo.out_w();
    double inv = 1.0 / (geo.k1 * geo.k2);
    Mat out(geo.batch * oh * ow, geo.c);
    for (int b = 0; b < geo.batch; ++b)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                int orow = (b * oh + i) * ow + j;
                for (int di = 0; di < geo.k1; ++di)
                    for (int dj = 0; dj < geo.k2; ++dj) {
                        int irow = (b * geo.h + i * geo.s1 + di) * geo.w + j * geo.s2 + dj;
                        for (int ch = 0; ch < geo.c; ++ch)
                            out(orow, ch) += av(irow, ch) * inv;
                    }
            }
    return push(std::move(out), [this, a, geo, inv, oh, ow, id = static_cast<int>(nodes_.size())]() {
        const Mat &gr = g(id);
        Mat ga(v(a.id).rows(), v(a.id).cols());
        for (int b = 0; b < geo.batch; ++b)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    int orow = (b * oh + i) * ow + j;
                    for (int di = 0; di < geo.k1; ++di)
                        for (int dj = 0; dj < geo.k2; ++dj) {
                            int irow = (b * geo.h + i * geo.s1 + di) * geo.w + j * geo.s2 + dj;
                            for (int ch = 0; ch < geo.c; ++ch)
                                ga(irow, ch) += gr(orow, ch) * inv;
                        }
                }
        acc(a.id, ga);
    });
}

Var Tape::pool_max(Var a, const PoolGeom &geo) {
    const Mat &av = v(a.id);
    check_pool_geom(av, geo, "pool_max");
    int oh = geo.out_h(), ow = geo.out_w();
    Mat out(geo.batch * oh * ow, geo.c);
    auto routes = std::make_shared<std::vector<int>>(out.size());
    for (int b = 0; b < geo.batch; ++b)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                int orow = (b * oh + i) * ow + j;
                for (int ch = 0; ch < geo.c; ++ch) {
                    double best = -1e300;
                    int arg = -1;
                    for (int di = 0; di < geo.k1; ++di)
                        for (int dj = 0; dj < geo.k2; ++dj) {
                            int irow = (b * geo.h + i * geo.s1 + di) * geo.w + j * geo.s2 + dj;
                            if (av(irow, ch) > best) {
                                best = av(irow, ch);
                                arg = irow;
                            }
                        }
                    out(orow, ch) = best;
                    (*routes)[static_cast<size_t>(orow) * geo.c + ch] = arg;
                }
            }
    return push(std::move(out), [this, a, geo, routes, id = static_cast<int>(nodes_.size())]() {
        const Mat &gr = g(id);
        Mat ga(v(a.id).rows(), v(a.id).cols());
        for (size_t k = 0; k < gr.size(); ++k) {
            int irow = (*routes)[k];
            int ch = static_cast<int>(k % geo.c);
            ga(irow, ch) += gr.at(k);
        }
        acc(a.id, ga);
    });
}

GradCheckResult grad_check(const LossFn &f, const std::vector<Mat> &point, double tol,
                           double step) {
    auto eval = [&](const std::vector<Mat> &p) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(p.size());
        for (const Mat &m : p)
            leaves.push_back(tape.input(m));
        Var loss = f(tape, leaves);
        return tape.scalar(loss);
    };

    Tape tape;
    std::vector<Var> leaves;
    for (const Mat &m : point)
        leaves.push_back(tape.input(m));
    Var loss = f(tape, leaves);
    tape.backward(loss);

    GradCheckResult res;
    for (size_t li = 0; li < point.size(); ++li) {
        const Mat &ga = tape.grad(leaves[li]);
        Mat gfd(ga.rows(), ga.cols());
        std::vector<Mat> p = point;
        for (size_t k = 0; k < gfd.size(); ++k) {
            double orig = p[li].at(k);
            p[li].at(k) = orig + step;
            double fp = eval(p);
            p[li].at(k) = orig - step;
            double fm = eval(p);
            p[li].at(k) = orig;
            gfd.at(k) = (fp - fm) / (2.0 * step);
        }
        double denom = std::max({1.0, la::max_abs(ga), la::max_abs(gfd)});
        res.max_rel_err = std::max(res.max_rel_err, la::max_abs_diff(ga, gfd) / denom);
    }
    res.pass = res.max_rel_err <= tol;
    return res;
}

void Tape::backward(Var loss) {
    const Mat &lv = val(loss);
    if (lv.rows() != 1 || lv.cols() != 1)
        throw NotScalarLoss("backward: loss is " + std::to_string(lv.rows()) + "x" +
                            std::to_string(lv.cols()));
    if (ran_backward_)
        throw InvalidParameter("backward: tape already differentiated");
    ran_backward_ = true;
    Mat seed(1, 1);
    seed(0, 0) = 1.0;
    acc(loss.id, seed);
    for (int id = loss.id; id >= 0; --id) {
        Node &n = nodes_[id];
        if (n.back && n.grad.size() != 0)
            n.back();
    }
}

} // namespace lipkernel::ad
