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

#include "lipkernel/nn.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <sstream>

#include "lipkernel/errors.hpp"
#include "lipkernel/rng.hpp"

namespace lipkernel::nn {

using namespace lipkernel::la;
using layers::GainFactor;
using layers::LayerKind;
using layers::LayerVars;
using layers::MaterializedLayer;
using layers::PoolKind;

int StageSpec::out_h() const {
    if (geom.kind != LayerKind::Conv2d)
        return 1;
    int h = in_h / s2d;
    if (geom.pool.kind != PoolKind::None)
        h = (h - geom.pool.k1) / geom.pool.s1 + 1;
    return h;
}

int StageSpec::out_w() const {
    if (geom.kind != LayerKind::Conv2d)
        return 1;
    int w = in_w / s2d;
    if (geom.pool.kind != PoolKind::None)
        w = (w - geom.pool.k2) / geom.pool.s2 + 1;
    return w;
}

int NetSpec::out_dim() const { return stages.empty() ? 0 : stages.back().geom.c_out; }

void validate_spec(const NetSpec &spec) {
    if (spec.in_c <= 0 || spec.in_h <= 0 || spec.in_w <= 0)
        throw InvalidGeometry("network input shape must be positive");
    if (spec.stages.empty())
        throw InvalidGeometry("network needs at least one layer");
    int h = spec.in_h, w = spec.in_w, c = spec.in_c;
    bool flat = false;
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        const StageSpec &st = spec.stages[i];
        const auto &g = st.geom;
        bool last = i + 1 == spec.stages.size();
        if (st.in_h != h || st.in_w != w)
            throw ChainMismatch("stage " + std::to_string(i) + " expects a " +
                                std::to_string(st.in_h) + "x" + std::to_string(st.in_w) +
                                " grid, chain provides " + std::to_string(h) + "x" +
                                std::to_string(w));
        if (g.kind == LayerKind::Conv2d) {
            if (flat || st.flatten)
                throw InvalidGeometry("conv stage cannot follow a flatten");
            if (st.s2d < 1 || h % st.s2d != 0 || w % st.s2d != 0)
                throw InvalidGeometry("space-to-depth factor must divide the grid");
            if (last)
                throw InvalidGeometry("network must end in a dense output layer");
            int cc = c * st.s2d * st.s2d;
            if (g.c_in != cc || g.pre_expand != st.s2d * st.s2d)
                throw ChainMismatch("conv stage channel chain broken at stage " +
                                    std::to_string(i));
            if (g.maxpool != (g.pool.kind == PoolKind::Max))
                throw InvalidGeometry("max-pool flag inconsistent with pool descriptor");
            h /= st.s2d;
            w /= st.s2d;
            c = g.c_out;
            if (g.pool.kind != PoolKind::None) {
                if (h < g.pool.k1 || w < g.pool.k2 || (h - g.pool.k1) % g.pool.s1 != 0 ||
                    (w - g.pool.k2) % g.pool.s2 != 0)
                    throw InvalidGeometry("pool window does not tile the feature map");
                h = (h - g.pool.k1) / g.pool.s1 + 1;
                w = (w - g.pool.k2) / g.pool.s2 + 1;
            }
        } else if (g.kind == LayerKind::Fc || g.kind == LayerKind::LastFc) {
            int p = h * w;
            if (st.s2d != 1)
                throw InvalidGeometry("space-to-depth applies to conv stages only");
            if (p > 1 && !st.flatten)
                throw ChainMismatch("dense stage after a spatial stage must flatten");
            if (g.pre_expand != p || g.c_in != p * c)
                throw ChainMismatch("dense stage dimension chain broken at stage " +
                                    std::to_string(i));
            if (g.kind == LayerKind::LastFc && !last)
                throw InvalidGeometry("output layer must be the final stage");
            if (g.kind == LayerKind::Fc && last)
                throw InvalidGeometry("network must end in a dense output layer");
            flat = true;
            h = w = 1;
            c = g.c_out;
        } else {
            throw InvalidGeometry("unsupported layer kind in a network");
        }
    }
    if (spec.l_q.rows() > 0 && (spec.l_q.rows() != spec.l_q.cols() || spec.l_q.rows() != c))
        throw ShapeMismatch("output metric factor has the wrong dimension");
    if (spec.l_0.rows() > 0 &&
        (spec.l_0.rows() != spec.l_0.cols() || spec.l_0.rows() != spec.in_c))
        throw ShapeMismatch("input metric factor must match the input channel count");
    if (spec.rho <= 0.0)
        throw InvalidParameter("rho must be positive");
}

Mat input_factor(const NetSpec &spec) {
    return spec.l_0.rows() > 0 ? spec.l_0 : scale(Mat::identity(spec.in_c), spec.rho);
}

PhiNetwork init_network(const NetSpec &spec, std::uint64_t seed, double weight_std) {
    validate_spec(spec);
    PhiNetwork net;
    net.spec = spec;
    Rng rng(seed);
    for (const StageSpec &st : spec.stages)
        net.params.push_back(layers::init_params(st.geom, rng, weight_std));
    return net;
}

PlainNetwork export_plain(const PhiNetwork &net) {
    validate_spec(net.spec);
    if (net.params.size() != net.spec.stages.size())
        throw InvalidParameter("parameter list does not match the stage list");
    PlainNetwork out;
    out.spec = net.spec;
    GainFactor prev{input_factor(net.spec), false, 1};
    for (size_t i = 0; i < net.spec.stages.size(); ++i) {
        const auto &g = net.spec.stages[i].geom;
        GainFactor fed = layers::gain_expand(prev, g.pre_expand);
        const Mat *qf = (g.kind == LayerKind::LastFc && net.spec.l_q.rows() > 0)
                            ? &net.spec.l_q
                            : nullptr;
        MaterializedLayer m = layers::materialize(g, net.params[i], fed, qf);
        prev = m.out;
        out.layers.push_back(std::move(m));
    }
    return out;
}

// ---- plain forward ------------------------------------------------------

namespace {

// row-major flatten keeps the buffer identical, only the shape changes
Mat reshape_plain(const Mat &m, int r, int c) {
    if (static_cast<long>(m.size()) != static_cast<long>(r) * c)
        throw ShapeMismatch("reshape: element count mismatch");
    Mat out(r, c);
    for (size_t k = 0; k < m.size(); ++k)
        out.at(k) = m.at(k);
    return out;
}

void add_bias_rows(Mat &m, const Mat &bias) {
    if (bias.cols() != m.cols() || bias.rows() != 1)
        throw ShapeMismatch("bias must be a row vector matching the output width");
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            m(i, j) += bias(0, j);
}

void apply_act(Mat &m, Activation act) {
    if (act == Activation::Relu) {
        for (size_t k = 0; k < m.size(); ++k)
            m.at(k) = m.at(k) > 0.0 ? m.at(k) : 0.0;
    } else {
        for (size_t k = 0; k < m.size(); ++k)
            m.at(k) = std::tanh(m.at(k));
    }
}

// derivative mask matching apply_act's subgradient choice at kinks
void apply_act_jvp(const Mat &pre, Mat &d, Activation act) {
    if (act == Activation::Relu) {
        for (size_t k = 0; k < pre.size(); ++k)
            if (pre.at(k) <= 0.0)
                d.at(k) = 0.0;
    } else {
        for (size_t k = 0; k < pre.size(); ++k) {
            double th = std::tanh(pre.at(k));
            d.at(k) *= 1.0 - th * th;
        }
    }
}

Mat pool_avg_plain(const Mat &x, const ad::PoolGeom &pg) {
    Mat out(pg.batch * pg.out_h() * pg.out_w(), pg.c);
    double inv = 1.0 / (pg.k1 * pg.k2);
    for (int b = 0; b < pg.batch; ++b)
        for (int oi = 0; oi < pg.out_h(); ++oi)
            for (int oj = 0; oj < pg.out_w(); ++oj) {
                int orow = (b * pg.out_h() + oi) * pg.out_w() + oj;
                for (int ch = 0; ch < pg.c; ++ch) {
                    double acc = 0.0;
                    for (int di = 0; di < pg.k1; ++di)
                        for (int dj = 0; dj < pg.k2; ++dj) {
                            int irow = (b * pg.h + oi * pg.s1 + di) * pg.w + oj * pg.s2 + dj;
                            acc += x(irow, ch);
                        }
                    out(orow, ch) = acc * inv;
                }
            }
    return out;
}

Mat pool_max_plain(const Mat &x, const ad::PoolGeom &pg, std::vector<long> *routes) {
    Mat out(pg.batch * pg.out_h() * pg.out_w(), pg.c);
    if (routes)
        routes->assign(static_cast<size_t>(out.rows()) * pg.c, 0);
    for (int b = 0; b < pg.batch; ++b)
        for (int oi = 0; oi < pg.out_h(); ++oi)
            for (int oj = 0; oj < pg.out_w(); ++oj) {
                int orow = (b * pg.out_h() + oi) * pg.out_w() + oj;
                for (int ch = 0; ch < pg.c; ++ch) {
                    double best = -1e300;
                    long best_row = 0;
                    for (int di = 0; di < pg.k1; ++di)
                        for (int dj = 0; dj < pg.k2; ++dj) {
                            int irow = (b * pg.h + oi * pg.s1 + di) * pg.w + oj * pg.s2 + dj;
                            if (x(irow, ch) > best) {
                                best = x(irow, ch);
                                best_row = irow;
                            }
                        }
                    out(orow, ch) = best;
                    if (routes)
                        (*routes)[static_cast<size_t>(orow) * pg.c + ch] = best_row;
                }
            }
    return out;
}

} // namespace

Mat forward(const PlainNetwork &net, const Mat &x) {
    const NetSpec &spec = net.spec;
    if (x.cols() != spec.in_dim())
        throw ShapeMismatch("forward: input width " + std::to_string(x.cols()) +
                            " does not match the network input " +
                            std::to_string(spec.in_dim()));
    int b = x.rows();
    int h = spec.in_h, w = spec.in_w, c = spec.in_c;
    Mat cur = reshape_plain(x, b * h * w, c);
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        const StageSpec &st = spec.stages[i];
        const auto &g = st.geom;
        const MaterializedLayer &m = net.layers[i];
        bool last = i + 1 == spec.stages.size();
        if (g.kind == LayerKind::Conv2d) {
            if (st.s2d > 1) {
                cur = ss::space_to_depth(cur, b, h, w, c, st.s2d, st.s2d);
                h /= st.s2d;
                w /= st.s2d;
                c *= st.s2d * st.s2d;
            }
            cur = ss::conv2d_im2col(m.k2, cur, b, h, w);
            c = g.c_out;
            add_bias_rows(cur, m.bias);
            apply_act(cur, spec.act);
            if (g.pool.kind != PoolKind::None) {
                ad::PoolGeom pg{b, h, w, c, g.pool.k1, g.pool.k2, g.pool.s1, g.pool.s2};
                cur = g.pool.kind == PoolKind::Avg ? pool_avg_plain(cur, pg)
                                                   : pool_max_plain(cur, pg, nullptr);
                h = pg.out_h();
                w = pg.out_w();
            }
        } else {
            cur = reshape_plain(cur, b, h * w * c);
            h = w = 1;
            cur = matmul_nt(cur, m.W);
            add_bias_rows(cur, m.bias);
            if (!last)
                apply_act(cur, spec.act);
            c = g.c_out;
        }
    }
    return cur;
}

std::pair<Mat, Mat> forward_jvp(const PlainNetwork &net, const Mat &x, const Mat &v) {
    const NetSpec &spec = net.spec;
    if (!x.same_shape(v))
        throw ShapeMismatch("forward_jvp: direction shape mismatch");
    int b = x.rows();
    int h = spec.in_h, w = spec.in_w, c = spec.in_c;
    Mat cur = reshape_plain(x, b * h * w, c);
    Mat dir = reshape_plain(v, b * h * w, c);
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        const StageSpec &st = spec.stages[i];
        const auto &g = st.geom;
        const MaterializedLayer &m = net.layers[i];
        bool last = i + 1 == spec.stages.size();
        if (g.kind == LayerKind::Conv2d) {
            if (st.s2d > 1) {
                cur = ss::space_to_depth(cur, b, h, w, c, st.s2d, st.s2d);
                dir = ss::space_to_depth(dir, b, h, w, c, st.s2d, st.s2d);
                h /= st.s2d;
                w /= st.s2d;
                c *= st.s2d * st.s2d;
            }
            cur = ss::conv2d_im2col(m.k2, cur, b, h, w);
            dir = ss::conv2d_im2col(m.k2, dir, b, h, w);
            c = g.c_out;
            add_bias_rows(cur, m.bias);
            apply_act_jvp(cur, dir, spec.act);
            apply_act(cur, spec.act);
            if (g.pool.kind != PoolKind::None) {
                ad::PoolGeom pg{b, h, w, c, g.pool.k1, g.pool.k2, g.pool.s1, g.pool.s2};
                if (g.pool.kind == PoolKind::Avg) {
                    cur = pool_avg_plain(cur, pg);
                    dir = pool_avg_plain(dir, pg);
                } else {
                    std::vector<long> routes;
                    cur = pool_max_plain(cur, pg, &routes);
                    Mat dd(cur.rows(), c);
                    for (int r = 0; r < dd.rows(); ++r)
                        for (int ch = 0; ch < c; ++ch)
                            dd(r, ch) = dir(static_cast<int>(
                                                routes[static_cast<size_t>(r) * c + ch]),
                                            ch);
                    dir = std::move(dd);
                }
                h = pg.out_h();
                w = pg.out_w();
            }
        } else {
            cur = reshape_plain(cur, b, h * w * c);
            dir = reshape_plain(dir, b, h * w * c);
            h = w = 1;
            cur = matmul_nt(cur, m.W);
            dir = matmul_nt(dir, m.W);
            add_bias_rows(cur, m.bias);
            if (!last) {
                apply_act_jvp(cur, dir, spec.act);
                apply_act(cur, spec.act);
            }
            c = g.c_out;
        }
    }
    return {cur, dir};
}

// ---- tape forward -------------------------------------------------------

namespace {

Var reshape_var(Tape &t, Var x, int r, int c) {
    const Mat &v = t.val(x);
    if (static_cast<long>(v.size()) != static_cast<long>(r) * c)
        throw ShapeMismatch("reshape: element count mismatch");
    if (v.rows() == r && v.cols() == c)
        return x;
    std::vector<long> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0L);
    return t.gather(x, std::move(idx), r, c);
}

Var forward_impl(Tape &t, const NetSpec &spec, int b, Var x,
                 const std::function<Var(int)> &km_of, const std::function<Var(int)> &w_of,
                 const std::function<Var(int)> &bias_of) {
    if (t.val(x).cols() != spec.in_dim() || t.val(x).rows() != b)
        throw ShapeMismatch("forward: batch shape mismatch");
    int h = spec.in_h, w = spec.in_w, c = spec.in_c;
    Var cur = reshape_var(t, x, b * h * w, c);
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        const StageSpec &st = spec.stages[i];
        const auto &g = st.geom;
        bool last = i + 1 == spec.stages.size();
        if (g.kind == LayerKind::Conv2d) {
            if (st.s2d > 1) {
                int rr = 0, cc = 0;
                auto idx = ss::space_to_depth_indices(b, h, w, c, st.s2d, st.s2d, rr, cc);
                cur = t.gather(cur, std::move(idx), rr, cc);
                h /= st.s2d;
                w /= st.s2d;
                c *= st.s2d * st.s2d;
            }
            int rr = 0, cc = 0;
            auto idx = ss::im2col_indices(b, h, w, c, g.r1, g.r2, 1, 1, 0, 0, rr, cc);
            Var patches = t.gather(cur, std::move(idx), rr, cc);
            cur = t.matmul(patches, km_of(static_cast<int>(i)));
            c = g.c_out;
            cur = t.add_row_broadcast(cur, bias_of(static_cast<int>(i)));
            cur = spec.act == Activation::Relu ? t.relu(cur) : t.tanh(cur);
            if (g.pool.kind != PoolKind::None) {
                ad::PoolGeom pg{b, h, w, c, g.pool.k1, g.pool.k2, g.pool.s1, g.pool.s2};
                cur = g.pool.kind == PoolKind::Avg ? t.pool_avg(cur, pg) : t.pool_max(cur, pg);
                h = pg.out_h();
                w = pg.out_w();
            }
        } else {
            cur = reshape_var(t, cur, b, h * w * c);
            h = w = 1;
            cur = t.add_row_broadcast(t.matmul(cur, t.transpose(w_of(static_cast<int>(i)))),
                                      bias_of(static_cast<int>(i)));
            if (!last)
                cur = spec.act == Activation::Relu ? t.relu(cur) : t.tanh(cur);
            c = g.c_out;
        }
    }
    return cur;
}

// stack the transposed taps so a gathered patch row times this matrix is the conv
Var kernel_matrix_var(Tape &t, const LayerVars &lv) {
    auto taps = layers::tap_vars(t, lv);
    std::vector<Var> blocks;
    blocks.reserve(taps.size());
    for (Var tap : taps)
        blocks.push_back(t.transpose(tap));
    return blocks.size() == 1 ? blocks[0] : t.concat_v(blocks);
}

} // namespace

PhiTape lift_network(Tape &t, const PhiNetwork &net) {
    validate_spec(net.spec);
    if (net.params.size() != net.spec.stages.size())
        throw InvalidParameter("parameter list does not match the stage list");
    PhiTape out;
    layers::GainVar prev{t.constant(input_factor(net.spec)), false, 1, net.spec.in_c};
    for (size_t i = 0; i < net.spec.stages.size(); ++i) {
        const auto &g = net.spec.stages[i].geom;
        std::map<std::string, Var> vars;
        for (const auto &[name, value] : net.params[i])
            vars.emplace(name, t.input(value));
        layers::GainVar fed = prev;
        fed.expand *= g.pre_expand;
        const Mat *qf = (g.kind == LayerKind::LastFc && net.spec.l_q.rows() > 0)
                            ? &net.spec.l_q
                            : nullptr;
        LayerVars lv = layers::parameterize(t, g, vars, fed, qf);
        prev = lv.out;
        out.params.push_back(std::move(vars));
        out.layers.push_back(std::move(lv));
    }
    return out;
}

Var phi_forward(Tape &t, const NetSpec &spec, const std::vector<LayerVars> &layer_vars, Var x_var,
                int batch) {
    return forward_impl(
        t, spec, batch, x_var,
        [&](int i) { return kernel_matrix_var(t, layer_vars[i]); },
        [&](int i) { return layer_vars[i].W; }, [&](int i) { return layer_vars[i].bias; });
}

Var plain_forward_tape(Tape &t, const PlainNetwork &net, Var x_var, int batch) {
    return forward_impl(
        t, net.spec, batch, x_var,
        [&](int i) { return t.constant(ss::kernel_matrix(net.layers[i].k2)); },
        [&](int i) { return t.constant(net.layers[i].W); },
        [&](int i) { return t.constant(net.layers[i].bias); });
}

// ---- Fourier-domain orthogonal baseline ---------------------------------

FourierOrthLayer init_fourier_layer(int c_in, int c_out, int n, int k, std::uint64_t seed) {
    if (c_in <= 0 || c_out <= 0 || n <= 0 || k <= 0 || k > n)
        throw InvalidGeometry("fourier layer: bad channel or size arguments");
    FourierOrthLayer layer;
    layer.c_in = c_in;
    layer.c_out = c_out;
    layer.n = n;
    layer.k = k;
    int cm = std::max(c_in, c_out);
    Rng rng(seed);
    double std = 1.0 / std::sqrt(static_cast<double>(cm) * k * k);
    for (int tap = 0; tap < k * k; ++tap) {
        Mat m(cm, cm);
        for (size_t e = 0; e < m.size(); ++e)
            m.at(e) = std * rng.normal();
        layer.seed.push_back(std::move(m));
    }
    return layer;
}

Mat fourier_orth_forward(const FourierOrthLayer &layer, const Mat &x, int batch) {
    int n = layer.n;
    if (n <= 0 || (n & (n - 1)) != 0)
        throw NonPowerOfTwo("fourier layer needs a power-of-two image side");
    if (x.rows() != batch * n * n || x.cols() != layer.c_in)
        throw ShapeMismatch("fourier forward: input shape mismatch");
    int cm = std::max(layer.c_in, layer.c_out);
    int nf = n * n;

    // frequency response of the seed, one small matrix per frequency
    std::vector<CMat> param(nf, CMat(cm, cm));
    for (int a = 0; a < cm; ++a)
        for (int b = 0; b < cm; ++b) {
            CMat img(n, n);
            for (int t1 = 0; t1 < layer.k; ++t1)
                for (int t2 = 0; t2 < layer.k; ++t2)
                    img(t1, t2) = layer.seed[static_cast<size_t>(t1) * layer.k + t2](a, b);
            fft2(img);
            for (int f = 0; f < nf; ++f)
                param[f](a, b) = img.data()[f];
        }

    // per-frequency Cayley map of the skew-Hermitian part
    std::vector<CMat> umap(nf);
    CMat eye(cm, cm);
    for (int i = 0; i < cm; ++i)
        eye(i, i) = 1.0;
    for (int f = 0; f < nf; ++f) {
        CMat a(cm, cm), ipa(cm, cm), ima(cm, cm);
        for (int i = 0; i < cm; ++i)
            for (int j = 0; j < cm; ++j)
                a(i, j) = param[f](i, j) - std::conj(param[f](j, i));
        for (int i = 0; i < cm; ++i)
            for (int j = 0; j < cm; ++j) {
                ipa(i, j) = eye(i, j) + a(i, j);
                ima(i, j) = eye(i, j) - a(i, j);
            }
        CMat u = solve_lu(ipa, ima);
        CMat slice(layer.c_out, layer.c_in);
        for (int i = 0; i < layer.c_out; ++i)
            for (int j = 0; j < layer.c_in; ++j)
                slice(i, j) = u(i, j);
        umap[f] = std::move(slice);
    }

    // transform the batch, multiply per frequency, transform back
    std::vector<CMat> planes(static_cast<size_t>(batch) * layer.c_in);
    for (int b = 0; b < batch; ++b)
        for (int q = 0; q < layer.c_in; ++q) {
            CMat img(n, n);
            for (int p = 0; p < nf; ++p)
                img.data()[p] = x(b * nf + p, q);
            fft2(img);
            planes[static_cast<size_t>(b) * layer.c_in + q] = std::move(img);
        }
    Mat out(batch * nf, layer.c_out);
    std::vector<CMat> oplanes(layer.c_out, CMat(n, n));
    for (int b = 0; b < batch; ++b) {
        for (auto &pl : oplanes)
            pl = CMat(n, n);
        for (int f = 0; f < nf; ++f) {
            const CMat &u = umap[f];
            for (int p = 0; p < layer.c_out; ++p) {
                std::complex<double> acc = 0.0;
                for (int q = 0; q < layer.c_in; ++q)
                    acc += u(p, q) * planes[static_cast<size_t>(b) * layer.c_in + q].data()[f];
                oplanes[p].data()[f] = acc;
            }
        }
        for (int p = 0; p < layer.c_out; ++p) {
            ifft2(oplanes[p]);
            for (int pos = 0; pos < nf; ++pos)
                out(b * nf + pos, p) = oplanes[p].data()[pos].real();
        }
    }
    return out;
}

// ---- benchmark ----------------------------------------------------------

const char *kBenchCsvHeader = "engine,channels,image,kernel,avg_ms,std_ms,reps";

std::string BenchResult::csv_row() const {
    std::ostringstream os;
    os << (spec.engine == Engine::Kernel ? "kernel" : "fourier") << "," << spec.channels << ","
       << spec.image << "," << spec.kernel << "," << avg_ms << "," << std_ms << "," << reps;
    return os.str();
}

BenchResult bench_inference(const BenchSpec &spec, int reps, int warmup) {
    if (reps <= 0 || warmup < 0 || spec.channels <= 0 || spec.image <= 0 || spec.kernel <= 0 ||
        spec.batch <= 0)
        throw InvalidSpec("bench: reps must be positive and sizes valid");
    Rng rng(123);
    int c = spec.channels, n = spec.image, k = spec.kernel;
    Mat x(spec.batch * n * n, c);
    for (size_t e = 0; e < x.size(); ++e)
        x.at(e) = rng.normal();

    std::function<void()> step;
    ss::Kernel2D kern;
    FourierOrthLayer four;
    volatile double sink = 0.0;
    if (spec.engine == Engine::Kernel) {
        kern = ss::Kernel2D::zeros(c, c, k - 1, k - 1);
        for (auto &tap : kern.taps)
            for (size_t e = 0; e < tap.size(); ++e)
                tap.at(e) = rng.normal() / (c * k);
        step = [&]() {
            Mat y = ss::conv2d_im2col(kern, x, spec.batch, n, n);
            sink = sink + y(0, 0);
        };
    } else {
        four = init_fourier_layer(c, c, n, k, 321);
        step = [&]() {
            Mat y = fourier_orth_forward(four, x, spec.batch);
            sink = sink + y(0, 0);
        };
    }
    for (int i = 0; i < warmup; ++i)
        step();
    std::vector<double> times;
    times.reserve(reps);
    for (int i = 0; i < reps; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        step();
        auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double mean = 0.0;
    for (double v : times)
        mean += v;
    mean /= reps;
    double var = 0.0;
    for (double v : times)
        var += (v - mean) * (v - mean);
    BenchResult res;
    res.spec = spec;
    res.avg_ms = mean;
    res.std_ms = reps > 1 ? std::sqrt(var / (reps - 1)) : 0.0;
    res.reps = reps;
    return res;
}

} // namespace lipkernel::nn
