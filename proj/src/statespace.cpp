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

#include "lipkernel/statespace.hpp"

#include <cmath>

#include "lipkernel/errors.hpp"

namespace lipkernel::ss {

using namespace lipkernel::la;

Kernel1D Kernel1D::zeros(int c_in, int c_out, int r) {
    Kernel1D k;
    k.c_in = c_in;
    k.c_out = c_out;
    k.r = r;
    k.taps.assign(r + 1, Mat(c_out, c_in));
    return k;
}

Kernel2D Kernel2D::zeros(int c_in, int c_out, int r1, int r2) {
    Kernel2D k;
    k.c_in = c_in;
    k.c_out = c_out;
    k.r1 = r1;
    k.r2 = r2;
    k.taps.assign(static_cast<size_t>(r1 + 1) * (r2 + 1), Mat(c_out, c_in));
    return k;
}

namespace {

void check_kernel(const Kernel1D &k) {
    if (k.taps.size() != static_cast<size_t>(k.r + 1))
        throw ShapeMismatch("kernel1d: expected " + std::to_string(k.r + 1) + " taps");
    for (const Mat &t : k.taps)
        if (t.rows() != k.c_out || t.cols() != k.c_in)
            throw ShapeMismatch("kernel1d: tap shape mismatch");
}

void check_kernel(const Kernel2D &k) {
    if (k.taps.size() != static_cast<size_t>(k.r1 + 1) * (k.r2 + 1))
        throw ShapeMismatch("kernel2d: wrong tap count");
    for (const Mat &t : k.taps)
        if (t.rows() != k.c_out || t.cols() != k.c_in)
            throw ShapeMismatch("kernel2d: tap shape mismatch");
}

} // namespace

Roesser1D realize_1d(const Kernel1D &k) {
    check_kernel(k);
    Roesser1D ss;
    ss.c_in = k.c_in;
    ss.c_out = k.c_out;
    ss.r = k.r;
    int n = k.r * k.c_in;
    ss.A = Mat(n, n);
    ss.B = Mat(n, k.c_in);
    ss.C = Mat(k.c_out, n);
    ss.D = k.taps[0];
    // state carries (u[i-r], ..., u[i-1]); shift up, inject at the last block
    for (int blk = 0; blk + 1 < k.r; ++blk)
        for (int q = 0; q < k.c_in; ++q)
            ss.A(blk * k.c_in + q, (blk + 1) * k.c_in + q) = 1.0;
    if (k.r > 0)
        for (int q = 0; q < k.c_in; ++q)
            ss.B((k.r - 1) * k.c_in + q, q) = 1.0;
    for (int blk = 0; blk < k.r; ++blk)
        set_block(ss.C, 0, blk * k.c_in, k.taps[k.r - blk]);
    return ss;
}

Roesser2D realize_2d(const Kernel2D &k) {
    check_kernel(k);
    Roesser2D ss;
    ss.c_in = k.c_in;
    ss.c_out = k.c_out;
    ss.r1 = k.r1;
    ss.r2 = k.r2;
    int n1 = ss.n1(), n2 = ss.n2();
    ss.A11 = Mat(n1, n1);
    ss.A12 = Mat(n1, n2);
    ss.A21 = Mat(n2, n1);
    ss.A22 = Mat(n2, n2);
    ss.B1 = Mat(n1, k.c_in);
    ss.B2 = Mat(n2, k.c_in);
    ss.C1 = Mat(k.c_out, n1);
    ss.C2 = Mat(k.c_out, n2);
    ss.D = k.tap(0, 0);
    for (int blk = 1; blk < k.r1; ++blk)
        for (int q = 0; q < k.c_out; ++q)
            ss.A11(blk * k.c_out + q, (blk - 1) * k.c_out + q) = 1.0;
    for (int blk = 0; blk + 1 < k.r2; ++blk)
        for (int q = 0; q < k.c_in; ++q)
            ss.A22(blk * k.c_in + q, (blk + 1) * k.c_in + q) = 1.0;
    if (k.r2 > 0)
        for (int q = 0; q < k.c_in; ++q)
            ss.B2((k.r2 - 1) * k.c_in + q, q) = 1.0;
    if (k.r1 > 0)
        for (int q = 0; q < k.c_out; ++q)
            ss.C1(q, (k.r1 - 1) * k.c_out + q) = 1.0;
    for (int i = 0; i < k.r1; ++i) {
        for (int m = 0; m < k.r2; ++m)
            set_block(ss.A12, i * k.c_out, m * k.c_in, k.tap(k.r1 - i, k.r2 - m));
        set_block(ss.B1, i * k.c_out, 0, k.tap(k.r1 - i, 0));
    }
    for (int m = 0; m < k.r2; ++m)
        set_block(ss.C2, 0, m * k.c_in, k.tap(0, k.r2 - m));
    return ss;
}

namespace {

void expect_zero(const Mat &got, const char *what) {
    if (max_abs(got) > 1e-12)
        throw StructureViolation(std::string("realization: ") + what + " deviates from fixed form");
}

} // namespace

Kernel1D kernel_from_realization_1d(const Roesser1D &ss) {
    int c_in = ss.D.cols(), c_out = ss.D.rows();
    int n = ss.A.rows();
    if (c_in <= 0 || c_out <= 0)
        throw ShapeMismatch("kernel_from_realization_1d: empty D");
    if (n % std::max(1, c_in) != 0)
        throw NotDivisible("kernel_from_realization_1d: state dim not divisible by c_in");
    int r = c_in > 0 ? n / c_in : 0;
    Kernel1D k = Kernel1D::zeros(c_in, c_out, r);
    k.taps[0] = ss.D;
    Roesser1D ref = realize_1d(k); // taps only affect C; A and B are structural
    expect_zero(sub(ss.A, ref.A), "A");
    expect_zero(sub(ss.B, ref.B), "B");
    for (int blk = 0; blk < r; ++blk)
        k.taps[r - blk] = block(ss.C, 0, blk * c_in, c_out, c_in);
    return k;
}

Kernel2D kernel_from_realization_2d(const Roesser2D &ss) {
    int c_in = ss.D.cols(), c_out = ss.D.rows();
    if (c_in <= 0 || c_out <= 0)
        throw ShapeMismatch("kernel_from_realization_2d: empty D");
    if (ss.A11.rows() % c_out != 0 || ss.A22.rows() % c_in != 0)
        throw NotDivisible("kernel_from_realization_2d: state dims not divisible by channels");
    int r1 = ss.A11.rows() / c_out, r2 = ss.A22.rows() / c_in;
    Kernel2D k = Kernel2D::zeros(c_in, c_out, r1, r2);
    k.tap(0, 0) = ss.D;
    Roesser2D ref = realize_2d(k);
    expect_zero(sub(ss.A11, ref.A11), "A11");
    expect_zero(sub(ss.A21, ref.A21), "A21");
    expect_zero(sub(ss.A22, ref.A22), "A22");
    expect_zero(sub(ss.B2, ref.B2), "B2");
    expect_zero(sub(ss.C1, ref.C1), "C1");
    for (int i = 0; i < r1; ++i) {
        for (int m = 0; m < r2; ++m)
            k.tap(r1 - i, r2 - m) = block(ss.A12, i * c_out, m * c_in, c_out, c_in);
        k.tap(r1 - i, 0) = block(ss.B1, i * c_out, 0, c_out, c_in);
    }
    for (int m = 0; m < r2; ++m)
        k.tap(0, r2 - m) = block(ss.C2, 0, m * c_in, c_out, c_in);
    return k;
}

namespace {

// y += M x for a row-major matrix and column-vector views
void mat_vec_acc(const Mat &m, const double *x, double *y) {
    for (int i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        const double *row = m.data() + static_cast<size_t>(i) * m.cols();
        for (int j = 0; j < m.cols(); ++j)
            s += row[j] * x[j];
        y[i] += s;
    }
}

} // namespace

Mat ss_forward_1d(const Roesser1D &ss, const Mat &u) {
    if (u.cols() != ss.c_in)
        throw ChannelMismatch("ss_forward_1d: input has " + std::to_string(u.cols()) +
                              " channels, expected " + std::to_string(ss.c_in));
    int len = u.rows(), n = ss.A.rows();
    Mat y(len, ss.c_out);
    std::vector<double> x(n, 0.0), xn(n, 0.0);
    for (int i = 0; i < len; ++i) {
        std::vector<double> uin(u.data() + static_cast<size_t>(i) * ss.c_in,
                                u.data() + static_cast<size_t>(i + 1) * ss.c_in);
        double *yrow = y.data() + static_cast<size_t>(i) * ss.c_out;
        mat_vec_acc(ss.C, x.data(), yrow);
        mat_vec_acc(ss.D, uin.data(), yrow);
        std::fill(xn.begin(), xn.end(), 0.0);
        mat_vec_acc(ss.A, x.data(), xn.data());
        mat_vec_acc(ss.B, uin.data(), xn.data());
        std::swap(x, xn);
    }
    return y;
}

Mat ss_forward_2d(const Roesser2D &ss, const Mat &u, int n1, int n2) {
    if (u.cols() != ss.c_in)
        throw ChannelMismatch("ss_forward_2d: channel mismatch");
    if (u.rows() != n1 * n2)
        throw ShapeMismatch("ss_forward_2d: rows != n1*n2");
    int d1 = ss.n1(), d2 = ss.n2();
    Mat y(n1 * n2, ss.c_out);
    // x1 is carried down per column; x2 flows along each row
    std::vector<std::vector<double>> x1(n2, std::vector<double>(d1, 0.0));
    std::vector<double> x2(d2), x1n(d1), x2n(d2);
    for (int i = 0; i < n1; ++i) {
        std::fill(x2.begin(), x2.end(), 0.0);
        for (int j = 0; j < n2; ++j) {
            const double *uin = u.data() + (static_cast<size_t>(i) * n2 + j) * ss.c_in;
            double *yrow = y.data() + (static_cast<size_t>(i) * n2 + j) * ss.c_out;
            mat_vec_acc(ss.C1, x1[j].data(), yrow);
            mat_vec_acc(ss.C2, x2.data(), yrow);
            mat_vec_acc(ss.D, uin, yrow);
            std::fill(x1n.begin(), x1n.end(), 0.0);
            mat_vec_acc(ss.A11, x1[j].data(), x1n.data());
            mat_vec_acc(ss.A12, x2.data(), x1n.data());
            mat_vec_acc(ss.B1, uin, x1n.data());
            std::fill(x2n.begin(), x2n.end(), 0.0);
            mat_vec_acc(ss.A21, x1[j].data(), x2n.data());
            mat_vec_acc(ss.A22, x2.data(), x2n.data());
            mat_vec_acc(ss.B2, uin, x2n.data());
            x1[j] = x1n;
            x2 = x2n;
        }
    }
    return y;
}

Mat direct_conv1d(const Kernel1D &k, const Mat &u, int stride, int offset) {
    check_kernel(k);
    if (u.cols() != k.c_in)
        throw ChannelMismatch("direct_conv1d: channel mismatch");
    int len = u.rows();
    if (len % stride != 0)
        throw NotDivisible("direct_conv1d: length not divisible by stride");
    int out_len = len / stride;
    Mat y(out_len, k.c_out);
    for (int i = 0; i < out_len; ++i)
        for (int t = 0; t <= k.r; ++t) {
            int src = stride * i - t + offset;
            if (src < 0 || src >= len)
                continue;
            const Mat &tap = k.taps[t];
            for (int p = 0; p < k.c_out; ++p) {
                double s = 0.0;
                for (int q = 0; q < k.c_in; ++q)
                    s += tap(p, q) * u(src, q);
                y(i, p) += s;
            }
        }
    return y;
}

Mat direct_conv2d(const Kernel2D &k, const Mat &u, int batch, int n1, int n2, int s1, int s2,
                  int o1, int o2) {
    check_kernel(k);
    if (u.cols() != k.c_in)
        throw ChannelMismatch("direct_conv2d: channel mismatch");
    if (u.rows() != batch * n1 * n2)
        throw ShapeMismatch("direct_conv2d: rows != batch*n1*n2");
    if (n1 % s1 != 0 || n2 % s2 != 0)
        throw NotDivisible("direct_conv2d: size not divisible by stride");
    int oh = n1 / s1, ow = n2 / s2;
    Mat y(batch * oh * ow, k.c_out);
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double *yrow = y.data() + ((static_cast<size_t>(b) * oh + i) * ow + j) * k.c_out;
                for (int t1 = 0; t1 <= k.r1; ++t1) {
                    int pi = s1 * i - t1 + o1;
                    if (pi < 0 || pi >= n1)
                        continue;
                    for (int t2 = 0; t2 <= k.r2; ++t2) {
                        int pj = s2 * j - t2 + o2;
                        if (pj < 0 || pj >= n2)
                            continue;
                        const Mat &tap = k.tap(t1, t2);
                        const double *uin =
                            u.data() + ((static_cast<size_t>(b) * n1 + pi) * n2 + pj) * k.c_in;
                        mat_vec_acc(tap, uin, yrow);
                    }
                }
            }
    return y;
}

std::vector<long> im2col_indices(int batch, int n1, int n2, int c, int r1, int r2, int s1, int s2,
                                 int o1, int o2, int &out_rows, int &out_cols) {
    if (n1 % s1 != 0 || n2 % s2 != 0)
        throw NotDivisible("im2col: size not divisible by stride");
    int oh = n1 / s1, ow = n2 / s2;
    int taps = (r1 + 1) * (r2 + 1);
    out_rows = batch * oh * ow;
    out_cols = taps * c;
    std::vector<long> idx(static_cast<size_t>(out_rows) * out_cols);
    size_t k = 0;
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                for (int t1 = 0; t1 <= r1; ++t1)
                    for (int t2 = 0; t2 <= r2; ++t2) {
                        int pi = s1 * i - t1 + o1;
                        int pj = s2 * j - t2 + o2;
                        bool pad = pi < 0 || pi >= n1 || pj < 0 || pj >= n2;
                        for (int ch = 0; ch < c; ++ch, ++k)
                            idx[k] = pad ? -1
                                         : ((static_cast<long>(b) * n1 + pi) * n2 + pj) * c + ch;
                    }
    return idx;
}

Mat kernel_matrix(const Kernel2D &k) {
    int taps = (k.r1 + 1) * (k.r2 + 1);
    Mat m(taps * k.c_in, k.c_out);
    for (int t1 = 0; t1 <= k.r1; ++t1)
        for (int t2 = 0; t2 <= k.r2; ++t2) {
            int tau = t1 * (k.r2 + 1) + t2;
            const Mat &tap = k.tap(t1, t2);
            for (int q = 0; q < k.c_in; ++q)
                for (int p = 0; p < k.c_out; ++p)
                    m(tau * k.c_in + q, p) = tap(p, q);
        }
    return m;
}

Mat conv2d_im2col(const Kernel2D &k, const Mat &u, int batch, int n1, int n2, int s1, int s2,
                  int o1, int o2) {
    check_kernel(k);
    if (u.cols() != k.c_in)
        throw ChannelMismatch("conv2d_im2col: channel mismatch");
    int rows = 0, cols = 0;
    auto idx = im2col_indices(batch, n1, n2, k.c_in, k.r1, k.r2, s1, s2, o1, o2, rows, cols);
    Mat patches(rows, cols);
    for (size_t t = 0; t < idx.size(); ++t)
        patches.at(t) = idx[t] < 0 ? 0.0 : u.at(static_cast<size_t>(idx[t]));
    return matmul(patches, kernel_matrix(k));
}

std::vector<long> space_to_depth_indices(int batch, int n1, int n2, int c, int s1, int s2,
                                         int &out_rows, int &out_cols) {
    if (n1 % s1 != 0 || n2 % s2 != 0)
        throw NotDivisible("space_to_depth: size not divisible by stride");
    int oh = n1 / s1, ow = n2 / s2;
    out_rows = batch * oh * ow;
    out_cols = s1 * s2 * c;
    std::vector<long> idx(static_cast<size_t>(out_rows) * out_cols);
    size_t k = 0;
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                for (int dr = 0; dr < s1; ++dr)
                    for (int dc = 0; dc < s2; ++dc)
                        for (int ch = 0; ch < c; ++ch, ++k)
                            idx[k] = ((static_cast<long>(b) * n1 + i * s1 + dr) * n2 + j * s2 +
                                      dc) * c + ch;
    return idx;
}

Mat space_to_depth(const Mat &u, int batch, int n1, int n2, int c, int s1, int s2) {
    if (u.rows() != batch * n1 * n2 || u.cols() != c)
        throw ShapeMismatch("space_to_depth: input shape mismatch");
    int rows = 0, cols = 0;
    auto idx = space_to_depth_indices(batch, n1, n2, c, s1, s2, rows, cols);
    Mat out(rows, cols);
    for (size_t k = 0; k < idx.size(); ++k)
        out.at(k) = u.at(static_cast<size_t>(idx[k]));
    return out;
}

Mat space_to_depth_1d(const Mat &u, int batch, int n, int c, int s) {
    return space_to_depth(u, batch, n, 1, c, s, 1);
}

Kernel2D reduce_strided_kernel(const Kernel2D &k, int s1, int s2) {
    check_kernel(k);
    int o1 = k.r1 % s1, o2 = k.r2 % s2;
    int nr1 = (k.r1 + 1 + s1 - 1) / s1 - 1;
    int nr2 = (k.r2 + 1 + s2 - 1) / s2 - 1;
    Kernel2D out = Kernel2D::zeros(s1 * s2 * k.c_in, k.c_out, nr1, nr2);
    for (int tau1 = 0; tau1 <= nr1; ++tau1)
        for (int tau2 = 0; tau2 <= nr2; ++tau2) {
            Mat &tap = out.tap(tau1, tau2);
            for (int q1 = 0; q1 < s1; ++q1)
                for (int q2 = 0; q2 < s2; ++q2) {
                    int t1 = o1 + s1 * tau1 - q1;
                    int t2 = o2 + s2 * tau2 - q2;
                    if (t1 < 0 || t1 > k.r1 || t2 < 0 || t2 > k.r2)
                        continue;
                    set_block(tap, 0, (q1 * s2 + q2) * k.c_in, k.tap(t1, t2));
                }
        }
    return out;
}

Kernel1D reduce_strided_kernel_1d(const Kernel1D &k, int s) {
    Kernel2D k2 = Kernel2D::zeros(k.c_in, k.c_out, k.r, 0);
    for (int t = 0; t <= k.r; ++t)
        k2.tap(t, 0) = k.taps[t];
    Kernel2D red = reduce_strided_kernel(k2, s, 1);
    Kernel1D out = Kernel1D::zeros(red.c_in, red.c_out, red.r1);
    for (int t = 0; t <= red.r1; ++t)
        out.taps[t] = red.tap(t, 0);
    return out;
}

} // namespace lipkernel::ss
