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

#pragma once

#include <vector>

#include "lipkernel/linalg.hpp"

namespace lipkernel::ss {

using la::Mat;

/*
 * Signal conventions used throughout:
 *  - a 1-D signal of length N with c channels is an N x c matrix (row = position);
 *  - a batch of 2-D images is a (batch*N1*N2) x c matrix, pixels row-major;
 *  - convolutions are causal: y[i,j] = sum_{t1,t2} K[t1,t2] u[i-t1, j-t2],
 *    with u zero outside the grid. A stride-s conv samples at s*i - t + o with
 *    the left padding offset o = r mod s, which is exactly the alignment that
 *    turns it into a stride-1 conv on the space-to-depth reshaped input.
 */

struct Kernel1D {
    int c_in = 0, c_out = 0, r = 0;
    std::vector<Mat> taps; // taps[t], t = 0..r, each c_out x c_in

    static Kernel1D zeros(int c_in, int c_out, int r);
};

struct Kernel2D {
    int c_in = 0, c_out = 0, r1 = 0, r2 = 0;
    std::vector<Mat> taps; // taps[t1*(r2+1)+t2], each c_out x c_in

    static Kernel2D zeros(int c_in, int c_out, int r1, int r2);
    Mat &tap(int t1, int t2) { return taps[static_cast<size_t>(t1) * (r2 + 1) + t2]; }
    const Mat &tap(int t1, int t2) const { return taps[static_cast<size_t>(t1) * (r2 + 1) + t2]; }
};

/** 1-D Roesser form: x[i+1] = A x[i] + B u[i], y[i] = C x[i] + D u[i]. */
struct Roesser1D {
    Mat A, B, C, D;
    int c_in = 0, c_out = 0, r = 0;
    int n() const { return r * c_in; }
};

/**
 * 2-D Roesser form with a vertical accumulator state x1 (dim n1 = c_out*r1)
 * and a horizontal delay-line state x2 (dim n2 = c_in*r2):
 *   x1[i+1,j] = A11 x1[i,j] + A12 x2[i,j] + B1 u[i,j]
 *   x2[i,j+1] = A21 x1[i,j] + A22 x2[i,j] + B2 u[i,j]
 *   y[i,j]    = C1 x1[i,j] + C2 x2[i,j] + D u[i,j]
 * A11/A21/A22/B2/C1 are fixed shift structure; the kernel taps live in
 * A12, B1, C2 and D.
 */
struct Roesser2D {
    Mat A11, A12, A21, A22, B1, B2, C1, C2, D;
    int c_in = 0, c_out = 0, r1 = 0, r2 = 0;
    int n1() const { return r1 * c_out; }
    int n2() const { return r2 * c_in; }
};

Roesser1D realize_1d(const Kernel1D &k);
Roesser2D realize_2d(const Kernel2D &k);

/** Inverse of realize_*; throws StructureViolation if the fixed blocks differ. */
Kernel1D kernel_from_realization_1d(const Roesser1D &ss);
Kernel2D kernel_from_realization_2d(const Roesser2D &ss);

/** Causal scan with zero initial state. u is N x c_in; returns N x c_out. */
Mat ss_forward_1d(const Roesser1D &ss, const Mat &u);
/** u is (n1*n2) x c_in, single image; returns (n1*n2) x c_out. */
Mat ss_forward_2d(const Roesser2D &ss, const Mat &u, int n1, int n2);

/** Reference convolutions (nested sums), causal with stride/offset support. */
Mat direct_conv1d(const Kernel1D &k, const Mat &u, int stride = 1, int offset = 0);
Mat direct_conv2d(const Kernel2D &k, const Mat &u, int batch, int n1, int n2, int s1 = 1,
                  int s2 = 1, int o1 = 0, int o2 = 0);

/**
 * im2col patch index map for the gather op and the fast conv path. Output
 * row (b, i, j), column tau*c + ch with tau = t1*(r2+1)+t2; -1 marks padding.
 */
std::vector<long> im2col_indices(int batch, int n1, int n2, int c, int r1, int r2, int s1, int s2,
                                 int o1, int o2, int &out_rows, int &out_cols);

/** Tap matrix of shape ((r1+1)(r2+1)c_in) x c_out matching im2col columns. */
Mat kernel_matrix(const Kernel2D &k);

/** One-gemm convolution; agrees with direct_conv2d to rounding. */
Mat conv2d_im2col(const Kernel2D &k, const Mat &u, int batch, int n1, int n2, int s1 = 1,
                  int s2 = 1, int o1 = 0, int o2 = 0);

/**
 * (batch*n1*n2) x c -> (batch*(n1/s1)*(n2/s2)) x (s1*s2*c); new channel index
 * is (dr*s2 + dc)*c + ch. Throws NotDivisible unless s1 | n1 and s2 | n2.
 */
Mat space_to_depth(const Mat &u, int batch, int n1, int n2, int c, int s1, int s2);
Mat space_to_depth_1d(const Mat &u, int batch, int n, int c, int s);

/** Index map realizing space_to_depth as a gather (for the tape). */
std::vector<long> space_to_depth_indices(int batch, int n1, int n2, int c, int s1, int s2,
                                         int &out_rows, int &out_cols);

/**
 * Kernel on the space-to-depth input equivalent to a stride-(s1,s2) conv of k
 * with offsets o = r mod s; the new order per axis is ceil((r+1)/s) - 1.
 */
Kernel2D reduce_strided_kernel(const Kernel2D &k, int s1, int s2);
Kernel1D reduce_strided_kernel_1d(const Kernel1D &k, int s);

} // namespace lipkernel::ss
