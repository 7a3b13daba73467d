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

#include <deque>
#include <functional>
#include <vector>

#include "lipkernel/linalg.hpp"

namespace lipkernel::ad {

using la::Mat;

/** Handle to a tape node. Only valid for the tape that created it. */
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/** Pooling window geometry over a batch stored as (batch*h*w) x c rows. */
struct PoolGeom {
    int batch = 1, h = 0, w = 0, c = 0;
    int k1 = 1, k2 = 1, s1 = 1, s2 = 1;
    int out_h() const { return (h - k1) / s1 + 1; }
    int out_w() const { return (w - k2) / s2 + 1; }
};

/**
 * Reverse-mode tape over dense matrices. Ops record a closure that scatters
 * the adjoint back to their parents; backward() walks the tape once in
 * reverse. The factorization ops (cholesky, solve_psd, inverse_psd)
 * symmetrize their matrix argument on the way in, so finite differences of
 * a non-symmetric perturbation agree with the reported gradient.
 */
class Tape {
  public:
    Tape() = default;
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    Var input(Mat v);
    Var constant(Mat v); // same as input; named for intent at call sites

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var hadamard(Var a, Var b);

    Var slice(Var a, int i0, int j0, int rows, int cols);
    Var concat_h(const std::vector<Var> &parts);
    Var concat_v(const std::vector<Var> &parts);
    Var diag_embed(Var v); // n x 1 -> n x n
    Var diag_part(Var a);  // n x n -> n x 1

    Var sum(Var a);    // 1 x 1
    Var sum_sq(Var a); // 1 x 1
    Var row_sum(Var a);
    Var add_row_broadcast(Var a, Var row); // row is 1 x c

    Var exp(Var a);
    Var log(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var abs(Var a);
    Var sqrt(Var a);
    Var inv_elem(Var a);

    Var cholesky(Var a);        // upper factor, a = l^T l
    Var solve_psd(Var a, Var b);
    Var inverse_psd(Var a);
    Var solve_lu(Var a, Var b); // general square a

    /**
     * out[k] = in[idx[k]] with idx < 0 meaning a structural zero. Covers
     * im2col, flatten, space-to-depth and any other pure reindexing.
     */
    Var gather(Var a, std::vector<long> idx, int out_rows, int out_cols);

    Var pool_avg(Var a, const PoolGeom &g);
    Var pool_max(Var a, const PoolGeom &g);

    void backward(Var loss);

    const Mat &val(Var v) const;
    const Mat &grad(Var v) const;
    size_t size() const { return nodes_.size(); }

    double scalar(Var v) const { return val(v)(0, 0); }

  private:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void()> back; // empty for leaves
    };

    Var push(Mat val, std::function<void()> back = {});
    void acc(int id, const Mat &g);
    Mat &v(int id) { return nodes_[id].val; }
    const Mat &g(int id) const { return nodes_[id].grad; }

    std::deque<Node> nodes_;
    bool ran_backward_ = false;

    friend struct TapeAccess;
};

/** Builds a scalar loss from freshly created leaves, in creation order. */
using LossFn = std::function<Var(Tape &, const std::vector<Var> &)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    bool pass = false;
};

/**
 * Compares reverse-mode gradients against central finite differences at the
 * given point. The reported error is the max-norm deviation scaled by
 * max(1, |grad|_inf), so a sound adjoint sits orders of magnitude below any
 * real defect.
 */
GradCheckResult grad_check(const LossFn &f, const std::vector<Mat> &point, double tol = 1e-5,
                           double step = 1e-6);

} // namespace lipkernel::ad
