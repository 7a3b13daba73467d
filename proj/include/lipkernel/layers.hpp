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

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lipkernel/autodiff.hpp"
#include "lipkernel/rng.hpp"
#include "lipkernel/statespace.hpp"

namespace lipkernel::layers {

using ad::Tape;
using ad::Var;
using la::Mat;

/*
 * Every layer here carries a dissipation certificate by construction: the
 * free parameters are unconstrained, and the map to weights routes through
 * Cayley transforms, controllability Gramians and diagonally dominant
 * multiplier choices so that the layer's incremental quadratic constraint
 * holds for any parameter value. A layer consumes the gain factor L_prev of
 * its input metric (X_prev = L_prev^T L_prev) and emits the factor of its
 * output metric; chaining factors from R down to Q yields the network bound.
 */

// ---- Cayley transforms --------------------------------------------------

/** (U, V) with U^T U + V^T V = I; Y is c x c, Z is m x c. */
std::pair<Mat, Mat> cayley(const Mat &y, const Mat &z);
std::pair<Var, Var> cayley(Tape &t, Var y, Var z);

/** Orthonormal columns from a free (m+c) x c matrix (top block square). */
Mat cayley_tall(const Mat &g, int c);
Var cayley_tall(Tape &t, Var g, int c);

// ---- gain factors -------------------------------------------------------

/** X = kron(I_expand, L^T L); diagonal marks factors along max-pool chains. */
struct GainFactor {
    Mat L;
    bool diagonal = false;
    int expand = 1;
    int dim() const { return expand * L.cols(); }
    Mat full() const; // materializes the Kronecker expansion
};

struct GainVar {
    Var L;
    bool diagonal = false;
    int expand = 1;
    int base_dim = 0;
    int dim() const { return expand * base_dim; }
};

GainVar gain_constant(Tape &t, const GainFactor &g);
/** Consume m pixels/blocks at once: I_m (x) the existing factor. */
GainFactor gain_expand(const GainFactor &g, int m);
/** Materialize kron(I_m, L) on the tape via a gather. */
Var kron_identity_var(Tape &t, Var l, int m);

// ---- layer geometry -----------------------------------------------------

enum class LayerKind { Fc, LastFc, Conv1d, Conv2d };
enum class PoolKind { None, Avg, Max };

struct PoolDesc {
    PoolKind kind = PoolKind::None;
    int k1 = 1, k2 = 1, s1 = 1, s2 = 1;
    double rho_p = 1.0; // operator gain of the pooling map
};

struct LayerGeom {
    LayerKind kind = LayerKind::Fc;
    int c_in = 0, c_out = 0; // channel counts (fc: full input/output dims)
    int r1 = 0, r2 = 0;      // conv orders (conv1d uses r1)
    bool maxpool = false;    // fused max-pool variant of the parameterization
    PoolDesc pool;
    int pre_expand = 1; // input metric is kron(I_pre_expand, X_prev)
    double eps = 1e-3;  // Gramian / diagonal-dominance epsilon

    int n1() const; // conv state dims
    int n2() const;
};

/** Free parameter names and shapes for a geometry, in a fixed order. */
std::vector<std::pair<std::string, std::pair<int, int>>> free_param_shapes(const LayerGeom &g);

/** Fresh parameters: small normal mats, zero logs, unit delta/omega. */
std::map<std::string, Mat> init_params(const LayerGeom &g, Rng &rng, double weight_std = 0.02);

// ---- materialization ----------------------------------------------------

/** Tape-side results of running a parameterization. */
struct LayerVars {
    LayerGeom geom;
    Var W;                  // fc / last fc
    Var A12, B1, C2, D;     // conv2d realization blocks (A12/B1 free, C2/D built)
    Var C1d, D1d;           // conv1d C and D
    Var bias;               // 1 x c_out
    Var lambda;             // c_out x 1 multiplier diagonal (invalid for last fc)
    Var T1, T2;             // Gramian sums; P = blkdiag(T1,T2)^{-1}
    GainVar out;            // emitted gain factor
};

/**
 * Runs the direct parameterization for the geometry. phi must contain
 * exactly the names from free_param_shapes. prev is the incoming gain
 * factor; q_out is the Cholesky factor of Q and is only read by LastFc.
 */
LayerVars parameterize(Tape &t, const LayerGeom &g, const std::map<std::string, Var> &phi,
                       const GainVar &prev, const Mat *q_factor = nullptr);

/** The layer's dissipativity LMI assembled on the tape (small sizes only). */
Var assemble_lmi(Tape &t, const LayerVars &lv, const GainVar &prev, const Mat *q_factor = nullptr);

/** Plain-value snapshot of a parameterized layer. */
struct MaterializedLayer {
    LayerGeom geom;
    Mat W;             // fc / last fc
    ss::Kernel1D k1;   // conv1d
    ss::Kernel2D k2;   // conv2d
    Mat bias;          // 1 x c_out
    std::vector<double> lambda;
    Mat P1, P2;        // state multipliers (inverses of the Gramian sums)
    GainFactor out;
};

MaterializedLayer extract(const Tape &t, const LayerVars &lv);

/** Convenience plain-value path: runs a throwaway tape and extracts. */
MaterializedLayer materialize(const LayerGeom &g, const std::map<std::string, Mat> &phi,
                              const GainFactor &prev, const Mat *q_factor = nullptr);

/** Conv tap list in im2col order (tau = t1*(r2+1)+t2) as tape vars. */
std::vector<Var> tap_vars(Tape &t, const LayerVars &lv);

// Exposed for tests: the Gramian-based state metric construction.
Var gramian_1d(Tape &t, int c_in, int c_out, int r, Var h, Var x_prev, double eps);
struct Gramian2D {
    Var t1, t2;
};
Gramian2D gramian_2d(Tape &t, const LayerGeom &g, Var a12, Var b1, Var h1, Var h2, Var x_prev);
Var build_f(Tape &t, Var p, Var a, Var b, Var x_prev);
/** Diagonally dominant gamma: eps + delta^2 + (|S| q) / (2 q). */
Var gamma_dd(Tape &t, Var s, Var delta, Var q, double eps);

} // namespace lipkernel::layers
