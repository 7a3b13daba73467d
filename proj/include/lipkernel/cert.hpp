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

#ifndef LIPKERNEL_CERT_HPP
#define LIPKERNEL_CERT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lipkernel/layers.hpp"
#include "lipkernel/linalg.hpp"
#include "lipkernel/nn.hpp"
#include "lipkernel/statespace.hpp"

namespace lipkernel::cert {

using la::Mat;

struct LayerReport {
    std::string name;
    int dim = 0;
    double min_eig = 0.0;
    bool ok = false;
};

struct Certificate {
    double rho = 0.0; // 0 when the input metric is a general factor
    bool has_q = false;
    bool valid = false;
    double slack = 0.0; // worst per-layer min eigenvalue
    std::vector<LayerReport> layers;
    std::string report() const;   // human-readable table
    std::string kv_block() const; // machine-readable key=value lines
};

// ---- standalone LMI assembly (plain matrices) ---------------------------

/** Dense-layer block matrix; expand > 1 replaces X_prev by its block-diagonal copies. */
Mat lmi_fc(const Mat &w, const std::vector<double> &lambda, const Mat &x_prev, const Mat &x,
           int expand = 1);

/** Conv-layer block matrix around a state-space realization. */
Mat lmi_conv(const ss::Roesser1D &rz, const Mat &p, const std::vector<double> &lambda,
             const Mat &x_prev, const Mat &x, double rho_p = 1.0);
Mat lmi_conv(const ss::Roesser2D &rz, const Mat &p, const std::vector<double> &lambda,
             const Mat &x_prev, const Mat &x, double rho_p = 1.0);

/** Output-layer condition X_prev - W^T Q W. */
Mat lmi_last(const Mat &w, const Mat &x_prev, const Mat &q);

// ---- end-to-end certification -------------------------------------------

/**
 * Check every layer's block matrix with the layer's own multipliers; the
 * verdict telescopes into a whole-network gain bound from the input factor
 * l0 to the output factor lq (empty = identity). tol scales the acceptance
 * floor -tol*max(1, norm(M)).
 */
Certificate certify_network(const std::vector<layers::MaterializedLayer> &layer_list,
                            const Mat &l0, const Mat &lq, double tol = 1e-8);

/** Convenience wrapper reading rho / metric factors from the network spec. */
Certificate certify(const nn::PlainNetwork &net, double tol = 1e-8);

// ---- empirical bounds and robustness metrics ----------------------------

/**
 * Lower bound on the network gain: Jacobian power iteration at random
 * inputs, refined by gradient ascent on the finite difference ratio.
 */
double empirical_lipschitz(const nn::PlainNetwork &net, int trials = 8, int iters = 30,
                           std::uint64_t seed = 1);

/** Per-sample classification margin: true logit minus best competitor. */
std::vector<double> margins(const Mat &logits, const std::vector<int> &labels);

/**
 * Fraction of samples whose margin exceeds sqrt(2)*rho*eps (and is positive),
 * i.e. whose label cannot change under any perturbation of norm <= eps.
 */
double certified_accuracy(const std::vector<double> &margin_list, double rho, double eps);

/** Lipschitz gain of a pooling stage on a given input grid. */
double pooling_gain(layers::PoolKind kind, int k1, int k2, int s1, int s2, int in_h, int in_w);

} // namespace lipkernel::cert

#endif
