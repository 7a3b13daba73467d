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

#ifndef LIPKERNEL_TRAIN_HPP
#define LIPKERNEL_TRAIN_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lipkernel/autodiff.hpp"
#include "lipkernel/data.hpp"
#include "lipkernel/nn.hpp"

namespace lipkernel::train {

using ad::Tape;
using ad::Var;
using la::Mat;

enum class LossKind { CrossEntropy, Mse };

struct TrainConfig {
    std::string arch;
    double rho = 1.0;
    Mat l_q; // optional output metric factor
    Mat l_0; // optional per-channel input metric factor
    nn::Activation act = nn::Activation::Relu;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 1;
    int batch_size = 64;
    std::uint64_t seed = 1;
    double eps_gramian = 1e-3;
    double weight_std = 0.02;
    LossKind loss = LossKind::CrossEntropy;
};

struct MetricsRow {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
};

std::string metrics_csv(const std::vector<MetricsRow> &rows); // epoch,split,loss,accuracy

struct TrainResult {
    nn::PhiNetwork net;
    std::vector<MetricsRow> metrics;
};

// ---- losses --------------------------------------------------------------

/** Mean cross-entropy of logits against integer labels, shift-stabilized. */
Var cross_entropy(Tape &t, Var logits, const std::vector<int> &labels);

/** Mean squared error over all output entries. */
Var mse(Tape &t, Var pred, const Mat &targets);

double accuracy(const Mat &logits, const std::vector<int> &labels);

// ---- optimizer -----------------------------------------------------------

struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<std::map<std::string, Mat>> m, v;
    void step(std::vector<std::map<std::string, Mat>> &params,
              const std::vector<std::map<std::string, Mat>> &grads);
};

// ---- training loops ------------------------------------------------------

/**
 * First-order training of the direct parameterization: each step lifts the
 * free parameters onto a tape, materializes the layers, runs the batch and
 * backpropagates into the free parameters. Deterministic per config.
 */
TrainResult train(const TrainConfig &cfg, const data::Dataset &train_ds,
                  const data::Dataset *eval_ds = nullptr);

/** Per-epoch evaluation of an exported network. */
MetricsRow evaluate(const nn::PlainNetwork &net, const data::Dataset &ds, LossKind loss,
                    int epoch, const std::string &split, int chunk = 256);

/**
 * Unconstrained dense baseline with per-layer spectral projection: after each
 * optimizer step every weight is rescaled to sigma_max <= rho^(1/layers).
 * Dense architectures only.
 */
nn::PlainNetwork spectral_baseline_train(const TrainConfig &cfg, const data::Dataset &train_ds,
                                         std::vector<MetricsRow> *metrics = nullptr);

// ---- adversarial evaluation ---------------------------------------------

/**
 * l2 projected gradient ascent on the classification loss around each sample.
 * step_size <= 0 selects the 2.5*eps/steps default.
 */
Mat pgd_attack(const nn::PlainNetwork &net, const Mat &x, const std::vector<int> &labels,
               double eps, int steps = 10, double step_size = 0.0);

} // namespace lipkernel::train

#endif
