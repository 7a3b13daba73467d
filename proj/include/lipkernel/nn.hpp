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

#ifndef LIPKERNEL_NN_HPP
#define LIPKERNEL_NN_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lipkernel/autodiff.hpp"
#include "lipkernel/layers.hpp"
#include "lipkernel/linalg.hpp"
#include "lipkernel/statespace.hpp"

namespace lipkernel::nn {

using ad::Tape;
using ad::Var;
using la::CMat;
using la::Mat;

enum class Activation { Relu, Tanh };

/**
 * One stage of a network: an optional space-to-depth or flatten reshape,
 * followed by a certified layer (conv or dense) with its pooling fused in.
 * in_h/in_w describe the spatial grid entering the stage, before the reshape;
 * vector-valued stages use in_h = in_w = 1.
 */
struct StageSpec {
    layers::LayerGeom geom;
    int s2d = 1;          // per-axis space-to-depth factor (stride folding)
    bool flatten = false; // reshape image to a row vector before this stage
    int in_h = 1, in_w = 1;
    int out_h() const;
    int out_w() const;
};

struct NetSpec {
    std::vector<StageSpec> stages;
    Activation act = Activation::Relu;
    double rho = 1.0;
    Mat l_q;              // upper factor of the output metric; empty = identity
    Mat l_0;              // upper factor of the per-channel input metric; empty = rho * I
    int in_h = 1, in_w = 1, in_c = 0;
    std::string arch;
    int in_dim() const { return in_h * in_w * in_c; }
    int out_dim() const;
};

/** Trainable form: the network spec plus every stage's free parameters. */
struct PhiNetwork {
    NetSpec spec;
    std::vector<std::map<std::string, Mat>> params;
};

/** Inference form: extracted kernels/weights plus certificate ingredients. */
struct PlainNetwork {
    NetSpec spec;
    std::vector<layers::MaterializedLayer> layers;
};

/** Validate the stage chain; throws ChainMismatch / InvalidGeometry. */
void validate_spec(const NetSpec &spec);

/** Starting gain factor of the chain: l_0 when set, otherwise rho * I. */
Mat input_factor(const NetSpec &spec);

PhiNetwork init_network(const NetSpec &spec, std::uint64_t seed, double weight_std = 0.02);

/** Materialize every stage once; deterministic. */
PlainNetwork export_plain(const PhiNetwork &net);

/** Batch-major forward. x is B x in_dim (pixel-major, channel-minor). */
Mat forward(const PlainNetwork &net, const Mat &x);

/** Same forward with an analytic directional derivative alongside. */
std::pair<Mat, Mat> forward_jvp(const PlainNetwork &net, const Mat &x, const Mat &v);

/** Tape image of a network for one training step. */
struct PhiTape {
    std::vector<std::map<std::string, Var>> params; // gradient targets
    std::vector<layers::LayerVars> layers;
};

PhiTape lift_network(Tape &t, const PhiNetwork &net);

/** Differentiable forward over the lifted layers. x_var is B x in_dim. */
Var phi_forward(Tape &t, const NetSpec &spec, const std::vector<layers::LayerVars> &layers,
                Var x_var, int batch);

/** Forward of an already-extracted network on a tape (weights constant). */
Var plain_forward_tape(Tape &t, const PlainNetwork &net, Var x_var, int batch);

// ---- Fourier-domain orthogonal baseline ---------------------------------

/**
 * Circular convolution layer parameterized per spatial frequency: the kernel
 * seed is transformed to the frequency domain and each frequency slice is
 * pushed through a complex Cayley map, giving an orthogonal (or column
 * orthonormal) matrix per frequency. Image side must be a power of two.
 */
struct FourierOrthLayer {
    int c_in = 0, c_out = 0;
    int n = 0;                  // image is n x n
    int k = 1;                  // kernel support k x k
    std::vector<Mat> seed;      // k*k taps, each max(c_in,c_out) square
};

FourierOrthLayer init_fourier_layer(int c_in, int c_out, int n, int k, std::uint64_t seed);

/** x is (B*n*n) x c_in; returns (B*n*n) x c_out. Parameter map is rerun per call. */
Mat fourier_orth_forward(const FourierOrthLayer &layer, const Mat &x, int batch);

// ---- inference benchmark ------------------------------------------------

enum class Engine { Kernel, Fourier };

struct BenchSpec {
    Engine engine = Engine::Kernel;
    int channels = 32;
    int image = 32;
    int kernel = 3;
    int batch = 1;
};

struct BenchResult {
    BenchSpec spec;
    double avg_ms = 0.0;
    double std_ms = 0.0;
    int reps = 0;
    std::string csv_row() const;
};

extern const char *kBenchCsvHeader; // engine,channels,image,kernel,avg_ms,std_ms,reps

BenchResult bench_inference(const BenchSpec &spec, int reps, int warmup);

} // namespace lipkernel::nn

#endif
