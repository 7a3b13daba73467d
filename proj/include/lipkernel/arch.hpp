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

#ifndef LIPKERNEL_ARCH_HPP
#define LIPKERNEL_ARCH_HPP

#include <string>
#include <vector>

#include "lipkernel/layers.hpp"
#include "lipkernel/nn.hpp"

namespace lipkernel::arch {

/**
 * Architecture strings are dot-separated tokens:
 *   c(channels,kernel,stride)   convolution
 *   p(av|max,window,stride)     pooling, must follow a convolution
 *   f(units)                    dense layer; the last one is the output
 */
struct Token {
    enum class Kind { Conv, Pool, Fc };
    Kind kind = Kind::Fc;
    int channels = 0, kernel = 0, stride = 0; // conv
    layers::PoolKind pool = layers::PoolKind::None;
    int window = 0, pool_stride = 0; // pool
    int units = 0;                   // fc
    bool operator==(const Token &o) const;
};

struct ArchSpec {
    std::vector<Token> tokens;
    bool operator==(const ArchSpec &o) const { return tokens == o.tokens; }
};

ArchSpec parse_arch(const std::string &text);
std::string render(const ArchSpec &spec);

/**
 * Expand an architecture over a concrete input geometry into the certified
 * stage chain: strided convolutions become space-to-depth plus a stride-1
 * convolution of reduced order, pool tokens fuse into the preceding conv,
 * and the final dense token becomes the output layer.
 */
nn::NetSpec build_netspec(const ArchSpec &spec, int in_h, int in_w, int in_c, double rho,
                          nn::Activation act, const la::Mat *l_q = nullptr, double eps = 1e-3);

} // namespace lipkernel::arch

#endif
