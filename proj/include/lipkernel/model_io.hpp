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

#ifndef LIPKERNEL_MODEL_IO_HPP
#define LIPKERNEL_MODEL_IO_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lipkernel/linalg.hpp"
#include "lipkernel/nn.hpp"

namespace lipkernel::io {

using la::Mat;

/**
 * On-disk container: magic "LPKN", little-endian u32 version, a JSON text
 * header (flavor, network metadata, tensor manifest with byte offsets), the
 * payload as little-endian doubles in manifest order, and a trailing CRC32
 * over the payload bytes. Also used for bare tensor files (metric factors).
 */
struct TensorEntry {
    std::string name;
    int rows = 0, cols = 0;
    std::uint64_t offset = 0; // byte offset into the payload
};

struct ModelFile {
    std::uint32_t version = 1;
    std::string flavor; // "phi", "kernel" or "tensors"
    std::string arch;
    double rho = 0.0;
    std::string act = "relu";
    int in_h = 1, in_w = 1, in_c = 0;
    std::vector<TensorEntry> manifest;
    std::vector<double> payload;

    void add(const std::string &name, const Mat &m);
    bool has(const std::string &name) const;
    Mat get(const std::string &name) const;
};

void save_model(const std::string &path, const ModelFile &mf);
ModelFile load_model(const std::string &path);

/** Bare tensor container, e.g. a metric factor supplied to --q-file. */
ModelFile tensor_file(const std::vector<std::pair<std::string, Mat>> &tensors);

// ---- network conversions -------------------------------------------------

ModelFile to_model(const nn::PhiNetwork &net);
ModelFile to_model(const nn::PlainNetwork &net);

nn::PhiNetwork phi_from_model(const ModelFile &mf);
nn::PlainNetwork plain_from_model(const ModelFile &mf);

std::uint32_t crc32(const std::uint8_t *data, std::size_t len);

} // namespace lipkernel::io

#endif
