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

#ifndef LIPKERNEL_DATA_HPP
#define LIPKERNEL_DATA_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lipkernel/linalg.hpp"

namespace lipkernel::data {

using la::Mat;

/**
 * Immutable sample collection. Rows of x are flattened images (pixel-major,
 * channel-minor) or plain feature vectors. Classification sets use labels,
 * regression sets use y; exactly one of the two is populated.
 */
struct Dataset {
    Mat x;
    Mat y;
    std::vector<int> labels;
    int h = 1, w = 1, c = 1;
    int count() const { return x.rows(); }
    int dim() const { return x.cols(); }
    bool classification() const { return !labels.empty(); }
};

// ---- IDX files (big-endian, unsigned byte payload) ----------------------

void write_idx_images(const std::string &path, const std::vector<std::vector<std::uint8_t>> &imgs,
                      int rows, int cols);
void write_idx_labels(const std::string &path, const std::vector<std::uint8_t> &labels);

std::vector<std::vector<std::uint8_t>> read_idx_images(const std::string &path, int &rows,
                                                       int &cols);
std::vector<std::uint8_t> read_idx_labels(const std::string &path);

/**
 * Load an image/label file pair. Pixels are scaled to [0,1]; 28x28 images are
 * zero-padded to 32x32 (two pixels per side).
 */
Dataset load_mnist_idx(const std::string &images_path, const std::string &labels_path);

/** Standard file names under dir: train-images-idx3-ubyte etc. */
bool mnist_files_present(const std::string &dir);
Dataset mnist_train(const std::string &dir);
Dataset mnist_test(const std::string &dir);

/** LIPKERNEL_MNIST_DIR when set, otherwise ./data/mnist. */
std::string default_mnist_dir();

// ---- synthetic digit corpus ---------------------------------------------

/** Deterministic glyph renderings, 28x28 raw bytes plus labels. */
std::pair<std::vector<std::vector<std::uint8_t>>, std::vector<std::uint8_t>>
synthetic_raw(int n, std::uint64_t seed);

/** The raw corpus pushed through the standard scale + pad pipeline. */
Dataset synthetic_mnist(int n, std::uint64_t seed);

// ---- regression toy ------------------------------------------------------

/** x uniform in [-pi/2, pi/2], y = cos(x). */
Dataset cosine_dataset(int n, std::uint64_t seed);

// ---- batching ------------------------------------------------------------

struct Batch {
    Mat x;
    Mat y;
    std::vector<int> labels;
};

/** Seeded shuffle split into index lists; the last partial batch is kept. */
std::vector<std::vector<int>> batches(const Dataset &ds, int batch_size, std::uint64_t seed);

Batch take(const Dataset &ds, const std::vector<int> &idx);

/** Contiguous row slice [start, start+n). */
Dataset subset(const Dataset &ds, int start, int n);

} // namespace lipkernel::data

#endif
