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

#include "lipkernel/data.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "lipkernel/errors.hpp"
#include "lipkernel/rng.hpp"

namespace lipkernel::data {

namespace {

const std::uint32_t kImageMagic = 0x00000803u;
const std::uint32_t kLabelMagic = 0x00000801u;

void put_u32_be(std::ostream &os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 8), static_cast<char>(v)};
    os.write(b, 4);
}

std::uint32_t get_u32_be(std::istream &is, const std::string &path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char *>(b), 4))
        throw TruncatedFile(path + ": file ends inside the header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_reader(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw TruncatedFile(path + ": cannot open");
    return is;
}

} // namespace

void write_idx_images(const std::string &path, const std::vector<std::vector<std::uint8_t>> &imgs,
                      int rows, int cols) {
    if (rows < 1 || cols < 1)
        throw InvalidParameter("idx writer: image shape must be positive");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw TruncatedFile(path + ": cannot open for writing");
    put_u32_be(os, kImageMagic);
    put_u32_be(os, static_cast<std::uint32_t>(imgs.size()));
    put_u32_be(os, static_cast<std::uint32_t>(rows));
    put_u32_be(os, static_cast<std::uint32_t>(cols));
    size_t need = static_cast<size_t>(rows) * cols;
    for (const auto &img : imgs) {
        if (img.size() != need)
            throw ShapeMismatch("idx writer: image byte count mismatch");
        os.write(reinterpret_cast<const char *>(img.data()), static_cast<std::streamsize>(need));
    }
    if (!os)
        throw TruncatedFile(path + ": short write");
}

void write_idx_labels(const std::string &path, const std::vector<std::uint8_t> &labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw TruncatedFile(path + ": cannot open for writing");
    put_u32_be(os, kLabelMagic);
    put_u32_be(os, static_cast<std::uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char *>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
    if (!os)
        throw TruncatedFile(path + ": short write");
}

std::vector<std::vector<std::uint8_t>> read_idx_images(const std::string &path, int &rows,
                                                       int &cols) {
    std::ifstream is = open_reader(path);
    std::uint32_t magic = get_u32_be(is, path);
    if (magic != kImageMagic)
        throw BadMagic(path + ": expected an IDX image file");
    std::uint32_t n = get_u32_be(is, path);
    rows = static_cast<int>(get_u32_be(is, path));
    cols = static_cast<int>(get_u32_be(is, path));
    if (rows < 1 || cols < 1)
        throw BadMagic(path + ": degenerate image dimensions");
    size_t need = static_cast<size_t>(rows) * cols;
    std::vector<std::vector<std::uint8_t>> out(n, std::vector<std::uint8_t>(need));
    for (auto &img : out)
        if (!is.read(reinterpret_cast<char *>(img.data()), static_cast<std::streamsize>(need)))
            throw TruncatedFile(path + ": file ends inside the pixel data");
    return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::string &path) {
    std::ifstream is = open_reader(path);
    std::uint32_t magic = get_u32_be(is, path);
    if (magic != kLabelMagic)
        throw BadMagic(path + ": expected an IDX label file");
    std::uint32_t n = get_u32_be(is, path);
    std::vector<std::uint8_t> out(n);
    if (n > 0 &&
        !is.read(reinterpret_cast<char *>(out.data()), static_cast<std::streamsize>(n)))
        throw TruncatedFile(path + ": file ends inside the label data");
    return out;
}

namespace {

Dataset dataset_from_raw(const std::vector<std::vector<std::uint8_t>> &imgs,
                         const std::vector<std::uint8_t> &labels, int rows, int cols) {
    if (imgs.size() != labels.size())
        throw CountMismatch("image count " + std::to_string(imgs.size()) +
                            " does not match label count " + std::to_string(labels.size()));
    int pad = (rows == 28 && cols == 28) ? 2 : 0;
    int h = rows + 2 * pad, w = cols + 2 * pad;
    Dataset ds;
    ds.h = h;
    ds.w = w;
    ds.c = 1;
    ds.x = Mat(static_cast<int>(imgs.size()), h * w);
    ds.labels.reserve(labels.size());
    for (size_t i = 0; i < imgs.size(); ++i) {
        for (int r = 0; r < rows; ++r)
            for (int col = 0; col < cols; ++col)
                ds.x(static_cast<int>(i), (r + pad) * w + col + pad) =
                    imgs[i][static_cast<size_t>(r) * cols + col] / 255.0;
        ds.labels.push_back(labels[i]);
    }
    return ds;
}

} // namespace

Dataset load_mnist_idx(const std::string &images_path, const std::string &labels_path) {
    int rows = 0, cols = 0;
    auto imgs = read_idx_images(images_path, rows, cols);
    auto labels = read_idx_labels(labels_path);
    return dataset_from_raw(imgs, labels, rows, cols);
}

namespace {

bool file_exists(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    return static_cast<bool>(is);
}

} // namespace

bool mnist_files_present(const std::string &dir) {
    return file_exists(dir + "/train-images-idx3-ubyte") &&
           file_exists(dir + "/train-labels-idx1-ubyte") &&
           file_exists(dir + "/t10k-images-idx3-ubyte") &&
           file_exists(dir + "/t10k-labels-idx1-ubyte");
}

Dataset mnist_train(const std::string &dir) {
    return load_mnist_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
}

Dataset mnist_test(const std::string &dir) {
    return load_mnist_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
}

std::string default_mnist_dir() {
    const char *env = std::getenv("LIPKERNEL_MNIST_DIR");
    return env && *env ? env : "./data/mnist";
}

// ---- synthetic digit corpus ---------------------------------------------

namespace {

// classic 5x7 column-encoded digit glyphs, bit k of a byte = row k
const unsigned char kFont[10][5] = {
    {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
    {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4B, 0x31},
    {0x18, 0x14, 0x12, 0x7F, 0x10}, {0x27, 0x45, 0x45, 0x45, 0x39},
    {0x3C, 0x4A, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1E},
};

} // namespace

std::pair<std::vector<std::vector<std::uint8_t>>, std::vector<std::uint8_t>>
synthetic_raw(int n, std::uint64_t seed) {
    if (n < 0)
        throw InvalidParameter("synthetic corpus size must be nonnegative");
    Rng rng(seed);
    std::vector<std::vector<std::uint8_t>> imgs;
    std::vector<std::uint8_t> labels;
    imgs.reserve(static_cast<size_t>(n));
    labels.reserve(static_cast<size_t>(n));
    const int scale = 3; // glyphs render as 15x21 blocks inside the 28x28 frame
    for (int i = 0; i < n; ++i) {
        int digit = static_cast<int>(rng.uniform_int(10));
        std::vector<std::uint8_t> img(28 * 28, 0);
        int x0 = 6 + static_cast<int>(rng.uniform_int(5)) - 2;
        int y0 = 3 + static_cast<int>(rng.uniform_int(5)) - 2;
        int ink = 170 + static_cast<int>(rng.uniform_int(86));
        for (int col = 0; col < 5; ++col)
            for (int row = 0; row < 7; ++row) {
                if (!((kFont[digit][col] >> row) & 1))
                    continue;
                for (int dy = 0; dy < scale; ++dy)
                    for (int dx = 0; dx < scale; ++dx) {
                        int y = y0 + row * scale + dy;
                        int x = x0 + col * scale + dx;
                        if (y >= 0 && y < 28 && x >= 0 && x < 28)
                            img[static_cast<size_t>(y) * 28 + x] =
                                static_cast<std::uint8_t>(ink);
                    }
            }
        // faint background speckle so the classifier cannot key on exact zeros
        for (int s = 0; s < 12; ++s) {
            size_t p = static_cast<size_t>(rng.uniform_int(28 * 28));
            if (img[p] == 0)
                img[p] = static_cast<std::uint8_t>(rng.uniform_int(24));
        }
        imgs.push_back(std::move(img));
        labels.push_back(static_cast<std::uint8_t>(digit));
    }
    return {std::move(imgs), std::move(labels)};
}

Dataset synthetic_mnist(int n, std::uint64_t seed) {
    auto [imgs, labels] = synthetic_raw(n, seed);
    return dataset_from_raw(imgs, labels, 28, 28);
}

// ---- regression toy ------------------------------------------------------

Dataset cosine_dataset(int n, std::uint64_t seed) {
    if (n < 1)
        throw InvalidParameter("cosine dataset needs at least one sample");
    Rng rng(seed);
    Dataset ds;
    ds.x = Mat(n, 1);
    ds.y = Mat(n, 1);
    for (int i = 0; i < n; ++i) {
        double x = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
        ds.x(i, 0) = x;
        ds.y(i, 0) = std::cos(x);
    }
    return ds;
}

// ---- batching ------------------------------------------------------------

std::vector<std::vector<int>> batches(const Dataset &ds, int batch_size, std::uint64_t seed) {
    if (batch_size < 1)
        throw InvalidParameter("batch size must be at least 1");
    if (ds.count() < 1)
        throw TooFewRows("cannot batch an empty dataset");
    std::vector<int> order(static_cast<size_t>(ds.count()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<int>> out;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
    }
    return out;
}

Batch take(const Dataset &ds, const std::vector<int> &idx) {
    Batch b;
    b.x = Mat(static_cast<int>(idx.size()), ds.dim());
    if (ds.y.rows() > 0)
        b.y = Mat(static_cast<int>(idx.size()), ds.y.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        int r = idx[i];
        if (r < 0 || r >= ds.count())
            throw InvalidParameter("batch index out of range");
        for (int j = 0; j < ds.dim(); ++j)
            b.x(static_cast<int>(i), j) = ds.x(r, j);
        for (int j = 0; j < ds.y.cols(); ++j)
            b.y(static_cast<int>(i), j) = ds.y(r, j);
        if (!ds.labels.empty())
            b.labels.push_back(ds.labels[static_cast<size_t>(r)]);
    }
    return b;
}

Dataset subset(const Dataset &ds, int start, int n) {
    if (start < 0 || n < 0 || start + n > ds.count())
        throw InvalidParameter("subset range out of bounds");
    Dataset out;
    out.h = ds.h;
    out.w = ds.w;
    out.c = ds.c;
    out.x = Mat(n, ds.dim());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < ds.dim(); ++j)
            out.x(i, j) = ds.x(start + i, j);
    if (ds.y.rows() > 0) {
        out.y = Mat(n, ds.y.cols());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < ds.y.cols(); ++j)
                out.y(i, j) = ds.y(start + i, j);
    }
    if (!ds.labels.empty())
        out.labels.assign(ds.labels.begin() + start, ds.labels.begin() + start + n);
    return out;
}

} // namespace lipkernel::data
