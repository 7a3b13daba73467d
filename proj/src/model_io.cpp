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

#include "lipkernel/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lipkernel/arch.hpp"
#include "lipkernel/errors.hpp"
#include "lipkernel/layers.hpp"

namespace lipkernel::io {

namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'L', 'P', 'K', 'N'};

using json = nlohmann::json;

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k)
            c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

void put_u32_le(std::vector<std::uint8_t> &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f64_le(std::vector<std::uint8_t> &out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const std::uint8_t *p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

double get_f64_le(const std::uint8_t *p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string act_name(nn::Activation a) {
    return a == nn::Activation::Relu ? "relu" : "tanh";
}

nn::Activation act_from_name(const std::string &s) {
    if (s == "relu")
        return nn::Activation::Relu;
    if (s == "tanh")
        return nn::Activation::Tanh;
    throw BadMagic("unknown activation in model header: " + s);
}

void fill_header(ModelFile &mf, const nn::NetSpec &spec, const char *flavor) {
    mf.flavor = flavor;
    mf.arch = spec.arch;
    mf.rho = spec.rho;
    mf.act = act_name(spec.act);
    mf.in_h = spec.in_h;
    mf.in_w = spec.in_w;
    mf.in_c = spec.in_c;
}

double header_eps(const ModelFile &mf) {
    // stashed as a one-element tensor so the header stays pure metadata
    return mf.has("meta.eps") ? mf.get("meta.eps")(0, 0) : 1e-3;
}

nn::NetSpec rebuild_spec(const ModelFile &mf) {
    la::Mat lq;
    if (mf.has("meta.l_q"))
        lq = mf.get("meta.l_q");
    nn::NetSpec spec =
        arch::build_netspec(arch::parse_arch(mf.arch), mf.in_h, mf.in_w, mf.in_c, mf.rho,
                            act_from_name(mf.act), lq.rows() > 0 ? &lq : nullptr,
                            header_eps(mf));
    if (mf.has("meta.l_0")) {
        spec.l_0 = mf.get("meta.l_0");
        nn::validate_spec(spec);
    }
    return spec;
}

void add_spec_tensors(ModelFile &mf, const nn::NetSpec &spec) {
    mf.add("meta.eps", Mat(1, 1, {spec.stages.empty() ? 1e-3 : spec.stages[0].geom.eps}));
    if (spec.l_q.rows() > 0)
        mf.add("meta.l_q", spec.l_q);
    if (spec.l_0.rows() > 0)
        mf.add("meta.l_0", spec.l_0);
}

Mat fetch(const ModelFile &mf, const std::string &name, int rows, int cols) {
    if (!mf.has(name))
        throw CountMismatch("model file lacks tensor " + name);
    Mat m = mf.get(name);
    if (m.rows() != rows || m.cols() != cols)
        throw ShapeMismatch("tensor " + name + " is " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                            "x" + std::to_string(cols));
    return m;
}

} // namespace

std::uint32_t crc32(const std::uint8_t *data, std::size_t len) {
    static const std::array<std::uint32_t, 256> table = make_crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void ModelFile::add(const std::string &name, const Mat &m) {
    if (m.rows() <= 0 || m.cols() <= 0)
        throw ShapeMismatch("cannot store empty tensor " + name);
    if (has(name))
        throw InvalidParameter("duplicate tensor name " + name);
    TensorEntry e;
    e.name = name;
    e.rows = m.rows();
    e.cols = m.cols();
    e.offset = payload.size() * 8;
    manifest.push_back(e);
    for (int k = 0; k < m.size(); ++k)
        payload.push_back(m.at(k));
}

bool ModelFile::has(const std::string &name) const {
    for (const auto &e : manifest)
        if (e.name == name)
            return true;
    return false;
}

Mat ModelFile::get(const std::string &name) const {
    for (const auto &e : manifest) {
        if (e.name != name)
            continue;
        Mat m(e.rows, e.cols);
        std::size_t base = e.offset / 8;
        if (base + static_cast<std::size_t>(m.size()) > payload.size())
            throw TruncatedFile("tensor " + name + " reaches past the payload");
        for (int k = 0; k < m.size(); ++k)
            m.at(k) = payload[base + k];
        return m;
    }
    throw CountMismatch("model file lacks tensor " + name);
}

void save_model(const std::string &path, const ModelFile &mf) {
    std::uint64_t expect = 0;
    for (const auto &e : mf.manifest) {
        if (e.offset != expect * 8)
            throw InvalidSpec("tensor " + e.name + " breaks manifest contiguity");
        expect += static_cast<std::uint64_t>(e.rows) * e.cols;
    }
    if (expect != mf.payload.size())
        throw InvalidSpec("payload length disagrees with the tensor manifest");

    json header;
    header["flavor"] = mf.flavor;
    header["arch"] = mf.arch;
    header["rho"] = mf.rho;
    header["act"] = mf.act;
    header["input"] = {mf.in_h, mf.in_w, mf.in_c};
    json tensors = json::array();
    for (const auto &e : mf.manifest)
        tensors.push_back({{"name", e.name}, {"shape", {e.rows, e.cols}}, {"offset", e.offset}});
    header["tensors"] = tensors;
    std::string text = header.dump();

    std::vector<std::uint8_t> bytes;
    bytes.reserve(16 + text.size() + mf.payload.size() * 8);
    bytes.insert(bytes.end(), kMagic, kMagic + 4);
    put_u32_le(bytes, kFormatVersion);
    put_u32_le(bytes, static_cast<std::uint32_t>(text.size()));
    bytes.insert(bytes.end(), text.begin(), text.end());
    std::size_t payload_at = bytes.size();
    for (double v : mf.payload)
        put_f64_le(bytes, v);
    put_u32_le(bytes, crc32(bytes.data() + payload_at, mf.payload.size() * 8));

    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw TruncatedFile(path + ": cannot open for writing");
    os.write(reinterpret_cast<const char *>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os)
        throw TruncatedFile(path + ": short write");
}

ModelFile load_model(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw TruncatedFile(path + ": cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 12)
        throw TruncatedFile(path + ": file ends inside the fixed header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw BadMagic(path + ": not a model file");
    std::uint32_t version = get_u32_le(bytes.data() + 4);
    if (version != kFormatVersion)
        throw VersionMismatch(path + ": format version " + std::to_string(version) +
                              ", expected " + std::to_string(kFormatVersion));
    std::uint32_t hlen = get_u32_le(bytes.data() + 8);
    if (bytes.size() < 12ull + hlen)
        throw TruncatedFile(path + ": file ends inside the text header");

    json header;
    try {
        header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
    } catch (const json::exception &) {
        throw BadMagic(path + ": model header is not valid JSON");
    }

    ModelFile mf;
    mf.version = version;
    try {
        mf.flavor = header.at("flavor").get<std::string>();
        mf.arch = header.at("arch").get<std::string>();
        mf.rho = header.at("rho").get<double>();
        mf.act = header.at("act").get<std::string>();
        mf.in_h = header.at("input").at(0).get<int>();
        mf.in_w = header.at("input").at(1).get<int>();
        mf.in_c = header.at("input").at(2).get<int>();
        for (const auto &t : header.at("tensors")) {
            TensorEntry e;
            e.name = t.at("name").get<std::string>();
            e.rows = t.at("shape").at(0).get<int>();
            e.cols = t.at("shape").at(1).get<int>();
            e.offset = t.at("offset").get<std::uint64_t>();
            mf.manifest.push_back(e);
        }
    } catch (const json::exception &) {
        throw BadMagic(path + ": model header is missing required fields");
    }

    std::uint64_t count = 0;
    for (const auto &e : mf.manifest) {
        if (e.rows <= 0 || e.cols <= 0)
            throw BadMagic(path + ": tensor " + e.name + " has a degenerate shape");
        if (e.offset != count * 8)
            throw BadMagic(path + ": tensor " + e.name + " breaks manifest contiguity");
        count += static_cast<std::uint64_t>(e.rows) * e.cols;
    }
    std::size_t need = 12ull + hlen + count * 8 + 4;
    if (bytes.size() < need)
        throw TruncatedFile(path + ": file ends inside the payload");
    if (bytes.size() > need)
        throw BadMagic(path + ": trailing bytes after the checksum");

    const std::uint8_t *pay = bytes.data() + 12 + hlen;
    std::uint32_t want = get_u32_le(pay + count * 8);
    std::uint32_t got = crc32(pay, count * 8);
    if (want != got)
        throw ChecksumMismatch(path + ": payload checksum mismatch");

    mf.payload.resize(count);
    for (std::uint64_t k = 0; k < count; ++k)
        mf.payload[k] = get_f64_le(pay + k * 8);
    return mf;
}

ModelFile tensor_file(const std::vector<std::pair<std::string, Mat>> &tensors) {
    ModelFile mf;
    mf.flavor = "tensors";
    for (const auto &[name, m] : tensors)
        mf.add(name, m);
    return mf;
}

ModelFile to_model(const nn::PhiNetwork &net) {
    ModelFile mf;
    fill_header(mf, net.spec, "phi");
    add_spec_tensors(mf, net.spec);
    for (std::size_t i = 0; i < net.spec.stages.size(); ++i) {
        std::string prefix = "layer" + std::to_string(i) + ".";
        for (const auto &[name, shape] : layers::free_param_shapes(net.spec.stages[i].geom))
            if (shape.first > 0 && shape.second > 0) // order-0 convs have empty state params
                mf.add(prefix + name, net.params[i].at(name));
    }
    return mf;
}

nn::PhiNetwork phi_from_model(const ModelFile &mf) {
    if (mf.flavor != "phi")
        throw InvalidSpec("expected a phi-form model, found flavor " + mf.flavor);
    nn::PhiNetwork net;
    net.spec = rebuild_spec(mf);
    for (std::size_t i = 0; i < net.spec.stages.size(); ++i) {
        std::string prefix = "layer" + std::to_string(i) + ".";
        std::map<std::string, Mat> p;
        for (const auto &[name, shape] : layers::free_param_shapes(net.spec.stages[i].geom))
            p.emplace(name, shape.first > 0 && shape.second > 0
                                ? fetch(mf, prefix + name, shape.first, shape.second)
                                : Mat(shape.first, shape.second));
        net.params.push_back(std::move(p));
    }
    return net;
}

ModelFile to_model(const nn::PlainNetwork &net) {
    ModelFile mf;
    fill_header(mf, net.spec, "kernel");
    add_spec_tensors(mf, net.spec);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const layers::MaterializedLayer &m = net.layers[i];
        std::string prefix = "layer" + std::to_string(i) + ".";
        if (m.geom.kind == layers::LayerKind::Fc || m.geom.kind == layers::LayerKind::LastFc) {
            mf.add(prefix + "W", m.W);
        } else if (m.geom.kind == layers::LayerKind::Conv1d) {
            for (std::size_t t = 0; t < m.k1.taps.size(); ++t)
                mf.add(prefix + "tap" + std::to_string(t), m.k1.taps[t]);
        } else {
            for (std::size_t t = 0; t < m.k2.taps.size(); ++t)
                mf.add(prefix + "tap" + std::to_string(t), m.k2.taps[t]);
        }
        mf.add(prefix + "bias", m.bias);
        if (!m.lambda.empty()) {
            Mat lam(static_cast<int>(m.lambda.size()), 1);
            for (std::size_t k = 0; k < m.lambda.size(); ++k)
                lam(static_cast<int>(k), 0) = m.lambda[k];
            mf.add(prefix + "lambda", lam);
        }
        if (m.P1.rows() > 0)
            mf.add(prefix + "P1", m.P1);
        if (m.P2.rows() > 0)
            mf.add(prefix + "P2", m.P2);
        if (m.out.L.rows() > 0)
            mf.add(prefix + "outL", m.out.L);
    }
    return mf;
}

nn::PlainNetwork plain_from_model(const ModelFile &mf) {
    if (mf.flavor != "kernel")
        throw InvalidSpec("expected a kernel-form model, found flavor " + mf.flavor);
    nn::PlainNetwork net;
    net.spec = rebuild_spec(mf);
    for (std::size_t i = 0; i < net.spec.stages.size(); ++i) {
        const layers::LayerGeom &g = net.spec.stages[i].geom;
        std::string prefix = "layer" + std::to_string(i) + ".";
        layers::MaterializedLayer m;
        m.geom = g;
        if (g.kind == layers::LayerKind::Fc || g.kind == layers::LayerKind::LastFc) {
            m.W = fetch(mf, prefix + "W", g.c_out, g.c_in);
        } else if (g.kind == layers::LayerKind::Conv1d) {
            m.k1 = ss::Kernel1D::zeros(g.c_in, g.c_out, g.r1);
            for (std::size_t t = 0; t < m.k1.taps.size(); ++t)
                m.k1.taps[t] = fetch(mf, prefix + "tap" + std::to_string(t), g.c_out, g.c_in);
        } else {
            m.k2 = ss::Kernel2D::zeros(g.c_in, g.c_out, g.r1, g.r2);
            for (std::size_t t = 0; t < m.k2.taps.size(); ++t)
                m.k2.taps[t] = fetch(mf, prefix + "tap" + std::to_string(t), g.c_out, g.c_in);
        }
        m.bias = fetch(mf, prefix + "bias", 1, g.c_out);
        if (mf.has(prefix + "lambda")) {
            Mat lam = mf.get(prefix + "lambda");
            for (int k = 0; k < lam.rows(); ++k)
                m.lambda.push_back(lam(k, 0));
        }
        if (mf.has(prefix + "P1"))
            m.P1 = mf.get(prefix + "P1");
        if (mf.has(prefix + "P2"))
            m.P2 = mf.get(prefix + "P2");
        if (mf.has(prefix + "outL"))
            m.out = layers::GainFactor{mf.get(prefix + "outL"), g.maxpool, 1};
        net.layers.push_back(std::move(m));
    }
    return net;
}

} // namespace lipkernel::io
