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

#include "lipkernel/arch.hpp"

#include <cctype>
#include <sstream>

#include "lipkernel/cert.hpp"
#include "lipkernel/errors.hpp"

namespace lipkernel::arch {

bool Token::operator==(const Token &o) const {
    if (kind != o.kind) return false;
    switch (kind) {
    case Kind::Conv: return channels == o.channels && kernel == o.kernel && stride == o.stride;
    case Kind::Pool: return pool == o.pool && window == o.window && pool_stride == o.pool_stride;
    case Kind::Fc: return units == o.units;
    }
    return false;
}

namespace {

struct Scanner {
    const std::string &s;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string &msg) const { throw ArchSyntaxError(msg, pos); }

    char peek() const { return pos < s.size() ? s[pos] : '\0'; }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos;
    }

    int integer() {
        if (!std::isdigit((unsigned char)peek())) fail("expected integer");
        long v = 0;
        while (std::isdigit((unsigned char)peek())) {
            v = v * 10 + (s[pos] - '0');
            if (v > 1000000) fail("integer out of range");
            ++pos;
        }
        return (int)v;
    }

    std::string word() {
        size_t start = pos;
        while (std::isalpha((unsigned char)peek())) ++pos;
        if (pos == start) fail("expected identifier");
        return s.substr(start, pos - start);
    }
};

} // namespace

ArchSpec parse_arch(const std::string &text) {
    Scanner sc{text};
    ArchSpec spec;
    if (text.empty()) sc.fail("empty architecture");
    for (;;) {
        size_t tok_pos = sc.pos;
        std::string head = sc.word();
        Token t;
        if (head == "c") {
            t.kind = Token::Kind::Conv;
            sc.expect('(');
            t.channels = sc.integer();
            sc.expect(',');
            t.kernel = sc.integer();
            sc.expect(',');
            t.stride = sc.integer();
            sc.expect(')');
            if (t.channels < 1 || t.kernel < 1 || t.stride < 1) {
                sc.pos = tok_pos;
                sc.fail("conv arguments must be positive");
            }
        } else if (head == "p") {
            t.kind = Token::Kind::Pool;
            sc.expect('(');
            size_t kind_pos = sc.pos;
            std::string kind = sc.word();
            if (kind == "av") t.pool = layers::PoolKind::Avg;
            else if (kind == "max") t.pool = layers::PoolKind::Max;
            else {
                sc.pos = kind_pos;
                sc.fail("pool kind must be 'av' or 'max'");
            }
            sc.expect(',');
            t.window = sc.integer();
            sc.expect(',');
            t.pool_stride = sc.integer();
            sc.expect(')');
            if (t.window < 1 || t.pool_stride < 1) {
                sc.pos = tok_pos;
                sc.fail("pool arguments must be positive");
            }
        } else if (head == "f") {
            t.kind = Token::Kind::Fc;
            sc.expect('(');
            t.units = sc.integer();
            sc.expect(')');
            if (t.units < 1) {
                sc.pos = tok_pos;
                sc.fail("fc units must be positive");
            }
        } else {
            sc.pos = tok_pos;
            sc.fail("unknown layer token '" + head + "'");
        }
        spec.tokens.push_back(t);
        if (sc.pos == text.size()) break;
        sc.expect('.');
        if (sc.pos == text.size()) sc.fail("trailing '.'");
    }
    return spec;
}

std::string render(const ArchSpec &spec) {
    std::ostringstream out;
    bool first = true;
    for (const Token &t : spec.tokens) {
        if (!first) out << '.';
        first = false;
        switch (t.kind) {
        case Token::Kind::Conv:
            out << "c(" << t.channels << ',' << t.kernel << ',' << t.stride << ')';
            break;
        case Token::Kind::Pool:
            out << "p(" << (t.pool == layers::PoolKind::Avg ? "av" : "max") << ',' << t.window
                << ',' << t.pool_stride << ')';
            break;
        case Token::Kind::Fc:
            out << "f(" << t.units << ')';
            break;
        }
    }
    return out.str();
}

nn::NetSpec build_netspec(const ArchSpec &spec, int in_h, int in_w, int in_c, double rho,
                          nn::Activation act, const la::Mat *l_q, double eps) {
    if (spec.tokens.empty()) throw ArchShapeError("empty architecture");
    if (in_h < 1 || in_w < 1 || in_c < 1) throw ArchShapeError("input shape must be positive");
    if (!(rho > 0.0)) throw InvalidParameter("gain bound must be positive");

    nn::NetSpec net;
    net.rho = rho;
    net.act = act;
    net.in_h = in_h;
    net.in_w = in_w;
    net.in_c = in_c;
    net.arch = render(spec);
    if (l_q) net.l_q = *l_q;

    int h = in_h, w = in_w, c = in_c;
    bool flat = false;
    size_t n = spec.tokens.size();
    if (spec.tokens.back().kind != Token::Kind::Fc)
        throw ArchShapeError("architecture must end with a dense layer");

    for (size_t i = 0; i < n; ++i) {
        const Token &t = spec.tokens[i];
        if (t.kind == Token::Kind::Pool)
            throw ArchShapeError("pool token must directly follow a convolution");
        if (t.kind == Token::Kind::Conv) {
            if (flat) throw ArchShapeError("convolution after dense layer");
            int s = t.stride;
            if (h % s != 0 || w % s != 0)
                throw ArchShapeError("stride does not divide the spatial grid");
            if (t.kernel > h || t.kernel > w)
                throw ArchShapeError("kernel larger than the spatial grid");
            int order = (t.kernel + s - 1) / s - 1; // order of the stride-1 kernel on depth planes

            nn::StageSpec st;
            st.s2d = s;
            st.in_h = h;
            st.in_w = w;
            st.geom.kind = layers::LayerKind::Conv2d;
            st.geom.c_in = c * s * s;
            st.geom.c_out = t.channels;
            st.geom.r1 = order;
            st.geom.r2 = order;
            st.geom.pre_expand = s * s;
            st.geom.eps = eps;
            h /= s;
            w /= s;
            c = t.channels;

            if (i + 1 < n && spec.tokens[i + 1].kind == Token::Kind::Pool) {
                const Token &p = spec.tokens[++i];
                st.geom.pool.kind = p.pool;
                st.geom.pool.k1 = p.window;
                st.geom.pool.k2 = p.window;
                st.geom.pool.s1 = p.pool_stride;
                st.geom.pool.s2 = p.pool_stride;
                if (p.window > h || p.window > w || (h - p.window) % p.pool_stride != 0 ||
                    (w - p.window) % p.pool_stride != 0)
                    throw ArchShapeError("pool window does not tile the spatial grid");
                st.geom.pool.rho_p =
                    cert::pooling_gain(p.pool, p.window, p.window, p.pool_stride, p.pool_stride, h, w);
                st.geom.maxpool = p.pool == layers::PoolKind::Max;
                h = (h - p.window) / p.pool_stride + 1;
                w = (w - p.window) / p.pool_stride + 1;
            }
            net.stages.push_back(st);
        } else {
            nn::StageSpec st;
            st.in_h = h;
            st.in_w = w;
            st.flatten = h * w > 1;
            st.geom.kind = i + 1 == n ? layers::LayerKind::LastFc : layers::LayerKind::Fc;
            st.geom.c_in = h * w * c;
            st.geom.c_out = t.units;
            st.geom.pre_expand = h * w;
            st.geom.eps = eps;
            h = 1;
            w = 1;
            c = t.units;
            flat = true;
            net.stages.push_back(st);
        }
    }
    nn::validate_spec(net);
    return net;
}

} // namespace lipkernel::arch
