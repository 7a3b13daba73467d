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

#include "lipkernel/linalg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lipkernel/errors.hpp"
#include "lipkernel/rng.hpp"

namespace lipkernel::la {

namespace {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMat>;
using EigenCMap = Eigen::Map<const EigenRowMat>;

void require_same_shape(const Mat &a, const Mat &b, const char *op) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
}

void require_square(const Mat &a, const char *op) {
    if (a.rows() != a.cols())
        throw ShapeMismatch(std::string(op) + ": matrix is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + ", expected square");
}

} // namespace

Mat::Mat(int rows, int cols, std::initializer_list<double> vals) : Mat(rows, cols) {
    if (vals.size() != d_.size())
        throw ShapeMismatch("Mat init list: got " + std::to_string(vals.size()) + " values for " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    std::copy(vals.begin(), vals.end(), d_.begin());
}

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

Mat Mat::diag(const std::vector<double> &d) {
    Mat m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (size_t i = 0; i < d.size(); ++i)
        m(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
}

Mat add(const Mat &a, const Mat &b) {
    require_same_shape(a, b, "add");
    Mat out(a.rows(), a.cols());
    for (size_t k = 0; k < a.size(); ++k)
        out.at(k) = a.at(k) + b.at(k);
    return out;
}

Mat sub(const Mat &a, const Mat &b) {
    require_same_shape(a, b, "sub");
    Mat out(a.rows(), a.cols());
    for (size_t k = 0; k < a.size(); ++k)
        out.at(k) = a.at(k) - b.at(k);
    return out;
}

Mat hadamard(const Mat &a, const Mat &b) {
    require_same_shape(a, b, "hadamard");
    Mat out(a.rows(), a.cols());
    for (size_t k = 0; k < a.size(); ++k)
        out.at(k) = a.at(k) * b.at(k);
    return out;
}

Mat scale(const Mat &a, double s) {
    Mat out(a.rows(), a.cols());
    for (size_t k = 0; k < a.size(); ++k)
        out.at(k) = a.at(k) * s;
    return out;
}

Mat transpose(const Mat &a) {
    Mat out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            out(j, i) = a(i, j);
    return out;
}

Mat sym(const Mat &a) {
    require_square(a, "sym");
    Mat out(a.rows(), a.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            out(i, j) = 0.5 * (a(i, j) + a(j, i));
    return out;
}

Mat block(const Mat &a, int i0, int j0, int rows, int cols) {
    if (i0 < 0 || j0 < 0 || i0 + rows > a.rows() || j0 + cols > a.cols())
        throw ShapeMismatch("block: range out of bounds");
    Mat out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out(i, j) = a(i0 + i, j0 + j);
    return out;
}

void set_block(Mat &a, int i0, int j0, const Mat &b) {
    if (i0 < 0 || j0 < 0 || i0 + b.rows() > a.rows() || j0 + b.cols() > a.cols())
        throw ShapeMismatch("set_block: range out of bounds");
    for (int i = 0; i < b.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j)
            a(i0 + i, j0 + j) = b(i, j);
}

Mat hcat(const std::vector<Mat> &parts) {
    if (parts.empty())
        return Mat();
    int rows = parts[0].rows(), cols = 0;
    for (const Mat &p : parts) {
        if (p.rows() != rows)
            throw ShapeMismatch("hcat: row counts differ");
        cols += p.cols();
    }
    Mat out(rows, cols);
    int j0 = 0;
    for (const Mat &p : parts) {
        set_block(out, 0, j0, p);
        j0 += p.cols();
    }
    return out;
}

Mat vcat(const std::vector<Mat> &parts) {
    if (parts.empty())
        return Mat();
    int cols = parts[0].cols(), rows = 0;
    for (const Mat &p : parts) {
        if (p.cols() != cols)
            throw ShapeMismatch("vcat: column counts differ");
        rows += p.rows();
    }
    Mat out(rows, cols);
    int i0 = 0;
    for (const Mat &p : parts) {
        set_block(out, i0, 0, p);
        i0 += p.rows();
    }
    return out;
}

Mat kron_identity(int m, const Mat &a) {
    Mat out(m * a.rows(), m * a.cols());
    for (int k = 0; k < m; ++k)
        set_block(out, k * a.rows(), k * a.cols(), a);
    return out;
}

std::vector<double> diag_of(const Mat &a) {
    int n = std::min(a.rows(), a.cols());
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i)
        d[i] = a(i, i);
    return d;
}

double trace(const Mat &a) {
    double t = 0.0;
    for (int i = 0; i < std::min(a.rows(), a.cols()); ++i)
        t += a(i, i);
    return t;
}

double frob(const Mat &a) {
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k)
        s += a.at(k) * a.at(k);
    return std::sqrt(s);
}

double max_abs(const Mat &a) {
    double m = 0.0;
    for (size_t k = 0; k < a.size(); ++k)
        m = std::max(m, std::fabs(a.at(k)));
    return m;
}

double max_abs_diff(const Mat &a, const Mat &b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t k = 0; k < a.size(); ++k)
        m = std::max(m, std::fabs(a.at(k) - b.at(k)));
    return m;
}

bool all_finite(const Mat &a) {
    for (size_t k = 0; k < a.size(); ++k)
        if (!std::isfinite(a.at(k)))
            return false;
    return true;
}

Mat matmul(const Mat &a, const Mat &b) {
    if (a.cols() != b.rows())
        throw ShapeMismatch("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                            " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Mat out(a.rows(), b.cols());
    if (out.size() == 0 || a.cols() == 0)
        return out;
    EigenCMap ma(a.data(), a.rows(), a.cols());
    EigenCMap mb(b.data(), b.rows(), b.cols());
    EigenMap mo(out.data(), out.rows(), out.cols());
    mo.noalias() = ma * mb;
    return out;
}

Mat matmul_tn(const Mat &a, const Mat &b) {
    if (a.rows() != b.rows())
        throw ShapeMismatch("matmul_tn: inner dimensions differ");
    Mat out(a.cols(), b.cols());
    if (out.size() == 0 || a.rows() == 0)
        return out;
    EigenCMap ma(a.data(), a.rows(), a.cols());
    EigenCMap mb(b.data(), b.rows(), b.cols());
    EigenMap mo(out.data(), out.rows(), out.cols());
    mo.noalias() = ma.transpose() * mb;
    return out;
}

Mat matmul_nt(const Mat &a, const Mat &b) {
    if (a.cols() != b.cols())
        throw ShapeMismatch("matmul_nt: inner dimensions differ");
    Mat out(a.rows(), b.rows());
    if (out.size() == 0 || a.cols() == 0)
        return out;
    EigenCMap ma(a.data(), a.rows(), a.cols());
    EigenCMap mb(b.data(), b.rows(), b.cols());
    EigenMap mo(out.data(), out.rows(), out.cols());
    mo.noalias() = ma * mb.transpose();
    return out;
}

namespace {

// Upper factor with a = l^T l, or pivot index of the failure.
bool try_chol_upper(const Mat &a, Mat &l, int &bad_pivot) {
    int n = a.rows();
    l = Mat(n, n);
    for (int i = 0; i < n; ++i) {
        double s = a(i, i);
        for (int k = 0; k < i; ++k)
            s -= l(k, i) * l(k, i);
        if (!(s > 0.0) || !std::isfinite(s)) {
            bad_pivot = i;
            return false;
        }
        double d = std::sqrt(s);
        l(i, i) = d;
        for (int j = i + 1; j < n; ++j) {
            double v = a(i, j);
            for (int k = 0; k < i; ++k)
                v -= l(k, i) * l(k, j);
            l(i, j) = v / d;
        }
    }
    return true;
}

} // namespace

Mat cholesky(const Mat &a) {
    require_square(a, "cholesky");
    Mat l;
    int bad = -1;
    if (try_chol_upper(a, l, bad))
        return l;
    // one retry with a tiny diagonal jitter before declaring failure
    double tr = trace(a);
    double jitter = tr > 0.0 ? 1e-12 * tr / std::max(1, a.rows()) : 1e-12;
    Mat aj = a;
    for (int i = 0; i < a.rows(); ++i)
        aj(i, i) += jitter;
    if (try_chol_upper(aj, l, bad))
        return l;
    throw NotPositiveDefinite("cholesky: pivot " + std::to_string(bad) +
                              " not positive (jitter retry failed)");
}

Mat solve_upper(const Mat &l, const Mat &b) {
    require_square(l, "solve_upper");
    if (l.cols() != b.rows())
        throw ShapeMismatch("solve_upper: dimension mismatch");
    int n = l.rows(), m = b.cols();
    Mat x = b;
    for (int i = n - 1; i >= 0; --i) {
        for (int c = 0; c < m; ++c) {
            double v = x(i, c);
            for (int k = i + 1; k < n; ++k)
                v -= l(i, k) * x(k, c);
            x(i, c) = v / l(i, i);
        }
    }
    return x;
}

Mat solve_upper_t(const Mat &l, const Mat &b) {
    require_square(l, "solve_upper_t");
    if (l.cols() != b.rows())
        throw ShapeMismatch("solve_upper_t: dimension mismatch");
    int n = l.rows(), m = b.cols();
    Mat x = b;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < m; ++c) {
            double v = x(i, c);
            for (int k = 0; k < i; ++k)
                v -= l(k, i) * x(k, c);
            x(i, c) = v / l(i, i);
        }
    }
    return x;
}

Mat solve_psd(const Mat &a, const Mat &b) {
    Mat l = cholesky(a);
    return solve_upper(l, solve_upper_t(l, b));
}

Mat inverse_psd(const Mat &a) { return solve_psd(a, Mat::identity(a.rows())); }

Mat solve_lu(const Mat &a, const Mat &b) {
    require_square(a, "solve_lu");
    if (a.cols() != b.rows())
        throw ShapeMismatch("solve_lu: dimension mismatch");
    int n = a.rows(), m = b.cols();
    Mat lu = a, x = b;
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i)
        perm[i] = i;
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::fabs(lu(i, k)) > std::fabs(lu(p, k)))
                p = i;
        if (lu(p, k) == 0.0)
            throw InvalidParameter("solve_lu: singular matrix");
        if (p != k) {
            for (int j = 0; j < n; ++j)
                std::swap(lu(k, j), lu(p, j));
            for (int c = 0; c < m; ++c)
                std::swap(x(k, c), x(p, c));
        }
        for (int i = k + 1; i < n; ++i) {
            double f = lu(i, k) / lu(k, k);
            lu(i, k) = f;
            for (int j = k + 1; j < n; ++j)
                lu(i, j) -= f * lu(k, j);
            for (int c = 0; c < m; ++c)
                x(i, c) -= f * x(k, c);
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int c = 0; c < m; ++c) {
            double v = x(i, c);
            for (int k = i + 1; k < n; ++k)
                v -= lu(i, k) * x(k, c);
            x(i, c) = v / lu(i, i);
        }
    }
    return x;
}

CMat solve_lu(const CMat &a, const CMat &b) {
    if (a.rows() != a.cols())
        throw ShapeMismatch("solve_lu: matrix must be square");
    if (a.cols() != b.rows())
        throw ShapeMismatch("solve_lu: dimension mismatch");
    int n = a.rows(), m = b.cols();
    CMat lu = a, x = b;
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(lu(i, k)) > std::abs(lu(p, k)))
                p = i;
        if (std::abs(lu(p, k)) == 0.0)
            throw InvalidParameter("solve_lu: singular matrix");
        if (p != k) {
            for (int j = 0; j < n; ++j)
                std::swap(lu(k, j), lu(p, j));
            for (int c = 0; c < m; ++c)
                std::swap(x(k, c), x(p, c));
        }
        for (int i = k + 1; i < n; ++i) {
            std::complex<double> f = lu(i, k) / lu(k, k);
            lu(i, k) = f;
            for (int j = k + 1; j < n; ++j)
                lu(i, j) -= f * lu(k, j);
            for (int c = 0; c < m; ++c)
                x(i, c) -= f * x(k, c);
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int c = 0; c < m; ++c) {
            std::complex<double> v = x(i, c);
            for (int k = i + 1; k < n; ++k)
                v -= lu(i, k) * x(k, c);
            x(i, c) = v / lu(i, i);
        }
    }
    return x;
}

std::vector<double> eigvals_sym(const Mat &input) {
    require_square(input, "eigvals_sym");
    Mat a = sym(input);
    int n = a.rows();
    if (n == 0)
        return {};
    double norm = frob(a);
    const double tol = 1e-12 * norm;
    const int max_sweeps = 100;
    bool converged = (norm == 0.0);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                off += 2.0 * a(i, j) * a(i, j);
        if (std::sqrt(off) <= tol) {
            converged = true;
            break;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (apq == 0.0)
                    continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    if (!converged) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                off += 2.0 * a(i, j) * a(i, j);
        if (std::sqrt(off) > tol)
            throw NoConvergence("eigvals_sym: jacobi sweeps exhausted");
    }
    std::vector<double> ev = diag_of(a);
    std::sort(ev.begin(), ev.end());
    return ev;
}

double min_eig_sym(const Mat &a) {
    if (a.rows() == 0)
        return 0.0;
    return eigvals_sym(a).front();
}

double spectral_norm(const Mat &a, int max_iters, double tol, uint64_t seed) {
    if (a.rows() == 0 || a.cols() == 0)
        return 0.0;
    Rng rng(seed);
    Mat v(a.cols(), 1);
    for (int i = 0; i < a.cols(); ++i)
        v(i, 0) = rng.normal();
    double sigma = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        double nv = frob(v);
        if (nv == 0.0)
            return 0.0;
        v = scale(v, 1.0 / nv);
        Mat w = matmul(a, v);
        double s = frob(w);
        v = matmul_tn(a, w);
        if (std::fabs(s - sigma) <= tol * std::max(1.0, s)) {
            return s;
        }
        sigma = s;
    }
    return sigma;
}

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_1d(std::complex<double> *x, int n, bool inverse) {
    // bit reversal
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(x[i], x[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * M_PI / len * (inverse ? 1.0 : -1.0);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                std::complex<double> u = x[i + k];
                std::complex<double> t = x[i + k + len / 2] * w;
                x[i + k] = u + t;
                x[i + k + len / 2] = u - t;
                w *= wlen;
            }
        }
    }
}

void fft2_impl(CMat &m, bool inverse) {
    int r = m.rows(), c = m.cols();
    if (!is_pow2(r) || !is_pow2(c))
        throw NonPowerOfTwo("fft2: dimensions " + std::to_string(r) + "x" + std::to_string(c));
    for (int i = 0; i < r; ++i)
        fft_1d(m.data() + static_cast<size_t>(i) * c, c, inverse);
    std::vector<std::complex<double>> col(r);
    for (int j = 0; j < c; ++j) {
        for (int i = 0; i < r; ++i)
            col[i] = m(i, j);
        fft_1d(col.data(), r, inverse);
        for (int i = 0; i < r; ++i)
            m(i, j) = col[i];
    }
    if (inverse) {
        double f = 1.0 / (static_cast<double>(r) * c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                m(i, j) *= f;
    }
}

} // namespace

void fft2(CMat &x) { fft2_impl(x, false); }
void ifft2(CMat &x) { fft2_impl(x, true); }

} // namespace lipkernel::la
