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

#pragma once

#include <complex>
#include <initializer_list>
#include <vector>

namespace lipkernel::la {

/**
 * Dense row-major double matrix. Deliberately small surface; heavy lifting
 * (products) is delegated to Eigen internally, everything else is plain loops.
 */
class Mat {
  public:
    Mat() = default;
    Mat(int rows, int cols) : r_(rows), c_(cols), d_(static_cast<size_t>(rows) * cols, 0.0) {}
    Mat(int rows, int cols, std::initializer_list<double> vals);

    static Mat identity(int n);
    static Mat diag(const std::vector<double> &d);

    int rows() const { return r_; }
    int cols() const { return c_; }
    size_t size() const { return d_.size(); }

    double &operator()(int i, int j) { return d_[static_cast<size_t>(i) * c_ + j]; }
    double operator()(int i, int j) const { return d_[static_cast<size_t>(i) * c_ + j]; }
    double &at(size_t k) { return d_[k]; }
    double at(size_t k) const { return d_[k]; }

    double *data() { return d_.data(); }
    const double *data() const { return d_.data(); }

    bool same_shape(const Mat &o) const { return r_ == o.r_ && c_ == o.c_; }

  private:
    int r_ = 0, c_ = 0;
    std::vector<double> d_;
};

/** Dense row-major complex matrix, used only by the FFT path. */
class CMat {
  public:
    using cplx = std::complex<double>;

    CMat() = default;
    CMat(int rows, int cols) : r_(rows), c_(cols), d_(static_cast<size_t>(rows) * cols) {}

    int rows() const { return r_; }
    int cols() const { return c_; }

    cplx &operator()(int i, int j) { return d_[static_cast<size_t>(i) * c_ + j]; }
    cplx operator()(int i, int j) const { return d_[static_cast<size_t>(i) * c_ + j]; }

    cplx *data() { return d_.data(); }
    const cplx *data() const { return d_.data(); }

  private:
    int r_ = 0, c_ = 0;
    std::vector<cplx> d_;
};

// elementwise / structural ------------------------------------------------

Mat add(const Mat &a, const Mat &b);
Mat sub(const Mat &a, const Mat &b);
Mat hadamard(const Mat &a, const Mat &b);
Mat scale(const Mat &a, double s);
Mat transpose(const Mat &a);
Mat sym(const Mat &a); // (a + a^T)/2

Mat block(const Mat &a, int i0, int j0, int rows, int cols);
void set_block(Mat &a, int i0, int j0, const Mat &b);
Mat hcat(const std::vector<Mat> &parts);
Mat vcat(const std::vector<Mat> &parts);

// I_m (x) a
Mat kron_identity(int m, const Mat &a);

std::vector<double> diag_of(const Mat &a);
double trace(const Mat &a);
double frob(const Mat &a);
double max_abs(const Mat &a);
double max_abs_diff(const Mat &a, const Mat &b);
bool all_finite(const Mat &a);

// products ----------------------------------------------------------------

Mat matmul(const Mat &a, const Mat &b);    // a * b
Mat matmul_tn(const Mat &a, const Mat &b); // a^T * b
Mat matmul_nt(const Mat &a, const Mat &b); // a * b^T

// factorizations / solves -------------------------------------------------

/**
 * Cholesky factor with the A = L^T L convention: L is upper triangular with
 * positive diagonal. Retries once with a jitter of 1e-12 * trace/n on the
 * diagonal before giving up with NotPositiveDefinite.
 */
Mat cholesky(const Mat &a);

/** Solve L x = b for upper triangular L (back substitution). */
Mat solve_upper(const Mat &l, const Mat &b);
/** Solve L^T x = b for upper triangular L (forward substitution). */
Mat solve_upper_t(const Mat &l, const Mat &b);

/** A^{-1} b for symmetric positive definite a, via cholesky. */
Mat solve_psd(const Mat &a, const Mat &b);
Mat inverse_psd(const Mat &a);

/** General square solve with partial pivoting. */
Mat solve_lu(const Mat &a, const Mat &b);

/** Complex counterpart, for the per-frequency maps of the Fourier path. */
CMat solve_lu(const CMat &a, const CMat &b);

// symmetric eigenvalues ---------------------------------------------------

/**
 * All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi sweeps.
 * Converged when the off-diagonal Frobenius norm drops below 1e-12 times the
 * matrix norm; throws NoConvergence after 100 sweeps.
 */
std::vector<double> eigvals_sym(const Mat &a);
double min_eig_sym(const Mat &a);

/** Largest singular value by power iteration on a^T a. Deterministic start. */
double spectral_norm(const Mat &a, int max_iters = 500, double tol = 1e-12, uint64_t seed = 7);

// FFT ---------------------------------------------------------------------

/** In-place radix-2 FFT over both axes; dimensions must be powers of two. */
void fft2(CMat &x);
void ifft2(CMat &x);

} // namespace lipkernel::la
