#pragma once

// Test-side oracles, independent of the library implementation paths they
// check: straight-line re-implementations and a hand-rolled Jacobi
// eigensolver. They share only the keyed RNG streams (those draws are part
// of the operation's contract), never the library's arithmetic.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vidadapt/tensor.hpp"

namespace vad_test {

// Straight-line mean ||eps - predict(x_t, t)||^2 with the contract's keyed
// (t, eps) draws replayed locally; forward noising and the loss recomputed
// in double from the affine log-snr ramp.
double oracle_denoising_loss(
    const std::vector<std::vector<float>>& batch_data,
    const std::function<std::vector<double>(const std::vector<double>&, int)>& predict,
    uint64_t seed, int num_steps, double logsnr_min, double logsnr_max);

// Independent single reverse step from first principles (posterior mean and
// small posterior variance re-derived from sigmoids of the ramp).
std::vector<double> oracle_ddpm_step(std::span<const float> x, int t, std::span<const float> eps,
                                     std::span<const float> xi, int num_steps, double logsnr_min,
                                     double logsnr_max);

// Cyclic-Jacobi symmetric eigendecomposition: a is row-major n x n and gets
// destroyed; eigenvalues land in `values`, eigenvectors in the columns of
// `vectors` (row-major n x n).
void jacobi_eig(std::vector<double> a, int n, std::vector<double>& values,
                std::vector<double>& vectors);

// Frechet distance via the Jacobi route, independent of Eigen.
double oracle_frechet(const std::vector<double>& mean_a, const std::vector<double>& cov_a,
                      const std::vector<double>& mean_b, const std::vector<double>& cov_b, int n);

// Direct 3x3 correlation with explicit replicate padding, scalar loops.
vad::VideoTensor oracle_sobel_raw(const vad::VideoTensor& video);

}  // namespace vad_test
