#pragma once

#include <functional>
#include <span>
#include <vector>

#include "vidadapt/rng.hpp"
#include "vidadapt/schedule.hpp"
#include "vidadapt/worlds.hpp"

namespace vad::oracle {

// All oracle arithmetic is float64: ground truth must out-precision the
// float32 model paths it checks.

// Scalar energy E(x) with p ∝ exp(-E); gradient optional (finite differences
// otherwise).
struct EnergyFunction {
    int dim = 0;
    std::function<double(std::span<const double>)> energy;
    std::function<std::vector<double>(std::span<const double>)> gradient;  // optional
};

// Regular grid over 1 or 2 axes carrying a nonnegative mass array
// (row-major, x fastest for 2D).
struct GridAxis {
    double lo = 0.0, hi = 1.0;
    int cells = 1;
    double cell_width() const { return (hi - lo) / cells; }
    double center(int i) const { return lo + (i + 0.5) * cell_width(); }
};

struct GridDensity {
    std::vector<GridAxis> axes;  // 1 or 2
    std::vector<double> mass;
    bool normalized = false;

    int num_cells() const;
    void normalize();  // errors on all-zero mass
};

// Density of the mixture marginal after forward noising to step t:
// p_t = sum_i w_i N(x; sqrt(ab)*mu_i, ab*Sigma_i + (1-ab) I).
double gmm_noisy_logdensity(std::span<const double> x, int t, const GMMSpec& spec,
                            const NoiseSchedule& sched);
std::vector<double> gmm_noisy_score(std::span<const double> x, int t, const GMMSpec& spec,
                                    const NoiseSchedule& sched);

// Clean-data variants (no schedule; optional isotropic smoothing sigma).
double gmm_logdensity(std::span<const double> x, const GMMSpec& spec, double smooth_sigma = 0.0);
std::vector<double> gmm_score(std::span<const double> x, const GMMSpec& spec,
                              double smooth_sigma = 0.0);

// Cell-centered evaluation of a mixture on a grid, normalized.
GridDensity gmm_density_grid(const GMMSpec& spec, const std::vector<GridAxis>& axes,
                             double smooth_sigma = 0.0);

// The exact product of two diagonal mixtures is again a mixture
// (componentwise Gaussian products); used as an analytic crosscheck.
GMMSpec product_gmm(const GMMSpec& a, const GMMSpec& b);

// Pointwise product renormalized to total mass 1. Disjoint supports
// (all-zero product) are reported as a distinct error.
GridDensity enumerate_product(const GridDensity& p1, const GridDensity& p2);

// Pointwise power p^gamma, renormalized. Grids compose like densities:
// enumerate_product(a, temper(b, gamma)) targets a * b^gamma.
GridDensity temper(const GridDensity& p, double gamma);

// Histogram of samples (row-major n x dim) on a grid; out-of-range samples
// are dropped.
GridDensity histogram(std::span<const double> samples, int dim, const std::vector<GridAxis>& axes);

// KL(p || q) with add-1e-12 smoothing on empty bins.
double kl_divergence(const GridDensity& p, const GridDensity& q);
double total_variation(const GridDensity& p, const GridDensity& q);

// Level-aware score used by annealed Langevin: x, t -> grad log p_t(x).
using LevelScoreFn = std::function<std::vector<double>(std::span<const double>, int)>;

struct LangevinConfig {
    int steps_per_level = 10;
    double step_scale = 0.1;  // step size at level t is step_scale * sigma_bar[t]^2
};

// Annealed unadjusted Langevin over the schedule's noise levels, from
// x ~ N(0, I) at t = T down to t = 1. steps_per_level = 0 returns the
// initialization. One chain per sample, keyed by (seed, sample index).
std::vector<double> langevin_sample(const LevelScoreFn& score_fn, int dim, int num_samples,
                                    const NoiseSchedule& sched, const LangevinConfig& cfg,
                                    uint64_t seed);

// Score derived from an energy: -grad E (analytic if present, else central
// differences), independent of the noise level.
LevelScoreFn score_from_energy(const EnergyFunction& e, double fd_step = 1e-5);

// Posterior mean of tau given y = tau + sigma * xi under a mixture prior,
// by direct adaptive quadrature (dim <= 2), abs tolerance ~1e-6.
std::vector<double> posterior_mean_quadrature(std::span<const double> y, const GMMSpec& spec,
                                              double sigma);

// Central differences per coordinate.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h);

}  // namespace vad::oracle
