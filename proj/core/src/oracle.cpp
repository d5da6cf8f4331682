#include "vidadapt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vad::oracle {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// log N(x; mu, diag(v)) for one mixture component, with optional extra
// isotropic variance add.
double component_logpdf(std::span<const double> x, std::span<const double> mu,
                        std::span<const double> v, double signal_scale, double extra_var) {
    double acc = 0.0;
    for (size_t d = 0; d < x.size(); ++d) {
        double var = signal_scale * signal_scale * v[d] + extra_var;
        double diff = x[d] - signal_scale * mu[d];
        acc += -0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
    }
    return acc;
}

struct NoisyComponentView {
    double signal_scale;  // sqrt(alpha_bar) applied to means, scale^2 to variances
    double extra_var;     // 1 - alpha_bar
};

double mixture_logdensity(std::span<const double> x, const GMMSpec& spec,
                          const NoisyComponentView& view) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(spec.weights.size());
    for (size_t i = 0; i < spec.weights.size(); ++i) {
        logs[i] = std::log(spec.weights[i]) +
                  component_logpdf(x, spec.means[i], spec.variances[i], view.signal_scale,
                                   view.extra_var);
        best = std::max(best, logs[i]);
    }
    double sum = 0.0;
    for (double l : logs) sum += std::exp(l - best);
    return best + std::log(sum);
}

std::vector<double> mixture_score(std::span<const double> x, const GMMSpec& spec,
                                  const NoisyComponentView& view) {
    size_t k = spec.weights.size();
    std::vector<double> logs(k);
    double best = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < k; ++i) {
        logs[i] = std::log(spec.weights[i]) +
                  component_logpdf(x, spec.means[i], spec.variances[i], view.signal_scale,
                                   view.extra_var);
        best = std::max(best, logs[i]);
    }
    double z = 0.0;
    for (double l : logs) z += std::exp(l - best);

    std::vector<double> score(x.size(), 0.0);
    for (size_t i = 0; i < k; ++i) {
        double resp = std::exp(logs[i] - best) / z;
        for (size_t d = 0; d < x.size(); ++d) {
            double var = view.signal_scale * view.signal_scale * spec.variances[i][d] +
                         view.extra_var;
            score[d] += resp * (view.signal_scale * spec.means[i][d] - x[d]) / var;
        }
    }
    return score;
}

NoisyComponentView noisy_view(int t, const NoiseSchedule& sched) {
    if (!sched.step_in_range(t))
        throw std::invalid_argument("gmm noisy oracle: step out of range");
    return {std::sqrt(sched.alpha_bar_at(t)), sched.one_minus_alpha_bar_at(t)};
}

// Adaptive Simpson with absolute tolerance.
double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                            double fm, double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48);
}

// Pre-panelled adaptive Simpson: concentrated integrands would otherwise be
// invisible to the three initial sample points.
double panelled_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int panels = 40) {
    double total = 0.0;
    double width = (b - a) / panels;
    for (int i = 0; i < panels; ++i)
        total += adaptive_simpson(f, a + i * width, a + (i + 1) * width, tol / panels);
    return total;
}

}  // namespace

int GridDensity::num_cells() const {
    int n = 1;
    for (const auto& a : axes) n *= a.cells;
    return n;
}

void GridDensity::normalize() {
    double total = 0.0;
    for (double m : mass) total += m;
    if (!(total > 0.0)) throw std::runtime_error("grid density: all-zero mass (disjoint supports)");
    for (double& m : mass) m /= total;
    normalized = true;
}

double gmm_noisy_logdensity(std::span<const double> x, int t, const GMMSpec& spec,
                            const NoiseSchedule& sched) {
    return mixture_logdensity(x, spec, noisy_view(t, sched));
}

std::vector<double> gmm_noisy_score(std::span<const double> x, int t, const GMMSpec& spec,
                                    const NoiseSchedule& sched) {
    return mixture_score(x, spec, noisy_view(t, sched));
}

double gmm_logdensity(std::span<const double> x, const GMMSpec& spec, double smooth_sigma) {
    return mixture_logdensity(x, spec, {1.0, smooth_sigma * smooth_sigma});
}

std::vector<double> gmm_score(std::span<const double> x, const GMMSpec& spec,
                              double smooth_sigma) {
    return mixture_score(x, spec, {1.0, smooth_sigma * smooth_sigma});
}

GridDensity gmm_density_grid(const GMMSpec& spec, const std::vector<GridAxis>& axes,
                             double smooth_sigma) {
    GridDensity g;
    g.axes = axes;
    g.mass.resize(static_cast<size_t>(g.num_cells()));
    if (axes.size() == 1) {
        for (int i = 0; i < axes[0].cells; ++i) {
            double x = axes[0].center(i);
            g.mass[i] = std::exp(gmm_logdensity(std::span(&x, 1), spec, smooth_sigma));
        }
    } else if (axes.size() == 2) {
        for (int j = 0; j < axes[1].cells; ++j)
            for (int i = 0; i < axes[0].cells; ++i) {
                std::array<double, 2> x{axes[0].center(i), axes[1].center(j)};
                g.mass[static_cast<size_t>(j) * axes[0].cells + i] =
                    std::exp(gmm_logdensity(x, spec, smooth_sigma));
            }
    } else {
        throw std::invalid_argument("gmm_density_grid: only 1 or 2 axes supported");
    }
    g.normalize();
    return g;
}

GMMSpec product_gmm(const GMMSpec& a, const GMMSpec& b) {
    a.validate();
    b.validate();
    if (a.dim() != b.dim()) throw std::invalid_argument("product_gmm: dimension mismatch");
    int d = a.dim();
    GMMSpec out;
    std::vector<double> logw;
    for (size_t i = 0; i < a.weights.size(); ++i) {
        for (size_t j = 0; j < b.weights.size(); ++j) {
            std::vector<double> var(d), mean(d);
            double log_scale = 0.0;
            for (int k = 0; k < d; ++k) {
                double v1 = a.variances[i][k], v2 = b.variances[j][k];
                var[k] = v1 * v2 / (v1 + v2);
                mean[k] = var[k] * (a.means[i][k] / v1 + b.means[j][k] / v2);
                double diff = a.means[i][k] - b.means[j][k];
                log_scale += -0.5 * (kLog2Pi + std::log(v1 + v2) + diff * diff / (v1 + v2));
            }
            out.means.push_back(std::move(mean));
            out.variances.push_back(std::move(var));
            logw.push_back(std::log(a.weights[i]) + std::log(b.weights[j]) + log_scale);
        }
    }
    double best = *std::max_element(logw.begin(), logw.end());
    double z = 0.0;
    for (double l : logw) z += std::exp(l - best);
    for (double l : logw) out.weights.push_back(std::exp(l - best) / z);
    // Renormalize exactly so the spec-level invariant (sum 1 within 1e-12)
    // holds after the exp/normalize round trip.
    double s = 0.0;
    for (double w : out.weights) s += w;
    for (double& w : out.weights) w /= s;
    return out;
}

GridDensity enumerate_product(const GridDensity& p1, const GridDensity& p2) {
    if (p1.axes.size() != p2.axes.size() || p1.mass.size() != p2.mass.size())
        throw std::invalid_argument("enumerate_product: grids must be identical");
    for (size_t i = 0; i < p1.axes.size(); ++i) {
        if (p1.axes[i].lo != p2.axes[i].lo || p1.axes[i].hi != p2.axes[i].hi ||
            p1.axes[i].cells != p2.axes[i].cells)
            throw std::invalid_argument("enumerate_product: grids must be identical");
    }
    GridDensity out;
    out.axes = p1.axes;
    out.mass.resize(p1.mass.size());
    for (size_t i = 0; i < p1.mass.size(); ++i) out.mass[i] = p1.mass[i] * p2.mass[i];
    out.normalize();
    return out;
}

GridDensity temper(const GridDensity& p, double gamma) {
    GridDensity out;
    out.axes = p.axes;
    out.mass.resize(p.mass.size());
    for (size_t i = 0; i < p.mass.size(); ++i)
        out.mass[i] = p.mass[i] > 0.0 ? std::pow(p.mass[i], gamma) : 0.0;
    out.normalize();
    return out;
}

GridDensity histogram(std::span<const double> samples, int dim,
                      const std::vector<GridAxis>& axes) {
    if (static_cast<size_t>(dim) != axes.size())
        throw std::invalid_argument("histogram: dim must match axis count");
    GridDensity g;
    g.axes = axes;
    g.mass.assign(static_cast<size_t>(g.num_cells()), 0.0);
    size_t n = samples.size() / dim;
    for (size_t s = 0; s < n; ++s) {
        long idx = 0;
        long stride = 1;
        bool in_range = true;
        for (int d = 0; d < dim; ++d) {
            double v = samples[s * dim + d];
            const GridAxis& ax = axes[d];
            int cell = static_cast<int>(std::floor((v - ax.lo) / ax.cell_width()));
            if (cell < 0 || cell >= ax.cells) {
                in_range = false;
                break;
            }
            idx += stride * cell;
            stride *= ax.cells;
        }
        if (in_range) g.mass[static_cast<size_t>(idx)] += 1.0;
    }
    g.normalize();
    return g;
}

double kl_divergence(const GridDensity& p, const GridDensity& q) {
    if (p.mass.size() != q.mass.size()) throw std::invalid_argument("kl: grid mismatch");
    constexpr double kSmooth = 1e-12;
    double zp = 0.0, zq = 0.0;
    for (double m : p.mass) zp += m + kSmooth;
    for (double m : q.mass) zq += m + kSmooth;
    double kl = 0.0;
    for (size_t i = 0; i < p.mass.size(); ++i) {
        double pi = (p.mass[i] + kSmooth) / zp;
        double qi = (q.mass[i] + kSmooth) / zq;
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

double total_variation(const GridDensity& p, const GridDensity& q) {
    if (p.mass.size() != q.mass.size()) throw std::invalid_argument("tv: grid mismatch");
    double tv = 0.0;
    for (size_t i = 0; i < p.mass.size(); ++i) tv += std::abs(p.mass[i] - q.mass[i]);
    return 0.5 * tv;
}

std::vector<double> langevin_sample(const LevelScoreFn& score_fn, int dim, int num_samples,
                                    const NoiseSchedule& sched, const LangevinConfig& cfg,
                                    uint64_t seed) {
    if (cfg.steps_per_level < 0) throw std::invalid_argument("langevin: steps must be >= 0");
    std::vector<double> out(static_cast<size_t>(num_samples) * dim);
    for (int s = 0; s < num_samples; ++s) {
        RngStream init(seed, purpose::kSampleInit, static_cast<uint64_t>(s));
        std::vector<double> x(dim);
        for (double& v : x) v = init.normal();
        RngStream walk(seed, purpose::kLangevin, static_cast<uint64_t>(s));
        for (int t = sched.num_steps; t >= 1; --t) {
            double sb = sched.sigma_bar_at(t);
            double eta = cfg.step_scale * sb * sb;
            double kick = std::sqrt(2.0 * eta);
            for (int k = 0; k < cfg.steps_per_level; ++k) {
                std::vector<double> g = score_fn(x, t);
                for (int d = 0; d < dim; ++d) {
                    if (!std::isfinite(g[d]))
                        throw std::runtime_error("langevin: non-finite score encountered");
                    x[d] += eta * g[d] + kick * walk.normal();
                }
            }
        }
        std::copy(x.begin(), x.end(), out.begin() + static_cast<long>(s) * dim);
    }
    return out;
}

LevelScoreFn score_from_energy(const EnergyFunction& e, double fd_step) {
    if (e.gradient) {
        auto grad = e.gradient;
        return [grad](std::span<const double> x, int) {
            std::vector<double> g = grad(x);
            for (double& v : g) v = -v;
            return g;
        };
    }
    auto energy = e.energy;
    return [energy, fd_step](std::span<const double> x, int) {
        std::vector<double> g =
            finite_diff_grad([&](std::span<const double> p) { return energy(p); }, x, fd_step);
        for (double& v : g) v = -v;
        return g;
    };
}

std::vector<double> posterior_mean_quadrature(std::span<const double> y, const GMMSpec& spec,
                                              double sigma) {
    spec.validate();
    int dim = spec.dim();
    if (dim > 2) throw std::invalid_argument("posterior_mean_quadrature: dimension must be <= 2");
    if (static_cast<int>(y.size()) != dim)
        throw std::invalid_argument("posterior_mean_quadrature: y dimension mismatch");

    // Integration box: the integrand is prior * likelihood, so each
    // component contributes only where its 10-sigma box meets the 10-sigma
    // likelihood box around y; the panel count then resolves every bump.
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    bool any_overlap = false;
    for (size_t i = 0; i < spec.means.size(); ++i) {
        bool overlap = true;
        std::vector<double> c_lo(dim), c_hi(dim);
        for (int d = 0; d < dim; ++d) {
            double sd = std::sqrt(spec.variances[i][d]);
            c_lo[d] = std::max(spec.means[i][d] - 10.0 * sd, y[d] - 10.0 * sigma);
            c_hi[d] = std::min(spec.means[i][d] + 10.0 * sd, y[d] + 10.0 * sigma);
            if (!(c_lo[d] < c_hi[d])) overlap = false;
        }
        if (!overlap) continue;
        any_overlap = true;
        for (int d = 0; d < dim; ++d) {
            lo[d] = std::min(lo[d], c_lo[d]);
            hi[d] = std::max(hi[d], c_hi[d]);
        }
    }
    if (!any_overlap) {
        // degenerate separation: fall back to the union of all supports
        for (int d = 0; d < dim; ++d) {
            lo[d] = y[d] - 10.0 * sigma;
            hi[d] = y[d] + 10.0 * sigma;
        }
        for (size_t i = 0; i < spec.means.size(); ++i)
            for (int d = 0; d < dim; ++d) {
                double sd = std::sqrt(spec.variances[i][d]);
                lo[d] = std::min(lo[d], spec.means[i][d] - 10.0 * sd);
                hi[d] = std::max(hi[d], spec.means[i][d] + 10.0 * sd);
            }
    }

    auto integrand = [&](std::span<const double> tau) {
        double log_lik = 0.0;
        for (int d = 0; d < dim; ++d) {
            double diff = y[d] - tau[d];
            log_lik += -0.5 * (kLog2Pi + 2.0 * std::log(sigma) + diff * diff / (sigma * sigma));
        }
        return std::exp(gmm_logdensity(tau, spec) + log_lik);
    };

    constexpr double kTol = 1e-9;
    std::vector<double> result(dim);
    if (dim == 1) {
        double denom = panelled_simpson([&](double t) { return integrand(std::span(&t, 1)); },
                                        lo[0], hi[0], kTol);
        double numer = panelled_simpson(
            [&](double t) { return t * integrand(std::span(&t, 1)); }, lo[0], hi[0], kTol);
        result[0] = numer / denom;
    } else {
        auto integrate2d = [&](const std::function<double(double, double)>& f) {
            return panelled_simpson(
                [&](double t0) {
                    return panelled_simpson([&](double t1) { return f(t0, t1); }, lo[1], hi[1],
                                            kTol, 24);
                },
                lo[0], hi[0], kTol * (hi[1] - lo[1]), 24);
        };
        double denom = integrate2d([&](double t0, double t1) {
            std::array<double, 2> tau{t0, t1};
            return integrand(tau);
        });
        for (int d = 0; d < 2; ++d) {
            double numer = integrate2d([&](double t0, double t1) {
                std::array<double, 2> tau{t0, t1};
                return (d == 0 ? t0 : t1) * integrand(tau);
            });
            result[d] = numer / denom;
        }
    }
    return result;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    std::vector<double> p(x.begin(), x.end());
    std::vector<double> g(x.size());
    for (size_t d = 0; d < x.size(); ++d) {
        double orig = p[d];
        p[d] = orig + h;
        double fp = f(p);
        p[d] = orig - h;
        double fm = f(p);
        p[d] = orig;
        g[d] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace vad::oracle
