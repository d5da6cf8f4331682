#include "test_oracles.hpp"

#include <algorithm>
#include <cmath>

#include "vidadapt/rng.hpp"

namespace vad_test {

namespace {

double ramp_logsnr(int t, int num_steps, double lmin, double lmax) {
    return lmax + (lmin - lmax) * (static_cast<double>(t - 1) / (num_steps - 1));
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double ab_at(int t, int num_steps, double lmin, double lmax) {
    if (t == 0) return 1.0;
    return sig(ramp_logsnr(t, num_steps, lmin, lmax));
}

double om_at(int t, int num_steps, double lmin, double lmax) {
    if (t == 0) return 0.0;
    return sig(-ramp_logsnr(t, num_steps, lmin, lmax));
}

}  // namespace

double oracle_denoising_loss(
    const std::vector<std::vector<float>>& batch_data,
    const std::function<std::vector<double>(const std::vector<double>&, int)>& predict,
    uint64_t seed, int num_steps, double logsnr_min, double logsnr_max) {
    double total = 0.0;
    for (size_t i = 0; i < batch_data.size(); ++i) {
        // replay the contract's keyed draws
        vad::RngStream t_rng(seed, vad::purpose::kLossTimestep, i);
        int t = static_cast<int>(t_rng.uniform_int(static_cast<uint64_t>(num_steps))) + 1;
        vad::RngStream e_rng(seed, vad::purpose::kLossNoise, i);
        std::vector<double> eps(batch_data[i].size());
        for (double& e : eps) e = static_cast<float>(e_rng.normal());

        double signal = std::sqrt(ab_at(t, num_steps, logsnr_min, logsnr_max));
        double noise = std::sqrt(om_at(t, num_steps, logsnr_min, logsnr_max));
        std::vector<double> noisy(eps.size());
        for (size_t k = 0; k < eps.size(); ++k)
            noisy[k] = signal * batch_data[i][k] + noise * eps[k];
        std::vector<double> pred = predict(noisy, t);
        double sq = 0.0;
        for (size_t k = 0; k < eps.size(); ++k) {
            double d = eps[k] - pred[k];
            sq += d * d;
        }
        total += sq;
    }
    return total / static_cast<double>(batch_data.size());
}

std::vector<double> oracle_ddpm_step(std::span<const float> x, int t, std::span<const float> eps,
                                     std::span<const float> xi, int num_steps, double logsnr_min,
                                     double logsnr_max) {
    double ab_prev = ab_at(t - 1, num_steps, logsnr_min, logsnr_max);
    double om = om_at(t, num_steps, logsnr_min, logsnr_max);
    double om_prev = om_at(t - 1, num_steps, logsnr_min, logsnr_max);
    double beta = (om - om_prev) / ab_prev;
    double scale = 1.0 / std::sqrt(1.0 - beta);
    double ecoef = beta / std::sqrt(om);
    double sigma = std::sqrt(beta * om_prev / om);
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        out[i] = scale * (static_cast<double>(x[i]) - ecoef * eps[i]) + sigma * xi[i];
    return out;
}

void jacobi_eig(std::vector<double> a, int n, std::vector<double>& values,
                std::vector<double>& vectors) {
    vectors.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vectors[static_cast<size_t>(i) * n + i] = 1.0;
    auto A = [&](int r, int c) -> double& { return a[static_cast<size_t>(r) * n + c]; };
    auto V = [&](int r, int c) -> double& { return vectors[static_cast<size_t>(r) * n + c]; };

    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    values.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) values[static_cast<size_t>(i)] = A(i, i);
}

namespace {

// B = V f(Lambda) V^T for a symmetric matrix given by its Jacobi pieces.
std::vector<double> reconstruct(const std::vector<double>& values,
                                const std::vector<double>& vectors, int n,
                                const std::function<double(double)>& f) {
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        double fk = f(values[static_cast<size_t>(k)]);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                out[static_cast<size_t>(r) * n + c] +=
                    fk * vectors[static_cast<size_t>(r) * n + k] *
                    vectors[static_cast<size_t>(c) * n + k];
    }
    return out;
}

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int n) {
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int r = 0; r < n; ++r)
        for (int k = 0; k < n; ++k) {
            double ark = a[static_cast<size_t>(r) * n + k];
            for (int c = 0; c < n; ++c)
                out[static_cast<size_t>(r) * n + c] += ark * b[static_cast<size_t>(k) * n + c];
        }
    return out;
}

}  // namespace

double oracle_frechet(const std::vector<double>& mean_a, const std::vector<double>& cov_a,
                      const std::vector<double>& mean_b, const std::vector<double>& cov_b, int n) {
    std::vector<double> values, vectors;
    jacobi_eig(cov_a, n, values, vectors);
    std::vector<double> sqrt_a =
        reconstruct(values, vectors, n, [](double v) { return std::sqrt(std::max(v, 0.0)); });
    std::vector<double> inner = matmul(matmul(sqrt_a, cov_b, n), sqrt_a, n);
    for (int r = 0; r < n; ++r)
        for (int c = r + 1; c < n; ++c) {
            double m = 0.5 * (inner[static_cast<size_t>(r) * n + c] +
                              inner[static_cast<size_t>(c) * n + r]);
            inner[static_cast<size_t>(r) * n + c] = inner[static_cast<size_t>(c) * n + r] = m;
        }
    jacobi_eig(inner, n, values, vectors);
    double tr_sqrt = 0.0;
    for (double v : values) tr_sqrt += std::sqrt(std::max(v, 0.0));
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        double diff = mean_a[static_cast<size_t>(i)] - mean_b[static_cast<size_t>(i)];
        d += diff * diff;
    }
    for (int i = 0; i < n; ++i)
        d += cov_a[static_cast<size_t>(i) * n + i] + cov_b[static_cast<size_t>(i) * n + i];
    return d - 2.0 * tr_sqrt;
}

vad::VideoTensor oracle_sobel_raw(const vad::VideoTensor& video) {
    const auto& s = video.shape;
    vad::VideoTensor out(s);
    auto sample = [&](int f, int y, int x, int c) {
        y = std::max(0, std::min(y, s.height - 1));
        x = std::max(0, std::min(x, s.width - 1));
        return video.at(f, y, x, c);
    };
    for (int f = 0; f < s.frames; ++f)
        for (int c = 0; c < s.channels; ++c)
            for (int y = 0; y < s.height; ++y)
                for (int x = 0; x < s.width; ++x) {
                    double v = -sample(f, y - 1, x - 1, c) + sample(f, y - 1, x + 1, c) -
                               2.0 * sample(f, y, x - 1, c) + 2.0 * sample(f, y, x + 1, c) -
                               sample(f, y + 1, x - 1, c) + sample(f, y + 1, x + 1, c);
                    out.at(f, y, x, c) = static_cast<float>(v);
                }
    return out;
}

}  // namespace vad_test
