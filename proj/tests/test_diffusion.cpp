#include <cmath>
#include <cstring>

#include "doctest.h"
#include "test_oracles.hpp"
#include "vidadapt/diffusion.hpp"
#include "vidadapt/oracle.hpp"
#include "vidadapt/worlds.hpp"

using namespace vad;

namespace {

VideoTensor flat(std::initializer_list<float> v) { return VideoTensor::flat(std::vector<float>(v)); }

NoiseSchedule tiny_sched() { return make_schedule(16, -8.0, 8.0); }

}  // namespace

TEST_CASE("forward_noise endpoint behaviour") {
    NoiseSchedule s = make_schedule(64, -20.0, 20.0);
    VideoTensor tau = flat({0.5f, -0.25f, 1.0f});
    std::vector<float> eps{1.0f, 2.0f, -3.0f};

    // t=1: alpha_bar ~ 1, output ~ tau
    NoisySample near_clean = forward_noise(tau, 1, eps, s);
    for (int i = 0; i < 3; ++i)
        CHECK(near_clean.tensor.data[i] == doctest::Approx(tau.data[i]).epsilon(1e-4));

    // t=T: alpha_bar ~ 0, output ~ eps
    NoisySample all_noise = forward_noise(tau, 64, eps, s);
    for (int i = 0; i < 3; ++i)
        CHECK(all_noise.tensor.data[i] == doctest::Approx(eps[i]).epsilon(1e-4));
}

TEST_CASE("forward_noise scalar algebra at alpha_bar = 0.25") {
    // scalar tau=0.5, alpha_bar=0.25, eps=1 -> 0.25 + 0.86603 = 1.11603
    NoiseSchedule s;  // hand-built single-entry schedule
    s.num_steps = 1;
    s.logsnr = {std::log(0.25 / 0.75)};
    s.alpha_bar = {0.25};
    s.one_minus_alpha_bar = {0.75};
    s.sigma_bar = {std::sqrt(0.75)};
    s.recip_sqrt_alpha = {1.0};
    s.eps_coef = {0.0};
    s.step_sigma = {0.0};
    VideoTensor tau = flat({0.5f});
    std::vector<float> eps{1.0f};
    NoisySample out = forward_noise(tau, 1, eps, s);
    CHECK(out.tensor.data[0] == doctest::Approx(1.11603).epsilon(1e-5));
}

TEST_CASE("forward_noise rejects shape mismatch and bad steps") {
    NoiseSchedule s = tiny_sched();
    VideoTensor tau = flat({0.0f, 0.0f});
    std::vector<float> eps{1.0f};
    CHECK_THROWS_AS(forward_noise(tau, 1, eps, s), std::invalid_argument);
    std::vector<float> ok{1.0f, 1.0f};
    CHECK_THROWS_AS(forward_noise(tau, 0, ok, s), std::invalid_argument);
    CHECK_THROWS_AS(forward_noise(tau, 17, ok, s), std::invalid_argument);
}

TEST_CASE("noising variance matches sigma_bar^2 empirically") {
    NoiseSchedule s = tiny_sched();
    VideoTensor tau = flat({0.3f});
    int t = 9;
    const int n = 10000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        RngStream rng(123, purpose::kLossNoise, static_cast<uint64_t>(i));
        std::vector<float> eps{rng.normal_f()};
        double v = forward_noise(tau, t, eps, s).tensor.data[0];
        mean += v;
        m2 += v * v;
    }
    mean /= n;
    double var = m2 / n - mean * mean;
    double expect = s.one_minus_alpha_bar[t - 1];
    double se = expect * std::sqrt(2.0 / n);
    CHECK(std::abs(var - expect) < 3.0 * se);
}

TEST_CASE("ddpm_step: deterministic zero-eps is a pure rescale") {
    NoiseSchedule s = tiny_sched();
    NoisySample x;
    x.tensor = flat({1.0f, -2.0f});
    x.step = 5;
    std::vector<float> eps{0.0f, 0.0f};
    RngStream rng(1, purpose::kSampleStep, 5);
    NoisySample out = ddpm_step(x, eps, s, rng, /*deterministic=*/true);
    CHECK(out.step == 4);
    float scale = static_cast<float>(s.recip_sqrt_alpha[4]);
    CHECK(out.tensor.data[0] == scale * 1.0f);
    CHECK(out.tensor.data[1] == scale * -2.0f);
}

TEST_CASE("ddpm_step matches the independent re-implementation on a 2-vector") {
    NoiseSchedule s = make_schedule(32, -14.0, 14.0);
    NoisySample x;
    x.tensor = flat({0.7f, -1.3f});
    x.step = 17;
    std::vector<float> eps{0.4f, 0.9f};

    RngStream rng(77, purpose::kSampleStep, 17);
    NoisySample got = ddpm_step(x, eps, s, rng);

    // replay the same noise draw, then recompute from first principles
    RngStream replay(77, purpose::kSampleStep, 17);
    std::vector<float> xi{replay.normal_f(), replay.normal_f()};
    std::vector<double> want =
        vad_test::oracle_ddpm_step(x.tensor.data, 17, eps, xi, 32, -14.0, 14.0);
    for (int i = 0; i < 2; ++i)
        CHECK(got.tensor.data[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("ddpm_step rejects t = 0 and shape mismatch") {
    NoiseSchedule s = tiny_sched();
    NoisySample x;
    x.tensor = flat({0.0f});
    x.step = 0;
    std::vector<float> eps{0.0f};
    RngStream rng(1, purpose::kSampleStep, 0);
    CHECK_THROWS_AS(ddpm_step(x, eps, s, rng), std::invalid_argument);
    x.step = 1;
    std::vector<float> wrong{0.0f, 0.0f};
    CHECK_THROWS_AS(ddpm_step(x, wrong, s, rng), std::invalid_argument);
}

TEST_CASE("sample_loop determinism and degenerate one-step loop") {
    NoiseSchedule s = tiny_sched();
    auto eps_fn = [](const NoisySample& x, const ConditionSpec&) {
        std::vector<float> out(x.tensor.data.size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = 0.1f * x.tensor.data[i];
        return out;
    };
    VideoShape shape{1, 1, 4, 1};
    VideoTensor a = sample_loop(eps_fn, s, shape, ConditionSpec::null_cond(), 5);
    VideoTensor b = sample_loop(eps_fn, s, shape, ConditionSpec::null_cond(), 5);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
    VideoTensor c = sample_loop(eps_fn, s, shape, ConditionSpec::null_cond(), 6);
    CHECK(std::memcmp(a.data.data(), c.data.data(), a.data.size() * sizeof(float)) != 0);

    // degenerate single-step schedule: output is one deterministic step of
    // the initial noise (step_sigma = 0 at t=1)
    NoiseSchedule one;
    one.num_steps = 1;
    one.logsnr = {0.0};
    one.alpha_bar = {0.5};
    one.one_minus_alpha_bar = {0.5};
    one.sigma_bar = {std::sqrt(0.5)};
    one.recip_sqrt_alpha = {1.0 / std::sqrt(0.5)};
    one.eps_coef = {0.5 / std::sqrt(0.5)};
    one.step_sigma = {0.0};
    auto zero_fn = [](const NoisySample& x, const ConditionSpec&) {
        return std::vector<float>(x.tensor.data.size(), 0.0f);
    };
    VideoTensor d = sample_loop(zero_fn, one, shape, ConditionSpec::null_cond(), 9);
    RngStream init(9, purpose::kSampleInit, 0);
    for (int i = 0; i < 4; ++i) {
        float z = init.normal_f();
        CHECK(d.data[static_cast<size_t>(i)] ==
              doctest::Approx(z / std::sqrt(0.5)).epsilon(1e-6));
    }
}

TEST_CASE("sample_loop with the analytic Gaussian score hits target moments") {
    // target N(mu, v): the analytic noisy score drives the full reverse
    // chain; enough steps keep the small-variance discretization bias
    // inside the 3-standard-error band
    NoiseSchedule s = make_schedule(768, -16.0, 16.0);
    GMMSpec g;
    g.means = {{0.8}};
    g.variances = {{0.49}};
    g.weights = {1.0};

    auto eps_fn = [&](const NoisySample& x, const ConditionSpec&) {
        std::vector<double> pt{static_cast<double>(x.tensor.data[0])};
        std::vector<double> score = oracle::gmm_noisy_score(pt, x.step, g, s);
        double sb = s.sigma_bar_at(x.step);
        return std::vector<float>{static_cast<float>(-score[0] * sb)};
    };
    VideoShape shape{1, 1, 1, 1};
    const int n = 10000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        VideoTensor out = sample_loop(eps_fn, s, shape, ConditionSpec::null_cond(), 1000 + i);
        double v = out.data[0];
        mean += v;
        m2 += v * v;
    }
    mean /= n;
    double var = m2 / n - mean * mean;
    double se_mean = std::sqrt(0.49 / n);
    double se_var = 0.49 * std::sqrt(2.0 / n);
    CHECK(std::abs(mean - 0.8) < 3.0 * se_mean);
    CHECK(std::abs(var - 0.49) < 3.0 * se_var);
}

TEST_CASE("denoising_loss oracles") {
    NoiseSchedule s = make_schedule(24, -10.0, 10.0);
    std::vector<std::pair<VideoTensor, ConditionSpec>> batch;
    batch.emplace_back(flat({0.2f, -0.6f, 0.9f}), ConditionSpec::null_cond());
    batch.emplace_back(flat({-0.1f, 0.4f, 0.0f}), ConditionSpec::null_cond());
    batch.emplace_back(flat({1.0f, 1.0f, -1.0f}), ConditionSpec::null_cond());

    SUBCASE("perfect predictor gives zero loss") {
        // leak the true eps by replaying the keyed draw
        int item = 0;
        auto leak = [&](const NoisySample&, const ConditionSpec&) {
            auto [t, eps] = draw_loss_noise(555, static_cast<uint64_t>(item++), s.num_steps, 3);
            return eps;
        };
        CHECK(denoising_loss(leak, batch, s, 555) == doctest::Approx(0.0));
    }

    SUBCASE("zero predictor reduces to mean ||eps||^2") {
        auto zero = [](const NoisySample& x, const ConditionSpec&) {
            return std::vector<float>(x.tensor.data.size(), 0.0f);
        };
        double got = denoising_loss(zero, batch, s, 99);
        double want = 0.0;
        for (size_t i = 0; i < batch.size(); ++i) {
            auto [t, eps] = draw_loss_noise(99, i, s.num_steps, 3);
            for (float e : eps) want += static_cast<double>(e) * e;
        }
        want /= batch.size();
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }

    SUBCASE("matches the straight-line re-implementation on a fixed seed") {
        auto predict = [](const NoisySample& x, const ConditionSpec&) {
            std::vector<float> out(x.tensor.data.size());
            for (size_t i = 0; i < out.size(); ++i)
                out[i] = 0.5f * x.tensor.data[i] - 0.2f;
            return out;
        };
        double got = denoising_loss(predict, batch, s, 314159);

        std::vector<std::vector<float>> raw;
        for (auto& [v, c] : batch) raw.push_back(v.data);
        auto predict_d = [](const std::vector<double>& noisy, int) {
            std::vector<double> out(noisy.size());
            for (size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * noisy[i] - 0.2;
            return out;
        };
        double want = vad_test::oracle_denoising_loss(raw, predict_d, 314159, 24, -10.0, 10.0);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }

    SUBCASE("empty batch is rejected") {
        auto zero = [](const NoisySample& x, const ConditionSpec&) {
            return std::vector<float>(x.tensor.data.size(), 0.0f);
        };
        std::vector<std::pair<VideoTensor, ConditionSpec>> empty;
        CHECK_THROWS_AS(denoising_loss(zero, empty, s, 1), std::invalid_argument);
    }
}

TEST_CASE("tweedie posterior mean") {
    SUBCASE("standard normal prior, sigma 1, y 2 gives exactly 1") {
        // score of y ~ N(0, 1 + sigma^2) at y=2 is -2/2 = -1
        std::vector<double> y{2.0};
        std::vector<double> score{-1.0};
        auto m = tweedie_posterior_mean(y, score, 1.0);
        CHECK(m[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("point-mass prior pulls to the atom") {
        // prior ~ N(mu, v) with v -> 0: score = (mu - y)/sigma^2
        double mu = 0.37;
        for (double y : {-1.0, 0.0, 2.5}) {
            double sigma = 0.8;
            std::vector<double> yy{y};
            std::vector<double> score{(mu - y) / (sigma * sigma)};
            auto m = tweedie_posterior_mean(yy, score, sigma);
            CHECK(m[0] == doctest::Approx(mu).epsilon(1e-12));
        }
    }
    SUBCASE("two-component mixture agrees with quadrature") {
        GMMSpec g;
        g.means = {{-1.0}, {1.5}};
        g.variances = {{0.3}, {0.5}};
        g.weights = {0.4, 0.6};
        double sigma = 0.7;
        for (double y : {-0.5, 0.2, 1.0}) {
            std::vector<double> yy{y};
            std::vector<double> score = oracle::gmm_score(yy, g, sigma);
            auto m = tweedie_posterior_mean(yy, score, sigma);
            auto q = oracle::posterior_mean_quadrature(yy, g, sigma);
            CHECK(m[0] == doctest::Approx(q[0]).epsilon(1e-3));
        }
    }
    SUBCASE("nonpositive sigma rejected") {
        std::vector<double> y{0.0}, score{0.0};
        CHECK_THROWS_AS(tweedie_posterior_mean(y, score, 0.0), std::invalid_argument);
    }
}

TEST_CASE("eps/score conversions invert within float rounding") {
    NoiseSchedule s = tiny_sched();
    std::vector<float> eps{0.5f, -1.25f, 3.0f, 0.0f};
    for (int t : {1, 8, 16}) {
        auto score = eps_to_score(eps, t, s);
        auto back = score_to_eps(score, t, s);
        for (size_t i = 0; i < eps.size(); ++i) {
            float tol = 4.0f * std::abs(eps[i]) * 1.1920929e-7f;
            CHECK(std::abs(back[i] - eps[i]) <= tol);
        }
    }
    std::vector<float> zero{0.0f, 0.0f};
    auto score = eps_to_score(zero, 4, s);
    CHECK(score[0] == 0.0f);
    CHECK(score[1] == 0.0f);
}
