#include <cmath>
#include <vector>

#include "doctest.h"
#include "vidadapt/nets.hpp"
#include "vidadapt/oracle.hpp"
#include "vidadapt/rng.hpp"

using namespace vad;

namespace {

std::vector<double> random_params(const ArchitectureDescriptor& desc, uint64_t seed) {
    std::vector<double> p(static_cast<size_t>(desc.param_count()));
    RngStream rng(seed, purpose::kParamInit, 0);
    auto segs = param_segments(desc);
    for (const auto& seg : segs)
        for (int64_t i = 0; i < seg.size; ++i)
            p[static_cast<size_t>(seg.offset + i)] = seg.init_scale * rng.normal();
    return p;
}

// finite-difference check of loss_and_grad over every parameter
void check_param_gradients(const ArchitectureDescriptor& desc, const std::vector<double>& x,
                           int t, int label_row, double tol) {
    std::vector<double> params = random_params(desc, 5);
    std::vector<double> target(desc.family == NetFamily::kMlp
                                   ? static_cast<size_t>(desc.input_shape.num_elements())
                                   : static_cast<size_t>(desc.input_shape.num_elements()));
    RngStream trng(9, purpose::kLossNoise, 0);
    for (double& v : target) v = trng.normal();

    std::vector<double> grads(params.size(), 0.0);
    NetEval<double> net{desc, params};
    net.loss_and_grad(x, t, label_row, target, grads);

    auto loss_at = [&](const std::vector<double>& p) {
        NetEval<double> n{desc, p};
        std::vector<double> out(target.size());
        n.predict(x, t, label_row, out);
        double l = 0.0;
        for (size_t i = 0; i < out.size(); ++i) {
            double r = out[i] - target[i];
            l += r * r;
        }
        return l;
    };

    const double h = 1e-6;
    int checked = 0;
    for (size_t j = 0; j < params.size(); ++j) {
        std::vector<double> p = params;
        p[j] += h;
        double lp = loss_at(p);
        p[j] -= 2 * h;
        double lm = loss_at(p);
        double fd = (lp - lm) / (2 * h);
        double denom = std::max({1e-8, std::abs(fd), std::abs(grads[j])});
        CHECK(std::abs(grads[j] - fd) / denom <= tol);
        ++checked;
    }
    CHECK(checked == static_cast<int>(params.size()));
}

}  // namespace

TEST_CASE("param_segments tile the blob exactly") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kMlp;
    d.input_shape = {1, 1, 3, 1};
    d.hidden = 5;
    d.blocks = 2;
    d.time_embed_dim = 4;
    d.vocab_size = 3;
    auto segs = param_segments(d);
    int64_t covered = 0;
    for (size_t i = 0; i < segs.size(); ++i) {
        CHECK(segs[i].offset == covered);
        covered += segs[i].size;
    }
    CHECK(covered == d.param_count());

    ArchitectureDescriptor c;
    c.family = NetFamily::kConv;
    c.input_shape = {3, 5, 5, 1};
    c.hidden = 4;
    c.blocks = 2;
    c.time_embed_dim = 6;
    c.vocab_size = 2;
    c.cond_mode = CondMode::kFirstFrame;
    auto csegs = param_segments(c);
    covered = 0;
    for (size_t i = 0; i < csegs.size(); ++i) {
        CHECK(csegs[i].offset == covered);
        covered += csegs[i].size;
    }
    CHECK(covered == c.param_count());
}

TEST_CASE("descriptor validation") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kMlp;
    d.input_shape = {1, 1, 2, 1};
    d.cond_mode = CondMode::kEdge;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.cond_mode = CondMode::kNone;
    d.time_embed_dim = 3;  // must be even
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.time_embed_dim = 4;
    d.vocab_size = 0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.vocab_size = 1;
    CHECK_NOTHROW(d.validate());

    ArchitectureDescriptor c;
    c.family = NetFamily::kConv;
    c.input_shape = {2, 4, 4, 1};
    c.energy_parameterized = true;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("mlp parameter gradients match finite differences") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kMlp;
    d.input_shape = {1, 1, 3, 1};
    d.hidden = 5;
    d.blocks = 2;
    d.time_embed_dim = 4;
    d.vocab_size = 2;
    std::vector<double> x{0.4, -0.9, 0.15};
    check_param_gradients(d, x, 3, 1, 1e-4);
    check_param_gradients(d, x, 7, 2, 1e-4);  // null row gets gradient too
}

TEST_CASE("ten-parameter toy descriptor passes the same check") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kMlp;
    d.input_shape = {1, 1, 2, 1};
    d.hidden = 1;
    d.blocks = 1;
    d.time_embed_dim = 0;
    d.vocab_size = 1;
    CHECK(d.param_count() == 9);  // w_in 2 + b 1 + blk 1+1 + w_out 2 + b 2
    std::vector<double> x{0.3, -0.2};
    check_param_gradients(d, x, 2, 0, 1e-4);
}

TEST_CASE("conv parameter gradients match finite differences") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kConv;
    d.input_shape = {3, 4, 4, 1};
    d.hidden = 3;
    d.blocks = 1;
    d.time_embed_dim = 4;
    d.vocab_size = 2;
    std::vector<double> x(static_cast<size_t>(3 * 4 * 4));
    RngStream rng(3, purpose::kGmmDraw, 0);
    for (double& v : x) v = rng.normal();
    check_param_gradients(d, x, 2, 0, 1e-4);
}

TEST_CASE("conv gradients with condition channels") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kConv;
    d.input_shape = {2, 4, 4, 1};
    d.hidden = 2;
    d.blocks = 1;
    d.time_embed_dim = 4;
    d.vocab_size = 1;
    d.cond_mode = CondMode::kEdge;
    std::vector<double> x(static_cast<size_t>(2 * 2 * 4 * 4));  // data + aux channels
    RngStream rng(4, purpose::kGmmDraw, 0);
    for (double& v : x) v = rng.normal();
    check_param_gradients(d, x, 1, 0, 1e-4);
}

TEST_CASE("energy-parameterized eps is the exact energy gradient") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kMlp;
    d.input_shape = {1, 1, 4, 1};
    d.hidden = 8;
    d.blocks = 2;
    d.time_embed_dim = 4;
    d.vocab_size = 2;
    d.energy_parameterized = true;
    std::vector<double> params = random_params(d, 21);
    NetEval<double> net{d, params};

    RngStream rng(5, purpose::kGmmDraw, 0);
    for (int trial = 0; trial < 4; ++trial) {
        std::vector<double> x(4);
        for (double& v : x) v = rng.normal();
        int t = 1 + static_cast<int>(rng.uniform_int(8));
        std::vector<double> eps(4);
        net.predict(x, t, 0, eps);
        auto fd = oracle::finite_diff_grad(
            [&](std::span<const double> p) {
                return net.energy(std::vector<double>(p.begin(), p.end()), t, 0);
            },
            x, 1e-5);
        for (int i = 0; i < 4; ++i) {
            double denom = std::max(1e-8, std::abs(fd[i]));
            CHECK(std::abs(eps[i] - fd[i]) / denom <= 1e-4);
        }
    }
}

TEST_CASE("energy-parameterized eps is a conservative field (curl test)") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kMlp;
    d.input_shape = {1, 1, 5, 1};
    d.hidden = 6;
    d.blocks = 1;
    d.time_embed_dim = 4;
    d.vocab_size = 1;
    d.energy_parameterized = true;
    std::vector<double> params = random_params(d, 8);
    NetEval<double> net{d, params};

    auto eps_at = [&](std::vector<double> x, int t) {
        std::vector<double> out(x.size());
        net.predict(x, t, 0, out);
        return out;
    };
    RngStream rng(6, purpose::kGmmDraw, 0);
    const double h = 1e-5;
    for (int trial = 0; trial < 6; ++trial) {
        std::vector<double> x(5);
        for (double& v : x) v = rng.normal();
        int i = static_cast<int>(rng.uniform_int(5));
        int j = static_cast<int>(rng.uniform_int(5));
        if (i == j) j = (j + 1) % 5;
        int t = 2;
        // d eps_i / d x_j via central differences, both orders
        auto xp = x, xm = x;
        xp[static_cast<size_t>(j)] += h;
        xm[static_cast<size_t>(j)] -= h;
        double dij = (eps_at(xp, t)[static_cast<size_t>(i)] -
                      eps_at(xm, t)[static_cast<size_t>(i)]) / (2 * h);
        xp = x; xm = x;
        xp[static_cast<size_t>(i)] += h;
        xm[static_cast<size_t>(i)] -= h;
        double dji = (eps_at(xp, t)[static_cast<size_t>(j)] -
                      eps_at(xm, t)[static_cast<size_t>(j)]) / (2 * h);
        CHECK(std::abs(dij - dji) <= 1e-3);
    }
}

TEST_CASE("energy call rejected on standard descriptors; training rejected on energy ones") {
    ArchitectureDescriptor d;
    d.family = NetFamily::kMlp;
    d.input_shape = {1, 1, 2, 1};
    std::vector<double> params = random_params(d, 1);
    NetEval<double> net{d, params};
    std::vector<double> x{0.0, 0.0};
    CHECK_THROWS_AS(net.energy(x, 1, 0), std::logic_error);

    ArchitectureDescriptor e = d;
    e.energy_parameterized = true;
    std::vector<double> ep = random_params(e, 1);
    NetEval<double> enet{e, ep};
    std::vector<double> target{0.0, 0.0};
    std::vector<double> grads(ep.size());
    CHECK_THROWS_AS(enet.loss_and_grad(x, 1, 0, target, grads), std::invalid_argument);
}
