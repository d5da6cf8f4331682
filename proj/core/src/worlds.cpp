#include "vidadapt/worlds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vidadapt/binio.hpp"
#include "vidadapt/denoiser.hpp"
#include "vidadapt/rng.hpp"

namespace vad {

namespace {

constexpr int kShapeHalf = 2;  // all shapes fit a 5x5 footprint

const char* dynamics_name(Dynamics d) {
    switch (d) {
        case Dynamics::kStatic: return "static";
        case Dynamics::kBounce: return "bounce";
        case Dynamics::kDrift: return "drift";
    }
    return "?";
}

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::kSquare: return "square";
        case ShapeKind::kPlus: return "plus";
        case ShapeKind::kDiamond: return "diamond";
    }
    return "?";
}

const char* texture_name(Texture t) {
    return t == Texture::kSolid ? "solid" : "checker";
}

bool shape_mask(ShapeKind kind, int dx, int dy) {
    switch (kind) {
        case ShapeKind::kSquare:
            return std::abs(dx) <= kShapeHalf && std::abs(dy) <= kShapeHalf;
        case ShapeKind::kPlus:
            return (std::abs(dx) <= kShapeHalf && std::abs(dy) <= 1) ||
                   (std::abs(dy) <= kShapeHalf && std::abs(dx) <= 1);
        case ShapeKind::kDiamond:
            return std::abs(dx) + std::abs(dy) <= kShapeHalf;
    }
    return false;
}

struct MotionState {
    double px, py, vx, vy;
};

MotionState draw_motion(const ToyVideoSpec& spec, uint64_t record_index) {
    RngStream rng(spec.seed, purpose::kWorldMotion, record_index);
    double lo = kShapeHalf, hi = spec.grid - 1 - kShapeHalf;
    MotionState m{};
    m.px = lo + rng.uniform() * (hi - lo);
    m.py = lo + rng.uniform() * (hi - lo);
    if (spec.dynamics == Dynamics::kStatic) {
        m.vx = m.vy = 0.0;
    } else {
        // continuous speeds in [0.7, 2.3] px/frame keep trajectories distinct
        auto vel = [&] {
            double mag = 0.7 + rng.uniform() * 1.6;
            return rng.uniform() < 0.5 ? -mag : mag;
        };
        m.vx = vel();
        m.vy = vel();
    }
    return m;
}

void advance(MotionState& m, Dynamics dyn, int grid) {
    double lo = kShapeHalf, hi = grid - 1 - kShapeHalf;
    m.px += m.vx;
    m.py += m.vy;
    if (dyn == Dynamics::kBounce) {
        if (m.px > hi) { m.px = 2 * hi - m.px; m.vx = -m.vx; }
        if (m.px < lo) { m.px = 2 * lo - m.px; m.vx = -m.vx; }
        if (m.py > hi) { m.py = 2 * hi - m.py; m.vy = -m.vy; }
        if (m.py < lo) { m.py = 2 * lo - m.py; m.vy = -m.vy; }
    }
    // drift wraps on the torus at render time; static never moves
}

void render_frame(VideoTensor& video, int frame, const MotionState& m,
                  const ToyVideoSpec& spec) {
    int g = spec.grid;
    float bg = spec.render.polarity > 0 ? -1.0f : 1.0f;
    float fg = -bg;
    for (int y = 0; y < g; ++y)
        for (int x = 0; x < g; ++x) video.at(frame, y, x, 0) = bg;

    int cx = static_cast<int>(std::lround(m.px));
    int cy = static_cast<int>(std::lround(m.py));
    for (int dy = -kShapeHalf; dy <= kShapeHalf; ++dy) {
        for (int dx = -kShapeHalf; dx <= kShapeHalf; ++dx) {
            if (!shape_mask(spec.render.shape, dx, dy)) continue;
            int x = cx + dx, y = cy + dy;
            if (spec.dynamics == Dynamics::kDrift) {
                x = ((x % g) + g) % g;
                y = ((y % g) + g) % g;
            }
            if (x < 0 || x >= g || y < 0 || y >= g) continue;
            float v = fg;
            if (spec.render.texture == Texture::kChecker && ((dx + dy) & 1)) v = fg * 0.5f;
            video.at(frame, y, x, 0) = v;
        }
    }
}

}  // namespace

void GMMSpec::validate() const {
    if (means.empty() || means.size() != variances.size() || means.size() != weights.size())
        throw std::invalid_argument("gmm spec: inconsistent component counts");
    size_t d = means[0].size();
    double wsum = 0.0;
    for (size_t i = 0; i < means.size(); ++i) {
        if (means[i].size() != d || variances[i].size() != d)
            throw std::invalid_argument("gmm spec: components must share a dimension");
        for (double v : variances[i])
            if (!(v > 0.0)) throw std::invalid_argument("gmm spec: variances must be positive");
        if (!(weights[i] > 0.0)) throw std::invalid_argument("gmm spec: weights must be positive");
        wsum += weights[i];
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw std::invalid_argument("gmm spec: weights must sum to 1");
}

std::vector<double> gen_gmm_samples(const GMMSpec& spec, int n, uint64_t seed) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("gen_gmm_samples: n must be >= 1");
    int d = spec.dim();
    std::vector<double> out(static_cast<size_t>(n) * d);
    std::vector<double> cum(spec.weights.size());
    double acc = 0.0;
    for (size_t i = 0; i < spec.weights.size(); ++i) {
        acc += spec.weights[i];
        cum[i] = acc;
    }
    for (int s = 0; s < n; ++s) {
        RngStream comp_rng(seed, purpose::kGmmComponent, static_cast<uint64_t>(s));
        double u = comp_rng.uniform();
        size_t comp = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
        if (comp >= spec.weights.size()) comp = spec.weights.size() - 1;
        RngStream draw_rng(seed, purpose::kGmmDraw, static_cast<uint64_t>(s));
        for (int k = 0; k < d; ++k)
            out[static_cast<size_t>(s) * d + k] =
                spec.means[comp][k] + std::sqrt(spec.variances[comp][k]) * draw_rng.normal();
    }
    return out;
}

RenderParams style_render_params(int style_id) {
    switch (style_id) {
        case 0: return {ShapeKind::kSquare, +1, Texture::kSolid};
        case 1: return {ShapeKind::kPlus, +1, Texture::kSolid};
        case 2: return {ShapeKind::kDiamond, -1, Texture::kChecker};
        case 3: return {ShapeKind::kSquare, -1, Texture::kSolid};
        default: throw std::invalid_argument("style id out of vocabulary");
    }
}

int style_vocab_size() { return 4; }

void ToyVideoSpec::validate() const {
    if (grid < 8) throw std::invalid_argument("toy video spec: grid must be >= 8");
    if (frames < 2) throw std::invalid_argument("toy video spec: frames must be >= 2");
    if (style_id < 0 || style_id >= style_vocab_size())
        throw std::invalid_argument("toy video spec: style id out of vocabulary");
    if (count < 1) throw std::invalid_argument("toy video spec: count must be >= 1");
}

std::string ToyVideoSpec::echo() const {
    std::ostringstream os;
    os << "grid=" << grid << " frames=" << frames << " dynamics=" << dynamics_name(dynamics)
       << " style=" << style_id << " shape=" << shape_name(render.shape)
       << " polarity=" << render.polarity << " texture=" << texture_name(render.texture)
       << " count=" << count << " seed=" << seed << " first_frame=" << attach_first_frame
       << " edges=" << attach_edges;
    return os.str();
}

Dataset gen_toy_videos(const ToyVideoSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.spec_echo = spec.echo();
    ds.shape = {spec.frames, spec.grid, spec.grid, 1};
    ds.has_first_frame = spec.attach_first_frame;
    ds.has_edges = spec.attach_edges;
    ds.records.reserve(static_cast<size_t>(spec.count));
    for (int r = 0; r < spec.count; ++r) {
        MotionState m = draw_motion(spec, static_cast<uint64_t>(r));
        DatasetRecord rec;
        rec.video = VideoTensor(ds.shape);
        rec.label_id = spec.style_id;
        for (int f = 0; f < spec.frames; ++f) {
            render_frame(rec.video, f, m, spec);
            advance(m, spec.dynamics, spec.grid);
        }
        if (spec.attach_first_frame) {
            VideoTensor ff({1, spec.grid, spec.grid, 1});
            std::copy(rec.video.data.begin(),
                      rec.video.data.begin() + static_cast<long>(spec.grid) * spec.grid,
                      ff.data.begin());
            rec.first_frame = std::move(ff);
        }
        if (spec.attach_edges) rec.edge_video = sobel_edges(rec.video);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

CorpusSplit split_corpora(const std::vector<ToyVideoSpec>& broad_specs,
                          const ToyVideoSpec& adapt_spec) {
    if (broad_specs.empty()) throw std::invalid_argument("split_corpora: no broad specs");
    std::set<uint64_t> seeds;
    std::set<int> styles;
    for (const auto& s : broad_specs) {
        if (!seeds.insert(s.seed).second)
            throw std::invalid_argument("split_corpora: overlapping seeds in broad specs");
        styles.insert(s.style_id);
    }
    if (seeds.count(adapt_spec.seed))
        throw std::invalid_argument("split_corpora: adapt seed overlaps a broad seed");
    for (int v = 0; v < style_vocab_size(); ++v)
        if (!styles.count(v))
            throw std::invalid_argument("split_corpora: broad specs must cover every style id");

    CorpusSplit out;
    bool first = true;
    std::ostringstream echo;
    for (const auto& s : broad_specs) {
        Dataset d = gen_toy_videos(s);
        if (first) {
            out.pretrain.shape = d.shape;
            out.pretrain.has_first_frame = d.has_first_frame;
            out.pretrain.has_edges = d.has_edges;
            first = false;
        } else if (!(d.shape == out.pretrain.shape)) {
            throw std::invalid_argument("split_corpora: broad specs must share dimensions");
        }
        if (echo.tellp() > 0) echo << " | ";
        echo << d.spec_echo;
        for (auto& r : d.records) out.pretrain.records.push_back(std::move(r));
    }
    out.pretrain.spec_echo = echo.str();

    Dataset adapt = gen_toy_videos(adapt_spec);
    size_t n = adapt.records.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    RngStream shuffle(derive_seed(adapt_spec.seed, 0x5917), purpose::kShuffle, 0);
    for (size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[shuffle.uniform_int(i + 1)]);

    size_t n_test = static_cast<size_t>(std::lround(0.10 * static_cast<double>(n)));
    out.adapt_test.shape = out.adapt_train.shape = adapt.shape;
    out.adapt_test.has_first_frame = out.adapt_train.has_first_frame = adapt.has_first_frame;
    out.adapt_test.has_edges = out.adapt_train.has_edges = adapt.has_edges;
    out.adapt_train.spec_echo = adapt.spec_echo + " split=train90";
    out.adapt_test.spec_echo = adapt.spec_echo + " split=test10";
    for (size_t i = 0; i < n; ++i) {
        auto& dst = (i < n_test) ? out.adapt_test : out.adapt_train;
        dst.records.push_back(std::move(adapt.records[order[i]]));
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
    std::ostringstream header;
    header << "spec = " << ds.spec_echo << "\n"
           << "count = " << ds.records.size() << "\n"
           << "frames = " << ds.shape.frames << "\n"
           << "height = " << ds.shape.height << "\n"
           << "width = " << ds.shape.width << "\n"
           << "channels = " << ds.shape.channels << "\n"
           << "has_first_frame = " << (ds.has_first_frame ? 1 : 0) << "\n"
           << "has_edges = " << (ds.has_edges ? 1 : 0) << "\n";
    binio::write_header(os, "VADD", 1, header.str());
    for (const auto& rec : ds.records) {
        binio::write_u32le(os, static_cast<uint32_t>(rec.label_id));
        binio::write_f32le(os, rec.video.data);
        if (ds.has_first_frame) binio::write_f32le(os, rec.first_frame->data);
        if (ds.has_edges) binio::write_f32le(os, rec.edge_video->data);
    }
    if (!os) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
    std::string header = binio::read_header(is, "VADD", 1, "dataset");
    auto kv = binio::parse_kv(header);
    Dataset ds;
    ds.spec_echo = binio::kv_get(kv, "spec");
    size_t count = std::stoul(binio::kv_get(kv, "count"));
    ds.shape = {std::stoi(binio::kv_get(kv, "frames")), std::stoi(binio::kv_get(kv, "height")),
                std::stoi(binio::kv_get(kv, "width")), std::stoi(binio::kv_get(kv, "channels"))};
    ds.has_first_frame = binio::kv_get(kv, "has_first_frame") == "1";
    ds.has_edges = binio::kv_get(kv, "has_edges") == "1";
    ds.records.resize(count);
    for (auto& rec : ds.records) {
        rec.label_id = static_cast<int>(binio::read_u32le(is));
        rec.video = VideoTensor(ds.shape);
        binio::read_f32le(is, rec.video.data);
        if (ds.has_first_frame) {
            VideoTensor ff({1, ds.shape.height, ds.shape.width, ds.shape.channels});
            binio::read_f32le(is, ff.data);
            rec.first_frame = std::move(ff);
        }
        if (ds.has_edges) {
            VideoTensor ev(ds.shape);
            binio::read_f32le(is, ev.data);
            rec.edge_video = std::move(ev);
        }
    }
    return ds;
}

}  // namespace vad
