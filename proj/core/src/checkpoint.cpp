#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vidadapt/binio.hpp"
#include "vidadapt/denoiser.hpp"

namespace vad {

namespace binio {

std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::istringstream is(text);
    std::string line;
    auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("header: malformed line: " + line);
        kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

std::string kv_get(const std::vector<std::pair<std::string, std::string>>& kv,
                   const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    throw std::runtime_error("header: missing key " + key);
}

}  // namespace binio

namespace {

const char* family_name(NetFamily f) { return f == NetFamily::kMlp ? "mlp" : "conv"; }

NetFamily family_from(const std::string& s) {
    if (s == "mlp") return NetFamily::kMlp;
    if (s == "conv") return NetFamily::kConv;
    throw std::runtime_error("checkpoint: unknown family " + s);
}

const char* cond_mode_name(CondMode m) {
    switch (m) {
        case CondMode::kNone: return "none";
        case CondMode::kFirstFrame: return "first_frame";
        case CondMode::kEdge: return "edge";
    }
    return "?";
}

CondMode cond_mode_from(const std::string& s) {
    if (s == "none") return CondMode::kNone;
    if (s == "first_frame") return CondMode::kFirstFrame;
    if (s == "edge") return CondMode::kEdge;
    throw std::runtime_error("checkpoint: unknown conditioning mode " + s);
}

std::string fmt_double(double v) {
    char buf[32];
    snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void save_checkpoint(const DenoiserCheckpoint& ckpt, const std::string& path) {
    ckpt.descriptor.validate();
    if (static_cast<int64_t>(ckpt.params.size()) != ckpt.descriptor.param_count())
        throw std::invalid_argument("save_checkpoint: parameter blob length mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);

    const auto& d = ckpt.descriptor;
    std::ostringstream h;
    h << "family = " << family_name(d.family) << "\n"
      << "frames = " << d.input_shape.frames << "\n"
      << "height = " << d.input_shape.height << "\n"
      << "width = " << d.input_shape.width << "\n"
      << "channels = " << d.input_shape.channels << "\n"
      << "hidden = " << d.hidden << "\n"
      << "blocks = " << d.blocks << "\n"
      << "time_embed_dim = " << d.time_embed_dim << "\n"
      << "vocab_size = " << d.vocab_size << "\n"
      << "cond_mode = " << cond_mode_name(d.cond_mode) << "\n"
      << "energy = " << (d.energy_parameterized ? 1 : 0) << "\n"
      << "sched_steps = " << ckpt.schedule.num_steps << "\n"
      << "sched_logsnr_min = " << fmt_double(ckpt.schedule.logsnr_min) << "\n"
      << "sched_logsnr_max = " << fmt_double(ckpt.schedule.logsnr_max) << "\n"
      << "steps_trained = " << ckpt.meta.steps_trained << "\n"
      << "cond_dropout = " << fmt_double(ckpt.meta.cond_dropout) << "\n"
      << "dataset_id = " << ckpt.meta.dataset_id << "\n"
      << "param_count = " << ckpt.params.size() << "\n";
    binio::write_header(os, "VADP", 1, h.str());
    binio::write_f32le(os, ckpt.params);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

DenoiserCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string header = binio::read_header(is, "VADP", 1, "checkpoint");
    auto kv = binio::parse_kv(header);

    DenoiserCheckpoint ckpt;
    auto& d = ckpt.descriptor;
    d.family = family_from(binio::kv_get(kv, "family"));
    d.input_shape = {std::stoi(binio::kv_get(kv, "frames")),
                     std::stoi(binio::kv_get(kv, "height")),
                     std::stoi(binio::kv_get(kv, "width")),
                     std::stoi(binio::kv_get(kv, "channels"))};
    d.hidden = std::stoi(binio::kv_get(kv, "hidden"));
    d.blocks = std::stoi(binio::kv_get(kv, "blocks"));
    d.time_embed_dim = std::stoi(binio::kv_get(kv, "time_embed_dim"));
    d.vocab_size = std::stoi(binio::kv_get(kv, "vocab_size"));
    d.cond_mode = cond_mode_from(binio::kv_get(kv, "cond_mode"));
    d.energy_parameterized = binio::kv_get(kv, "energy") == "1";
    ckpt.schedule.num_steps = std::stoi(binio::kv_get(kv, "sched_steps"));
    ckpt.schedule.logsnr_min = std::stod(binio::kv_get(kv, "sched_logsnr_min"));
    ckpt.schedule.logsnr_max = std::stod(binio::kv_get(kv, "sched_logsnr_max"));
    ckpt.meta.steps_trained = std::stoll(binio::kv_get(kv, "steps_trained"));
    ckpt.meta.cond_dropout = std::stod(binio::kv_get(kv, "cond_dropout"));
    ckpt.meta.dataset_id = binio::kv_get(kv, "dataset_id");

    size_t count = std::stoul(binio::kv_get(kv, "param_count"));
    if (static_cast<int64_t>(count) != d.param_count())
        throw std::runtime_error("load_checkpoint: parameter count does not match descriptor");
    ckpt.params.resize(count);
    binio::read_f32le(is, ckpt.params);
    if (!is) throw std::runtime_error("load_checkpoint: truncated parameter blob");
    for (float p : ckpt.params)
        if (!std::isfinite(p)) throw std::runtime_error("load_checkpoint: non-finite parameter");
    return ckpt;
}

}  // namespace vad
