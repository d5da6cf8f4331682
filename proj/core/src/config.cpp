#include "vidadapt/config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vad {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
    throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}

long long to_int(const std::string& v) {
    size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("not an integer: " + v);
    return x;
}

uint64_t to_u64(const std::string& v) {
    size_t used = 0;
    unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("not an unsigned integer: " + v);
    return x;
}

double to_double(const std::string& v) {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("not a number: " + v);
    return x;
}

bool to_bool(const std::string& v) {
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw std::invalid_argument("not a boolean (use 0/1): " + v);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Entry {
    std::string section, key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
    bool is_path = false;
};

struct Registry {
    std::vector<Entry> entries;

    void add(const std::string& sec, const std::string& key,
             std::function<void(const std::string&)> set, std::function<std::string()> get,
             bool is_path = false) {
        entries.push_back({sec, key, std::move(set), std::move(get), is_path});
    }
    void add_int(const std::string& s, const std::string& k, int& ref) {
        add(s, k, [&ref](const std::string& v) { ref = static_cast<int>(to_int(v)); },
            [&ref] { return std::to_string(ref); });
    }
    void add_u64(const std::string& s, const std::string& k, uint64_t& ref) {
        add(s, k, [&ref](const std::string& v) { ref = to_u64(v); },
            [&ref] { return std::to_string(ref); });
    }
    void add_double(const std::string& s, const std::string& k, double& ref) {
        add(s, k, [&ref](const std::string& v) { ref = to_double(v); },
            [&ref] { return fmt_double(ref); });
    }
    void add_bool(const std::string& s, const std::string& k, bool& ref) {
        add(s, k, [&ref](const std::string& v) { ref = to_bool(v); },
            [&ref] { return ref ? std::string("1") : std::string("0"); });
    }
    void add_string(const std::string& s, const std::string& k, std::string& ref,
                    bool is_path = false) {
        add(s, k, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }, is_path);
    }
    void add_int_list(const std::string& s, const std::string& k, std::vector<int>& ref) {
        add(s, k,
            [&ref](const std::string& v) {
                ref.clear();
                for (const auto& item : split_list(v)) ref.push_back(static_cast<int>(to_int(item)));
            },
            [&ref] {
                std::string out;
                for (size_t i = 0; i < ref.size(); ++i)
                    out += (i ? "," : "") + std::to_string(ref[i]);
                return out;
            });
    }
    void add_u64_list(const std::string& s, const std::string& k, std::vector<uint64_t>& ref) {
        add(s, k,
            [&ref](const std::string& v) {
                ref.clear();
                for (const auto& item : split_list(v)) ref.push_back(to_u64(item));
            },
            [&ref] {
                std::string out;
                for (size_t i = 0; i < ref.size(); ++i)
                    out += (i ? "," : "") + std::to_string(ref[i]);
                return out;
            });
    }
    void add_string_list(const std::string& s, const std::string& k,
                         std::vector<std::string>& ref) {
        add(s, k, [&ref](const std::string& v) { ref = split_list(v); },
            [&ref] {
                std::string out;
                for (size_t i = 0; i < ref.size(); ++i) out += (i ? "," : "") + ref[i];
                return out;
            });
    }
    void add_family(const std::string& s, const std::string& k, NetFamily& ref) {
        add(s, k,
            [&ref](const std::string& v) {
                if (v == "mlp") ref = NetFamily::kMlp;
                else if (v == "conv") ref = NetFamily::kConv;
                else throw std::invalid_argument("family must be mlp or conv: " + v);
            },
            [&ref] { return ref == NetFamily::kMlp ? std::string("mlp") : std::string("conv"); });
    }
    void add_cond_mode(const std::string& s, const std::string& k, CondMode& ref) {
        add(s, k,
            [&ref](const std::string& v) {
                if (v == "none") ref = CondMode::kNone;
                else if (v == "first_frame") ref = CondMode::kFirstFrame;
                else if (v == "edge") ref = CondMode::kEdge;
                else throw std::invalid_argument("cond_mode must be none|first_frame|edge: " + v);
            },
            [&ref] {
                switch (ref) {
                    case CondMode::kNone: return std::string("none");
                    case CondMode::kFirstFrame: return std::string("first_frame");
                    default: return std::string("edge");
                }
            });
    }
};

void register_model(Registry& r, const std::string& sec, ModelSection& m) {
    r.add_family(sec, "family", m.family);
    r.add_int(sec, "hidden", m.hidden);
    r.add_int(sec, "blocks", m.blocks);
    r.add_int(sec, "time_embed_dim", m.time_embed_dim);
    r.add_int(sec, "vocab_size", m.vocab_size);
    r.add_cond_mode(sec, "cond_mode", m.cond_mode);
    r.add_bool(sec, "energy", m.energy);
}

void register_train(Registry& r, const std::string& sec, TrainSection& t) {
    r.add_int(sec, "steps", t.steps);
    r.add_int(sec, "batch_size", t.batch_size);
    r.add_double(sec, "learning_rate", t.learning_rate);
    r.add_double(sec, "cond_dropout", t.cond_dropout);
    r.add_double(sec, "grad_clip", t.grad_clip);
}

Registry build_registry(RunConfig& cfg) {
    Registry r;
    r.add_u64("", "seed", cfg.seed);
    r.add_string("", "out_dir", cfg.out_dir);

    r.add_int("schedule", "steps", cfg.schedule.num_steps);
    r.add_double("schedule", "logsnr_min", cfg.schedule.logsnr_min);
    r.add_double("schedule", "logsnr_max", cfg.schedule.logsnr_max);

    register_model(r, "pretrained_model", cfg.pretrained_model);
    register_model(r, "adapter_model", cfg.adapter_model);

    r.add_int("data", "grid", cfg.data.grid);
    r.add_int("data", "frames", cfg.data.frames);
    r.add_string("data", "dynamics", cfg.data.dynamics);
    r.add_int_list("data", "broad_styles", cfg.data.broad_styles);
    r.add_int("data", "broad_count_per_style", cfg.data.broad_count_per_style);
    r.add_int("data", "adapt_style", cfg.data.adapt_style);
    r.add_int("data", "adapt_count", cfg.data.adapt_count);
    r.add_u64("data", "data_seed", cfg.data.data_seed);
    r.add_bool("data", "attach_first_frame", cfg.data.attach_first_frame);
    r.add_bool("data", "attach_edges", cfg.data.attach_edges);

    register_train(r, "train_pretrained", cfg.train_pretrained);
    register_train(r, "train_adapter", cfg.train_adapter);

    r.add_double("composition", "gamma", cfg.composition.gamma);
    r.add_double("composition", "alpha", cfg.composition.alpha);
    r.add_double("composition", "cutoff_fraction", cfg.composition.cutoff_fraction);
    r.add_int("composition", "mcmc_steps", cfg.composition.mcmc_steps);
    r.add_double("composition", "mcmc_step_size", cfg.composition.mcmc_step_size);

    r.add_int("benchmark", "num_samples", cfg.benchmark.num_samples);
    r.add_u64_list("benchmark", "seeds", cfg.benchmark.seeds);
    r.add_u64("benchmark", "probe_seed", cfg.benchmark.probe_seed);
    r.add_int("benchmark", "probe_kernels", cfg.benchmark.probe_kernels);
    r.add_string_list("benchmark", "rows", cfg.benchmark.rows);
    r.add_int("benchmark", "threads", cfg.benchmark.threads);
    r.add_double("benchmark", "cfg_mix_weight", cfg.benchmark.cfg_mix_weight);
    r.add_string("benchmark", "pretrain_data", cfg.benchmark.pretrain_data, true);
    r.add_string("benchmark", "adapt_train_data", cfg.benchmark.adapt_train_data, true);
    r.add_string("benchmark", "adapt_test_data", cfg.benchmark.adapt_test_data, true);

    r.add_string("serve", "host", cfg.serve.host);
    r.add_int("serve", "port", cfg.serve.port);
    r.add_double("serve", "timeout_seconds", cfg.serve.timeout_seconds);
    return r;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    Registry reg = build_registry(cfg);

    std::map<std::pair<std::string, std::string>, int> seen;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    bool section_known = true;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string line = raw;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(origin, line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            section_known = false;
            for (const auto& e : reg.entries)
                if (e.section == section) section_known = true;
            if (!section_known) fail(origin, line_no, "unknown section [" + section + "]");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) fail(origin, line_no, "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(origin, line_no, "empty key");

        auto id = std::make_pair(section, key);
        auto prev = seen.find(id);
        if (prev != seen.end())
            fail(origin, line_no,
                 "duplicate key '" + key + "' (first set on line " +
                     std::to_string(prev->second) + ")");
        seen[id] = line_no;

        const Entry* entry = nullptr;
        for (const auto& e : reg.entries)
            if (e.section == section && e.key == key) entry = &e;
        if (entry == nullptr)
            fail(origin, line_no,
                 "unknown key '" + key + "' in section [" + section + "]");
        try {
            entry->set(value);
        } catch (const std::exception& e) {
            fail(origin, line_no, std::string("bad value for '") + key + "': " + e.what());
        }
    }

    for (const auto& e : reg.entries) {
        if (e.is_path) {
            std::string p = e.get();
            if (!p.empty() && !std::filesystem::exists(p))
                throw std::runtime_error(origin + ": referenced path does not exist: " + p +
                                         " (key " + e.key + ")");
        }
    }
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string RunConfig::serialize() const {
    RunConfig& self = const_cast<RunConfig&>(*this);
    Registry reg = build_registry(self);
    std::ostringstream os;
    std::string section = "\x01";  // force initial (global) section emit
    for (const auto& e : reg.entries) {
        if (e.section != section) {
            section = e.section;
            if (!section.empty()) os << "\n[" << section << "]\n";
        }
        os << e.key << " = " << e.get() << "\n";
    }
    return os.str();
}

ArchitectureDescriptor RunConfig::pretrained_descriptor() const {
    ArchitectureDescriptor d;
    const ModelSection& m = pretrained_model;
    d.family = m.family;
    d.input_shape = {data.frames, data.grid, data.grid, 1};
    d.hidden = m.hidden;
    d.blocks = m.blocks;
    d.time_embed_dim = m.time_embed_dim;
    d.vocab_size = m.vocab_size;
    d.cond_mode = m.cond_mode;
    d.energy_parameterized = m.energy;
    return d;
}

ArchitectureDescriptor RunConfig::adapter_descriptor() const {
    ArchitectureDescriptor d = pretrained_descriptor();
    const ModelSection& m = adapter_model;
    d.family = m.family;
    d.hidden = m.hidden;
    d.blocks = m.blocks;
    d.time_embed_dim = m.time_embed_dim;
    d.vocab_size = m.vocab_size;
    d.cond_mode = m.cond_mode;
    d.energy_parameterized = m.energy;
    return d;
}

namespace {
Dynamics dynamics_from(const std::string& s) {
    if (s == "static") return Dynamics::kStatic;
    if (s == "bounce") return Dynamics::kBounce;
    if (s == "drift") return Dynamics::kDrift;
    throw std::invalid_argument("dynamics must be static|bounce|drift: " + s);
}
}  // namespace

std::vector<ToyVideoSpec> RunConfig::broad_specs() const {
    std::vector<ToyVideoSpec> specs;
    for (size_t i = 0; i < data.broad_styles.size(); ++i) {
        ToyVideoSpec s;
        s.grid = data.grid;
        s.frames = data.frames;
        s.dynamics = dynamics_from(data.dynamics);
        s.style_id = data.broad_styles[i];
        s.render = style_render_params(s.style_id);
        s.count = data.broad_count_per_style;
        s.seed = derive_seed(data.data_seed, 0xB20AD000ull + i);
        s.attach_first_frame = data.attach_first_frame;
        s.attach_edges = data.attach_edges;
        specs.push_back(s);
    }
    return specs;
}

ToyVideoSpec RunConfig::adapt_spec() const {
    ToyVideoSpec s;
    s.grid = data.grid;
    s.frames = data.frames;
    s.dynamics = dynamics_from(data.dynamics);
    s.style_id = data.adapt_style;
    s.render = style_render_params(s.style_id);
    s.count = data.adapt_count;
    s.seed = derive_seed(data.data_seed, 0xADA97ull);
    s.attach_first_frame = data.attach_first_frame;
    s.attach_edges = data.attach_edges;
    return s;
}

TrainConfig RunConfig::pretrain_train_config() const {
    TrainConfig t;
    t.steps = train_pretrained.steps;
    t.batch_size = train_pretrained.batch_size;
    t.learning_rate = train_pretrained.learning_rate;
    t.cond_dropout = train_pretrained.cond_dropout;
    t.grad_clip = train_pretrained.grad_clip;
    t.seed = derive_seed(seed, 0x7121);
    return t;
}

TrainConfig RunConfig::adapter_train_config() const {
    TrainConfig t;
    t.steps = train_adapter.steps;
    t.batch_size = train_adapter.batch_size;
    t.learning_rate = train_adapter.learning_rate;
    t.cond_dropout = train_adapter.cond_dropout;
    t.grad_clip = train_adapter.grad_clip;
    t.seed = derive_seed(seed, 0x7122);
    return t;
}

BenchmarkPlan RunConfig::benchmark_plan() const {
    BenchmarkPlan plan;
    plan.schedule = schedule;
    plan.pretrained_desc = pretrained_descriptor();
    plan.adapter_desc = adapter_descriptor();
    plan.pretrain_train = pretrain_train_config();
    plan.adapter_train = adapter_train_config();
    plan.composition = composition;
    plan.cfg_mix_weight = benchmark.cfg_mix_weight;
    plan.num_samples = benchmark.num_samples;
    plan.probe_seed = benchmark.probe_seed;
    plan.probe_kernels = benchmark.probe_kernels;
    plan.sample_threads = benchmark.threads;
    plan.rows.clear();
    for (const auto& name : benchmark.rows) {
        if (name == "adapter_only") plan.rows.push_back(BenchmarkRowKind::kAdapterOnly);
        else if (name == "pretrained_only") plan.rows.push_back(BenchmarkRowKind::kPretrainedOnly);
        else if (name == "composed") plan.rows.push_back(BenchmarkRowKind::kComposed);
        else if (name == "cfg_mix") plan.rows.push_back(BenchmarkRowKind::kCfgMix);
        else if (name == "finetune") plan.rows.push_back(BenchmarkRowKind::kFinetune);
        else throw std::invalid_argument("unknown benchmark row: " + name);
    }
    return plan;
}

}  // namespace vad
