#include "rhythmorph/config.hpp"

#include "rhythmorph/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rhythmorph {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const std::map<std::string, std::string>& default_table() {
    static const std::map<std::string, std::string> t = {
        // paths
        {"catalog", ""},
        {"data_dir", ""},
        {"out_dir", "run"},
        {"checkpoint", ""},
        {"record", ""},
        {"format", "raw-f32"},
        // synthetic study
        {"n_records", "400"},
        {"n_subjects", "0"},
        {"duration_s", "10"},
        {"fs", "500"},
        {"noise_std", "0.04"},
        {"baseline_wander", "0.1"},
        {"amplitude_jitter", "0.1"},
        {"morphology_strength", "0.6"},
        {"irregular_jitter_s", "0.15"},
        {"regular_jitter_s", "0.02"},
        {"label_mode", "all"},
        // preprocessing
        {"low_hz", "0.5"},
        {"high_hz", "40"},
        {"order", "4"},
        {"window", "2500"},
        {"stride", "1250"},
        // morphology features
        {"rocket_features", "2016"},
        {"rocket_sample", "256"},
        {"rocket_max_dilations", "32"},
        // model
        {"d_model", "24"},
        {"n_blocks", "2"},
        {"state_dim", "8"},
        {"expand", "2"},
        {"token_stride", "25"},
        {"branch_channels", "8"},
        {"n_heads", "8"},
        {"n_morph_tokens", "8"},
        {"lead_dim", "8"},
        {"lead_segments", "8"},
        {"scan_chunk", "64"},
        // pooling
        {"pool_q", "3"},
        // training
        {"epochs", "12"},
        {"bce_warmup_epochs", "4"},
        {"batch", "32"},
        {"lr_peak", "3e-3"},
        {"lr_floor", "1e-6"},
        {"weight_decay", "0.01"},
        {"ema_decay", "0.95"},
        {"gamma_neg", "2.5"},
        {"gamma_pos", "0"},
        {"grad_clip", "1.0"},
        // evaluation
        {"folds", "5"},
        {"eval_folds", "0"},
        {"tau", "0.5"},
        {"variant", "full"},
        {"mask_leads", "V1,V2,V3,V4,V5,V6"},
        {"q_list", "1,2,3,5,8"},
        // benchmark
        {"bench_lengths", "1024,2048,4096,8192"},
        {"bench_reps", "9"},
        {"bench_channels", "64"},
        {"bench_state", "16"},
    };
    return t;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.values_ = default_table();
    return c;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c = defaults();
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError("empty config key");
    if (key != "seed" && !default_table().count(key) && key.rfind("group.", 0) != 0) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    values_[key] = value;
}

void RunConfig::apply_overrides(const std::vector<std::pair<std::string, std::string>>& overrides) {
    for (const auto& [k, v] : overrides) set(k, v);
}

const std::string& RunConfig::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

double RunConfig::number(const std::string& key) const {
    const std::string& s = str(key);
    double v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config key '" + key + "' is not a number: " + s);
    return v;
}

long RunConfig::integer(const std::string& key) const {
    const std::string& s = str(key);
    long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config key '" + key + "' is not an integer: " + s);
    return v;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
    const std::string& s = str(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "' is not an unsigned integer: " + s);
    }
    return v;
}

bool RunConfig::flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + s);
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void RunConfig::validate() const {
    if (!has("seed")) throw ConfigError("seed is required (set `seed` in the config or pass --seed)");
    (void)seed();
    const double t = tau();
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("tau must lie in (0, 1)");
    if (!(pool_q() >= 1.0)) throw ConfigError("pool_q must be >= 1");
    if (integer("folds") < 2) throw ConfigError("folds must be >= 2");
    if (integer("eval_folds") < 0 || integer("eval_folds") > integer("folds")) {
        throw ConfigError("eval_folds must lie in [0, folds]");
    }
    (void)parse_variant(str("variant"));
    (void)parse_record_format(str("format"));
    for (const auto& name : list("mask_leads")) (void)lead_index(name);
    (void)preprocess();
    (void)rocket();
    model(2).validate();
    (void)train();
    const auto lm = str("label_mode");
    if (lm != "all" && lm != "rhythm" && lm != "morphology") throw ConfigError("label_mode must be all|rhythm|morphology");
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

PreprocessParams RunConfig::preprocess() const {
    PreprocessParams p;
    p.low_hz = number("low_hz");
    p.high_hz = number("high_hz");
    p.order = static_cast<int>(integer("order"));
    p.window = integer("window");
    p.stride = integer("stride");
    if (p.order < 1) throw ConfigError("order must be >= 1");
    if (p.window < 1 || p.stride < 1 || p.stride > p.window) throw ConfigError("need 1 <= stride <= window");
    if (!(p.low_hz > 0 && p.low_hz < p.high_hz)) throw ConfigError("need 0 < low_hz < high_hz");
    return p;
}

RocketOptions RunConfig::rocket() const {
    RocketOptions r;
    r.num_features = static_cast<int>(integer("rocket_features"));
    r.fit_sample_size = static_cast<int>(integer("rocket_sample"));
    r.max_dilations_per_kernel = static_cast<int>(integer("rocket_max_dilations"));
    if (r.num_features < 84) throw ConfigError("rocket_features must be >= 84");
    if (r.fit_sample_size < 1 || r.max_dilations_per_kernel < 1) throw ConfigError("bad rocket options");
    return r;
}

ModelConfig RunConfig::model(int n_classes) const {
    ModelConfig m;
    m.n_classes = n_classes;
    m.slice_length = integer("window");
    m.d_model = static_cast<int>(integer("d_model"));
    m.n_blocks = static_cast<int>(integer("n_blocks"));
    m.state_dim = static_cast<int>(integer("state_dim"));
    m.expand = static_cast<int>(integer("expand"));
    m.token_stride = static_cast<int>(integer("token_stride"));
    m.branch_channels = static_cast<int>(integer("branch_channels"));
    m.n_heads = static_cast<int>(integer("n_heads"));
    m.n_morph_tokens = static_cast<int>(integer("n_morph_tokens"));
    m.lead_dim = static_cast<int>(integer("lead_dim"));
    m.lead_segments = static_cast<int>(integer("lead_segments"));
    m.scan_chunk = static_cast<int>(integer("scan_chunk"));
    m.seed = has("seed") ? seed() : 0;
    return m;
}

TrainParams RunConfig::train() const {
    TrainParams t;
    t.epochs = static_cast<int>(integer("epochs"));
    t.bce_warmup_epochs = static_cast<int>(integer("bce_warmup_epochs"));
    t.batch = static_cast<int>(integer("batch"));
    t.lr_peak = number("lr_peak");
    t.lr_floor = number("lr_floor");
    t.adamw.weight_decay = number("weight_decay");
    t.ema_decay = number("ema_decay");
    t.gamma_neg = number("gamma_neg");
    t.gamma_pos = number("gamma_pos");
    t.grad_clip = number("grad_clip");
    t.seed = has("seed") ? seed() : 0;
    if (t.epochs < 1 || t.batch < 1 || t.bce_warmup_epochs < 0) throw ConfigError("bad training schedule");
    if (!(t.lr_peak > 0 && t.lr_floor >= 0 && t.lr_floor <= t.lr_peak)) throw ConfigError("need 0 <= lr_floor <= lr_peak");
    if (!(t.ema_decay > 0 && t.ema_decay <= 1)) throw ConfigError("ema_decay must lie in (0, 1]");
    return t;
}

ClassGroups RunConfig::class_groups() const {
    ClassGroups g;
    for (const auto& [k, v] : values_) {
        if (k.rfind("group.", 0) == 0) g[k.substr(6)] = list(k);
    }
    return g;
}

}  // namespace rhythmorph
