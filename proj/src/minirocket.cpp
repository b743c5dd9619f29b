#include "rhythmorph/minirocket.hpp"

#include "rhythmorph/audit.hpp"
#include "rhythmorph/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace rhythmorph {

const std::array<std::array<int, 3>, kRocketKernels>& rocket_kernels() {
    static const auto kernels = [] {
        std::array<std::array<int, 3>, kRocketKernels> k{};
        int n = 0;
        for (int a = 0; a < 9; ++a)
            for (int b = a + 1; b < 9; ++b)
                for (int c = b + 1; c < 9; ++c) k[static_cast<std::size_t>(n++)] = {a, b, c};
        return k;
    }();
    return kernels;
}

DilationSchedule fit_dilations(Eigen::Index input_length, int num_features, int max_dilations_per_kernel) {
    if (input_length < kRocketKernelLength) {
        throw DataError(DataErrc::precondition, "MiniRocket needs input length >= 9");
    }
    const int per_kernel = num_features / kRocketKernels;
    if (per_kernel < 1) throw ConfigError("MiniRocket needs at least 84 features");
    const int n_points = std::min(per_kernel, max_dilations_per_kernel);
    const double multiplier = static_cast<double>(per_kernel) / n_points;
    const double max_dilation = static_cast<double>(input_length - 1) / (kRocketKernelLength - 1);
    const double max_exponent = std::log2(max_dilation);
    const int cap = static_cast<int>((input_length - 1) / (kRocketKernelLength - 1));

    std::vector<int> raw;
    for (int i = 0; i < n_points; ++i) {
        const double e = n_points == 1 ? 0.0
                         : i == n_points - 1 ? max_exponent
                                             : max_exponent * i / (n_points - 1);
        raw.push_back(std::min(cap, static_cast<int>(std::floor(std::pow(2.0, e) + 1e-9))));
    }
    DilationSchedule s;
    for (int d : raw) {
        if (s.dilations.empty() || s.dilations.back() != d) {
            s.dilations.push_back(d);
            s.features_per_dilation.push_back(0);
        }
        ++s.features_per_dilation.back();
    }
    int total = 0;
    for (int& f : s.features_per_dilation) {
        f = static_cast<int>(f * multiplier);
        total += f;
    }
    for (std::size_t i = 0; total < per_kernel; i = (i + 1) % s.features_per_dilation.size()) {
        ++s.features_per_dilation[i];
        ++total;
    }
    return s;
}

namespace {

// Zero-padded per-channel copies of one slice for a given dilation, plus the
// all-(-1) convolution; C for any kernel is alpha + 3 * (three taps).
class DilatedSlice {
public:
    DilatedSlice(const Eigen::MatrixXf& x, int dilation)
        : length_(x.cols()), dilation_(dilation), halo_(4 * dilation),
          padded_(x.rows(), x.cols() + 2 * halo_), alpha_(x.rows(), x.cols()) {
        padded_.setZero();
        padded_.middleCols(halo_, length_) = x;
        for (Eigen::Index c = 0; c < x.rows(); ++c) {
            const float* p = padded_.row(c).data();
            float* a = alpha_.row(c).data();
            for (Eigen::Index t = 0; t < length_; ++t) {
                float s = 0.0f;
                for (int j = 0; j < kRocketKernelLength; ++j) s += p[t + j * dilation_];
                a[t] = -s;
            }
        }
    }

    void convolve(int kernel, const std::vector<int>& channels, std::vector<float>& out) const {
        const auto& idx = rocket_kernels()[static_cast<std::size_t>(kernel)];
        const Eigen::Index o0 = idx[0] * dilation_, o1 = idx[1] * dilation_, o2 = idx[2] * dilation_;
        out.assign(static_cast<std::size_t>(length_), 0.0f);
        float* dst = out.data();
        for (int c : channels) {
            const float* p = padded_.row(c).data();
            const float* a = alpha_.row(c).data();
            for (Eigen::Index t = 0; t < length_; ++t) {
                dst[t] += a[t] + 3.0f * (p[t + o0] + p[t + o1] + p[t + o2]);
            }
        }
    }

private:
    using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Index length_;
    int dilation_;
    Eigen::Index halo_;
    RowMatrixF padded_;
    RowMatrixF alpha_;
};

std::vector<float> golden_quantiles(int n) {
    const double phi = (std::sqrt(5.0) + 1.0) / 2.0;
    std::vector<float> q(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        double v = i * phi;
        q[static_cast<std::size_t>(i - 1)] = static_cast<float>(v - std::floor(v));
    }
    return q;
}

// Linear-interpolation quantile of a sorted sample.
float quantile_sorted(const std::vector<float>& sorted, float q) {
    const double pos = static_cast<double>(q) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return static_cast<float>(sorted[lo] + frac * (static_cast<double>(sorted[hi]) - sorted[lo]));
}

}  // namespace

RocketFeature describe_feature(const RocketConfig& config, int feature_index) {
    if (feature_index < 0 || feature_index >= config.feature_count()) {
        throw DataError(DataErrc::shape_mismatch, "feature index out of range");
    }
    int start = 0;
    for (std::size_t d = 0; d < config.dilations.size(); ++d) {
        const int per = config.features_per_dilation[d];
        const int block = per * kRocketKernels;
        if (feature_index < start + block) {
            const int kernel = (feature_index - start) / per;
            const std::size_t combo = d * kRocketKernels + static_cast<std::size_t>(kernel);
            const bool padded = ((static_cast<int>(d) % 2 + kernel) % 2) == 0;
            return {config.dilations[d], kernel, config.channels[combo],
                    config.biases[static_cast<std::size_t>(feature_index)], padded};
        }
        start += block;
    }
    throw DataError(DataErrc::shape_mismatch, "feature index out of range");
}

RocketConfig minirocket_fit(std::span<const Signal> training_slices, Eigen::Index input_length,
                            std::uint64_t seed, const RocketOptions& options) {
    if (training_slices.empty()) throw DataError(DataErrc::empty_input, "minirocket_fit: no training slices");
    fit_counters().minirocket_fit++;
    const auto schedule = fit_dilations(input_length, options.num_features, options.max_dilations_per_kernel);

    RocketConfig cfg;
    cfg.input_length = input_length;
    cfg.n_channels = static_cast<int>(training_slices.front().rows());
    cfg.seed = seed;
    cfg.dilations = schedule.dilations;
    cfg.features_per_dilation = schedule.features_per_dilation;
    for (const auto& s : training_slices) {
        if (s.cols() != input_length || s.rows() != cfg.n_channels) {
            throw DataError(DataErrc::shape_mismatch, "minirocket_fit: inconsistent slice shape");
        }
    }

    std::mt19937_64 rng(seed);
    const std::size_t n_combos = cfg.dilations.size() * kRocketKernels;
    const int max_channels = std::min(cfg.n_channels, 9);
    const double max_exponent = std::log2(static_cast<double>(max_channels) + 1.0);
    std::uniform_real_distribution<double> expo(0.0, max_exponent);
    std::vector<int> all(static_cast<std::size_t>(cfg.n_channels));
    std::iota(all.begin(), all.end(), 0);
    cfg.channels.reserve(n_combos);
    for (std::size_t c = 0; c < n_combos; ++c) {
        const int k = std::clamp(static_cast<int>(std::pow(2.0, expo(rng))), 1, max_channels);
        std::vector<int> pick = all;
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(static_cast<std::size_t>(k));
        std::sort(pick.begin(), pick.end());
        cfg.channels.push_back(std::move(pick));
    }

    // Seeded sample of the training slices; each (dilation, kernel) draws one.
    std::vector<std::size_t> pool(training_slices.size());
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(1, options.fit_sample_size))));
    std::uniform_int_distribution<std::size_t> draw(0, pool.size() - 1);

    int total = 0;
    for (int f : cfg.features_per_dilation) total += f * kRocketKernels;
    const auto quantiles = golden_quantiles(total);
    cfg.biases.resize(static_cast<std::size_t>(total));

    std::vector<std::size_t> chosen(n_combos);
    for (auto& c : chosen) c = pool[draw(rng)];

    std::vector<float> conv;
    std::size_t feature = 0;
    for (std::size_t d = 0; d < cfg.dilations.size(); ++d) {
        for (int k = 0; k < kRocketKernels; ++k) {
            const std::size_t combo = d * kRocketKernels + static_cast<std::size_t>(k);
            const DilatedSlice ds(training_slices[chosen[combo]].cast<float>(), cfg.dilations[d]);
            ds.convolve(k, cfg.channels[combo], conv);
            std::sort(conv.begin(), conv.end());
            for (int f = 0; f < cfg.features_per_dilation[d]; ++f, ++feature) {
                cfg.biases[feature] = quantile_sorted(conv, quantiles[feature]);
            }
        }
    }
    return cfg;
}

Eigen::VectorXf minirocket_transform(const Signal& slice, const RocketConfig& config) {
    if (slice.cols() != config.input_length || slice.rows() != config.n_channels) {
        throw DataError(DataErrc::shape_mismatch, "minirocket_transform: slice shape does not match config");
    }
    const Eigen::MatrixXf x = slice.cast<float>();
    Eigen::VectorXf out(config.feature_count());
    std::vector<float> conv;
    std::size_t feature = 0;
    const Eigen::Index n = config.input_length;
    for (std::size_t d = 0; d < config.dilations.size(); ++d) {
        const int dilation = config.dilations[d];
        const DilatedSlice ds(x, dilation);
        const Eigen::Index padding = 4 * dilation;
        for (int k = 0; k < kRocketKernels; ++k) {
            const std::size_t combo = d * kRocketKernels + static_cast<std::size_t>(k);
            ds.convolve(k, config.channels[combo], conv);
            const bool padded = ((static_cast<int>(d) % 2 + k) % 2) == 0;
            const Eigen::Index lo = padded ? 0 : padding;
            const Eigen::Index hi = padded ? n : n - padding;
            const double denom = static_cast<double>(hi - lo);
            for (int f = 0; f < config.features_per_dilation[d]; ++f, ++feature) {
                const float bias = config.biases[feature];
                Eigen::Index count = 0;
                for (Eigen::Index t = lo; t < hi; ++t) count += conv[static_cast<std::size_t>(t)] > bias;
                out[static_cast<Eigen::Index>(feature)] = static_cast<float>(static_cast<double>(count) / denom);
            }
        }
    }
    return out;
}

void save_rocket(const RocketConfig& config, const std::filesystem::path& path) {
    nlohmann::json j;
    j["input_length"] = config.input_length;
    j["n_channels"] = config.n_channels;
    j["seed"] = config.seed;
    j["dilations"] = config.dilations;
    j["features_per_dilation"] = config.features_per_dilation;
    j["channels"] = config.channels;
    j["biases"] = config.biases;
    std::ofstream out(path);
    if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
    out << j.dump() << "\n";
}

RocketConfig load_rocket(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(DataErrc::io, "cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        RocketConfig c;
        c.input_length = j.at("input_length").get<Eigen::Index>();
        c.n_channels = j.at("n_channels").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.dilations = j.at("dilations").get<std::vector<int>>();
        c.features_per_dilation = j.at("features_per_dilation").get<std::vector<int>>();
        c.channels = j.at("channels").get<std::vector<std::vector<int>>>();
        c.biases = j.at("biases").get<std::vector<float>>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(DataErrc::malformed_header, "malformed rocket config: " + std::string(e.what()));
    }
}

}  // namespace rhythmorph
