#pragma once

#include "rhythmorph/preprocess.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rhythmorph {

inline constexpr int kRocketKernels = 84;
inline constexpr int kRocketKernelLength = 9;

// The 84 length-9 kernels: weight -1 everywhere except three positions of
// weight 2. Entry k lists those three positions in lexicographic order.
const std::array<std::array<int, 3>, kRocketKernels>& rocket_kernels();

struct DilationSchedule {
    std::vector<int> dilations;             // unique, increasing
    std::vector<int> features_per_dilation; // per-kernel feature count at each dilation
};

// Exponential dilation schedule up to floor((L - 1) / 8).
DilationSchedule fit_dilations(Eigen::Index input_length, int num_features, int max_dilations_per_kernel);

struct RocketOptions {
    int num_features = 10000;  // nominal; the exact count is a multiple of 84
    int max_dilations_per_kernel = 32;
    int fit_sample_size = 256;
};

struct RocketConfig {
    Eigen::Index input_length = 0;
    int n_channels = 0;
    std::uint64_t seed = 0;
    std::vector<int> dilations;
    std::vector<int> features_per_dilation;
    // One entry per (dilation, kernel) combination, dilation-major.
    std::vector<std::vector<int>> channels;
    std::vector<float> biases;  // one per feature, in output order

    int feature_count() const { return static_cast<int>(biases.size()); }
    bool operator==(const RocketConfig&) const = default;
};

// Everything that determines one output feature; exposed for verification.
struct RocketFeature {
    int dilation;
    int kernel;
    std::vector<int> channels;
    float bias;
    bool padded;  // PPV over all positions, else only over the valid interior
};

RocketFeature describe_feature(const RocketConfig& config, int feature_index);

// Biases are quantiles of convolution outputs on a seeded sample of the
// training slices. Precondition: at least one slice, L >= 9.
RocketConfig minirocket_fit(std::span<const Signal> training_slices, Eigen::Index input_length,
                            std::uint64_t seed, const RocketOptions& options = {});

// PPV features: fraction of convolution outputs strictly greater than the bias.
Eigen::VectorXf minirocket_transform(const Signal& slice, const RocketConfig& config);

void save_rocket(const RocketConfig& config, const std::filesystem::path& path);
RocketConfig load_rocket(const std::filesystem::path& path);

}  // namespace rhythmorph
