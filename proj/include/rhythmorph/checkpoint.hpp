#pragma once

#include "rhythmorph/minirocket.hpp"
#include "rhythmorph/pca.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rhythmorph {

enum class BlockType : std::uint8_t { f32 = 0, f64 = 1 };

struct Block {
    BlockType type = BlockType::f32;
    std::vector<std::int64_t> shape;
    std::vector<double> data;  // f32 blocks are rounded on store
};

// Versioned container: JSON metadata plus named numeric blocks. Output bytes
// depend only on the contents (blocks are written in name order).
struct Bundle {
    static constexpr std::uint32_t kVersion = 1;
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Block> blocks;

    void put(const std::string& name, const Eigen::MatrixXd& m, BlockType type);
    Eigen::MatrixXd matrix(const std::string& name) const;
    bool has(const std::string& name) const { return blocks.count(name) != 0; }
};

void save_bundle(const Bundle& bundle, const std::filesystem::path& path);
Bundle load_bundle(const std::filesystem::path& path);

// Fold artifacts live under a name prefix inside a bundle.
void store_pca(Bundle& b, const std::string& prefix, const PcaProjection& p);
PcaProjection fetch_pca(const Bundle& b, const std::string& prefix);
void store_rocket(Bundle& b, const std::string& prefix, const RocketConfig& c);
RocketConfig fetch_rocket(const Bundle& b, const std::string& prefix);

}  // namespace rhythmorph
