#pragma once

#include "rhythmorph/metrics.hpp"
#include "rhythmorph/minirocket.hpp"
#include "rhythmorph/model.hpp"
#include "rhythmorph/preprocess.hpp"
#include "rhythmorph/train.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rhythmorph {

// Flat `key = value` configuration. Every key must be known (see
// RunConfig::defaults) except `group.<name>` class-group lists. Lines starting
// with '#' are comments.
class RunConfig {
public:
    static RunConfig defaults();
    static RunConfig load(const std::filesystem::path& path);
    static RunConfig parse(const std::string& text);

    void set(const std::string& key, const std::string& value);
    void apply_overrides(const std::vector<std::pair<std::string, std::string>>& overrides);
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& str(const std::string& key) const;
    double number(const std::string& key) const;
    long integer(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;

    // Throws ConfigError on missing seed or out-of-range values.
    void validate() const;

    // Sorted `key=value` lines; the hash is FNV-1a 64 over this text.
    std::string canonical() const;
    std::uint64_t hash() const;
    std::string hash_hex() const;
    const std::map<std::string, std::string>& entries() const { return values_; }

    PreprocessParams preprocess() const;
    RocketOptions rocket() const;
    ModelConfig model(int n_classes) const;
    TrainParams train() const;
    ClassGroups class_groups() const;
    double tau() const { return number("tau"); }
    double pool_q() const { return number("pool_q"); }
    std::uint64_t seed() const { return u64("seed"); }

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace rhythmorph
