#include "rhythmorph/checkpoint.hpp"

#include "rhythmorph/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace rhythmorph {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes a little-endian host");

template <class T>
void put_pod(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
    put_pod<std::uint64_t>(out, s.size());
    out.append(s);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <class T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string str() {
        const auto n = pod<std::uint64_t>();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    const char* take(std::size_t n) {
        need(n);
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError(DataErrc::truncated_payload, "bundle truncated");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void Bundle::put(const std::string& name, const Eigen::MatrixXd& m, BlockType type) {
    Block b;
    b.type = type;
    b.shape = {m.rows(), m.cols()};
    b.data.resize(static_cast<std::size_t>(m.size()));
    // Row-major storage.
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            b.data[k++] = type == BlockType::f32 ? static_cast<double>(static_cast<float>(m(i, j))) : m(i, j);
    blocks[name] = std::move(b);
}

Eigen::MatrixXd Bundle::matrix(const std::string& name) const {
    const auto it = blocks.find(name);
    if (it == blocks.end()) throw DataError(DataErrc::malformed_header, "bundle has no block '" + name + "'");
    const Block& b = it->second;
    if (b.shape.size() != 2) throw DataError(DataErrc::malformed_header, "block '" + name + "' is not 2-D");
    Eigen::MatrixXd m(b.shape[0], b.shape[1]);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = b.data[k++];
    return m;
}

void save_bundle(const Bundle& bundle, const std::filesystem::path& path) {
    std::string out(kMagic, 4);
    put_pod<std::uint32_t>(out, Bundle::kVersion);
    put_str(out, bundle.meta.dump());
    put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.blocks.size()));
    for (const auto& [name, b] : bundle.blocks) {
        put_str(out, name);
        put_pod<std::uint8_t>(out, static_cast<std::uint8_t>(b.type));
        put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
        for (auto d : b.shape) put_pod<std::int64_t>(out, d);
        for (double v : b.data) {
            if (b.type == BlockType::f32) {
                put_pod<float>(out, static_cast<float>(v));
            } else {
                put_pod<double>(out, v);
            }
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(DataErrc::io, "cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError(DataErrc::io, "write failed: " + path.string());
}

Bundle load_bundle(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(DataErrc::io, "cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(bytes);
    if (std::memcmp(r.take(4), kMagic, 4) != 0) throw DataError(DataErrc::malformed_header, "not a bundle file");
    const auto version = r.pod<std::uint32_t>();
    if (version != Bundle::kVersion) {
        throw DataError(DataErrc::malformed_header, "unsupported bundle version " + std::to_string(version));
    }
    Bundle b;
    try {
        b.meta = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(DataErrc::malformed_header, std::string("bundle metadata: ") + e.what());
    }
    const auto n_blocks = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_blocks; ++i) {
        std::string name = r.str();
        Block blk;
        const auto type = r.pod<std::uint8_t>();
        if (type > 1) throw DataError(DataErrc::malformed_header, "bad block type in '" + name + "'");
        blk.type = static_cast<BlockType>(type);
        const auto ndim = r.pod<std::uint32_t>();
        std::int64_t count = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const auto dim = r.pod<std::int64_t>();
            if (dim < 0) throw DataError(DataErrc::malformed_header, "negative dimension");
            blk.shape.push_back(dim);
            count *= dim;
        }
        blk.data.resize(static_cast<std::size_t>(count));
        for (auto& v : blk.data) v = blk.type == BlockType::f32 ? r.pod<float>() : r.pod<double>();
        b.blocks.emplace(std::move(name), std::move(blk));
    }
    if (!r.done()) throw DataError(DataErrc::malformed_header, "trailing bytes after bundle");
    return b;
}

void store_pca(Bundle& b, const std::string& prefix, const PcaProjection& p) {
    b.put(prefix + ".mean", p.mean, BlockType::f64);
    b.put(prefix + ".components", p.components, BlockType::f64);
    b.put(prefix + ".explained_variance", p.explained_variance, BlockType::f64);
    b.meta[prefix] = {{"fold_id", p.fold_id}, {"explained_variance_ratio", p.explained_variance_ratio}};
}

PcaProjection fetch_pca(const Bundle& b, const std::string& prefix) {
    PcaProjection p;
    p.mean = b.matrix(prefix + ".mean").col(0);
    p.components = b.matrix(prefix + ".components");
    p.explained_variance = b.matrix(prefix + ".explained_variance").col(0);
    try {
        p.fold_id = b.meta.at(prefix).at("fold_id").get<std::string>();
        p.explained_variance_ratio = b.meta.at(prefix).at("explained_variance_ratio").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(DataErrc::malformed_header, std::string("pca metadata: ") + e.what());
    }
    if (p.components.rows() != p.mean.size()) throw DataError(DataErrc::shape_mismatch, "pca block shapes disagree");
    return p;
}

void store_rocket(Bundle& b, const std::string& prefix, const RocketConfig& c) {
    Eigen::MatrixXd biases(c.feature_count(), 1);
    for (int i = 0; i < c.feature_count(); ++i) biases(i, 0) = c.biases[static_cast<std::size_t>(i)];
    b.put(prefix + ".biases", biases, BlockType::f32);
    b.meta[prefix] = {{"input_length", c.input_length},
                      {"n_channels", c.n_channels},
                      {"seed", c.seed},
                      {"dilations", c.dilations},
                      {"features_per_dilation", c.features_per_dilation},
                      {"channels", c.channels}};
}

RocketConfig fetch_rocket(const Bundle& b, const std::string& prefix) {
    RocketConfig c;
    try {
        const auto& j = b.meta.at(prefix);
        c.input_length = j.at("input_length").get<Eigen::Index>();
        c.n_channels = j.at("n_channels").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.dilations = j.at("dilations").get<std::vector<int>>();
        c.features_per_dilation = j.at("features_per_dilation").get<std::vector<int>>();
        c.channels = j.at("channels").get<std::vector<std::vector<int>>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(DataErrc::malformed_header, std::string("rocket metadata: ") + e.what());
    }
    const Eigen::MatrixXd biases = b.matrix(prefix + ".biases");
    c.biases.resize(static_cast<std::size_t>(biases.rows()));
    for (Eigen::Index i = 0; i < biases.rows(); ++i) c.biases[static_cast<std::size_t>(i)] = static_cast<float>(biases(i, 0));
    return c;
}

}  // namespace rhythmorph
