#include "rhythmorph/ingest.hpp"

#include "rhythmorph/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace rhythmorph {

static_assert(std::endian::native == std::endian::little,
              "raw-f32 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'C', 'G', 'F'};
constexpr std::uint32_t kRawVersion = 1;

// ---------------------------------------------------------------- byte I/O

class ByteWriter {
public:
    template <class T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const char*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    const std::vector<char>& bytes() const { return buf_; }

private:
    std::vector<char> buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<char>& buf) : buf_(buf) {}

    template <class T>
    T get(DataErrc errc, const char* what) {
        T v{};
        need(sizeof(T), errc, what);
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(DataErrc errc, const char* what) {
        const auto n = get<std::uint32_t>(errc, what);
        need(n, errc, what);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n, DataErrc errc, const char* what) const {
        if (buf_.size() - pos_ < n) throw DataError(errc, what);
    }
    std::size_t remaining() const { return buf_.size() - pos_; }
    const char* cursor() const { return buf_.data() + pos_; }

private:
    const std::vector<char>& buf_;
    std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataErrc::io, "cannot open record file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataErrc::io, "cannot write record file: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(DataErrc::io, "write failed: " + path.string());
}

// ---------------------------------------------------------------- raw-f32

EcgRecord read_raw_record(const std::filesystem::path& path) {
    const auto buf = slurp(path);
    ByteReader r(buf);
    r.need(4, DataErrc::malformed_header, "malformed header: missing magic");
    if (std::memcmp(r.cursor(), kMagic, 4) != 0) {
        throw DataError(DataErrc::malformed_header, "malformed header: bad magic");
    }
    r.get<std::uint32_t>(DataErrc::malformed_header, "malformed header");
    const auto version = r.get<std::uint32_t>(DataErrc::malformed_header, "malformed header");
    if (version != kRawVersion) {
        throw DataError(DataErrc::malformed_header, "malformed header: unsupported version");
    }
    const auto n_leads = r.get<std::uint32_t>(DataErrc::malformed_header, "malformed header");
    const auto n = r.get<std::uint64_t>(DataErrc::malformed_header, "malformed header");
    const auto fs = r.get<double>(DataErrc::malformed_header, "malformed header");
    if (n_leads != kNumLeads) {
        throw DataError(DataErrc::lead_count_mismatch,
                        "lead count mismatch: file declares " + std::to_string(n_leads));
    }
    if (n == 0 || !(fs > 0.0) || !std::isfinite(fs)) {
        throw DataError(DataErrc::malformed_header, "malformed header: bad N or fs");
    }
    EcgRecord rec;
    rec.fs = fs;
    rec.record_id = r.get_string(DataErrc::malformed_header, "malformed header: record id");
    rec.subject_id = r.get_string(DataErrc::malformed_header, "malformed header: subject id");
    const auto n_labels = r.get<std::uint32_t>(DataErrc::malformed_header, "malformed header");
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        rec.labels.push_back(r.get<std::uint8_t>(DataErrc::malformed_header, "malformed header: labels"));
    }
    const std::size_t payload = static_cast<std::size_t>(kNumLeads) * n * sizeof(float);
    if (r.remaining() < payload) {
        throw DataError(DataErrc::truncated_payload, "truncated payload: expected " +
                                                         std::to_string(payload) + " bytes, found " +
                                                         std::to_string(r.remaining()));
    }
    if (r.remaining() > payload) {
        throw DataError(DataErrc::malformed_header, "malformed file: trailing bytes after payload");
    }
    rec.samples.resize(kNumLeads, static_cast<Eigen::Index>(n));
    std::memcpy(rec.samples.data(), r.cursor(), payload);
    return rec;
}

void write_raw_record(const EcgRecord& rec, const std::filesystem::path& path) {
    ByteWriter w;
    w.put_bytes(kMagic, 4);
    w.put(kRawVersion);
    w.put(static_cast<std::uint32_t>(rec.samples.rows()));
    w.put(static_cast<std::uint64_t>(rec.samples.cols()));
    w.put(rec.fs);
    w.put_string(rec.record_id);
    w.put_string(rec.subject_id);
    w.put(static_cast<std::uint32_t>(rec.labels.size()));
    w.put_bytes(rec.labels.data(), rec.labels.size());
    w.put_bytes(rec.samples.data(), static_cast<std::size_t>(rec.samples.size()) * sizeof(float));
    spill(path, {w.bytes().data(), w.bytes().size()});
}

// ---------------------------------------------------------------- CSV

std::string format_float(float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

void write_csv_record(const EcgRecord& rec, const std::filesystem::path& path) {
    std::string out;
    out += "# record_id=" + rec.record_id + "\n";
    out += "# subject_id=" + rec.subject_id + "\n";
    out += "# fs=" + format_double(rec.fs) + "\n";
    out += "# n_samples=" + std::to_string(rec.samples.cols()) + "\n";
    out += "# labels=";
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(rec.labels[i]);
    }
    out += "\n";
    for (int l = 0; l < kNumLeads; ++l) {
        if (l) out += ',';
        out += kLeadNames[static_cast<std::size_t>(l)];
    }
    out += "\n";
    for (Eigen::Index t = 0; t < rec.samples.cols(); ++t) {
        for (Eigen::Index l = 0; l < rec.samples.rows(); ++l) {
            if (l) out += ',';
            out += format_float(rec.samples(l, t));
        }
        out += "\n";
    }
    spill(path, out);
}

EcgRecord read_csv_record(const std::filesystem::path& path) {
    const auto buf = slurp(path);
    std::istringstream in(std::string(buf.begin(), buf.end()));
    std::map<std::string, std::string> meta;
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            auto value = line.substr(eq + 1);
            if (!value.empty() && value.back() == '\r') value.pop_back();
            meta[key] = value;
            continue;
        }
        header = split(line, ',');
        break;
    }
    if (header.empty()) throw DataError(DataErrc::malformed_header, "malformed header: no column row");
    if (header.size() != kNumLeads) {
        throw DataError(DataErrc::lead_count_mismatch,
                        "lead count mismatch: file declares " + std::to_string(header.size()));
    }
    for (int l = 0; l < kNumLeads; ++l) {
        if (header[static_cast<std::size_t>(l)] != kLeadNames[static_cast<std::size_t>(l)]) {
            throw DataError(DataErrc::malformed_header, "malformed header: unexpected lead name " +
                                                            header[static_cast<std::size_t>(l)]);
        }
    }
    for (const char* key : {"record_id", "subject_id", "fs", "n_samples", "labels"}) {
        if (!meta.count(key)) {
            throw DataError(DataErrc::malformed_header, std::string("malformed header: missing ") + key);
        }
    }
    EcgRecord rec;
    rec.record_id = meta["record_id"];
    rec.subject_id = meta["subject_id"];
    std::size_t n = 0;
    {
        const auto& s = meta["fs"];
        const auto res = std::from_chars(s.data(), s.data() + s.size(), rec.fs);
        const auto res2 = std::from_chars(meta["n_samples"].data(),
                                          meta["n_samples"].data() + meta["n_samples"].size(), n);
        if (res.ec != std::errc() || res2.ec != std::errc() || n == 0 || !(rec.fs > 0.0)) {
            throw DataError(DataErrc::malformed_header, "malformed header: bad fs or n_samples");
        }
    }
    if (!meta["labels"].empty()) {
        for (const auto& tok : split(meta["labels"], ',')) {
            int v = 0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || v < 0 || v > 1) {
                throw DataError(DataErrc::malformed_header, "malformed header: bad label value");
            }
            rec.labels.push_back(static_cast<std::uint8_t>(v));
        }
    }
    rec.samples.resize(kNumLeads, static_cast<Eigen::Index>(n));
    std::size_t t = 0;
    while (t < n && std::getline(in, line)) {
        const auto fields = split(line, ',');
        if (fields.size() != kNumLeads) {
            throw DataError(DataErrc::truncated_payload,
                            "truncated payload: row " + std::to_string(t) + " has " +
                                std::to_string(fields.size()) + " fields");
        }
        for (int l = 0; l < kNumLeads; ++l) {
            const auto& f = fields[static_cast<std::size_t>(l)];
            float v = 0.0f;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc()) {
                throw DataError(DataErrc::truncated_payload, "unparseable sample at row " + std::to_string(t));
            }
            rec.samples(l, static_cast<Eigen::Index>(t)) = v;
        }
        ++t;
    }
    if (t < n) {
        throw DataError(DataErrc::truncated_payload, "truncated payload: expected " + std::to_string(n) +
                                                         " rows, found " + std::to_string(t));
    }
    return rec;
}

}  // namespace

int lead_index(std::string_view name) {
    for (std::size_t i = 0; i < kLeadNames.size(); ++i) {
        if (kLeadNames[i] == name) return static_cast<int>(i);
    }
    throw DataError(DataErrc::precondition, "unknown lead name: " + std::string(name));
}

void validate_record(const EcgRecord& record, int n_classes) {
    if (record.samples.rows() != kNumLeads) {
        throw DataError(DataErrc::invalid_record, "record " + record.record_id + " does not have 12 leads");
    }
    if (record.samples.cols() < 1) {
        throw DataError(DataErrc::invalid_record, "record " + record.record_id + " is empty");
    }
    if (!(record.fs > 0.0) || !std::isfinite(record.fs)) {
        throw DataError(DataErrc::invalid_record, "record " + record.record_id + " has invalid fs");
    }
    if (record.subject_id.empty()) {
        throw DataError(DataErrc::invalid_record, "record " + record.record_id + " has empty subject id");
    }
    if (n_classes >= 0 && static_cast<int>(record.labels.size()) != n_classes) {
        throw DataError(DataErrc::invalid_record, "record " + record.record_id + " label length mismatch");
    }
}

RecordFormat parse_record_format(std::string_view name) {
    if (name == "raw-f32" || name == "raw" || name == "f32") return RecordFormat::raw_f32;
    if (name == "csv") return RecordFormat::csv;
    throw ConfigError("unknown record format: " + std::string(name));
}

EcgRecord read_record(const std::filesystem::path& path, RecordFormat format) {
    return format == RecordFormat::raw_f32 ? read_raw_record(path) : read_csv_record(path);
}

void write_record(const EcgRecord& record, const std::filesystem::path& path, RecordFormat format) {
    validate_record(record);
    if (format == RecordFormat::raw_f32) {
        write_raw_record(record, path);
    } else {
        write_csv_record(record, path);
    }
}

// ---------------------------------------------------------------- synthesis

namespace {

struct Wave {
    double amp;
    double offset_s;  // relative to the R peak
    double width_s;   // Gaussian sigma
};

// Per-lead amplitudes (mV) of P, Q, R, S, T.
constexpr double kP[kNumLeads] = {0.08, 0.15, 0.07, -0.10, 0.04, 0.10, 0.05, 0.08, 0.08, 0.08, 0.08, 0.08};
constexpr double kQ[kNumLeads] = {-0.05, -0.10, -0.05, 0.05, -0.03, -0.07, 0.0, -0.02, -0.05, -0.08, -0.10, -0.10};
constexpr double kR[kNumLeads] = {0.60, 1.00, 0.50, -0.80, 0.30, 0.70, 0.25, 0.50, 0.80, 1.10, 1.00, 0.80};
constexpr double kS[kNumLeads] = {-0.10, -0.20, -0.15, 0.10, -0.10, -0.15, -0.70, -0.80, -0.50, -0.30, -0.20, -0.10};
constexpr double kT[kNumLeads] = {0.20, 0.30, 0.12, -0.25, 0.10, 0.20, 0.05, 0.25, 0.35, 0.35, 0.30, 0.25};

std::vector<Wave> beat_waves(int lead, double rr_s, unsigned morphology, double strength) {
    const double qt = std::sqrt(std::max(rr_s, 0.2));
    const auto l = static_cast<std::size_t>(lead);
    std::vector<Wave> w = {
        {kP[l], -0.16 * qt, 0.020},
        {kQ[l], -0.025, 0.008},
        {kR[l], 0.0, 0.010},
        {kS[l], 0.025, 0.009},
        {kT[l], 0.28 * qt, 0.040},
    };
    if (lead >= kFirstPrecordialLead) {
        if (morphology & morph_wide_qrs) {
            const double k = 1.0 + 0.8 * strength;
            w[2].width_s *= k;
            w[3].width_s *= k;
            w[3].offset_s *= k;
        }
        if (morphology & morph_st_elevation) {
            w.push_back({0.15 * strength, 0.12 * qt, 0.035});
        }
        if (morphology & morph_t_inversion) {
            w[4].amp *= 1.0 - 1.6 * strength;
        }
    }
    return w;
}

double truncated_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (;;) {
        const double z = nd(rng);
        if (std::abs(z) <= 3.0) return z;
    }
}

}  // namespace

SynthResult synth_ecg(const SynthSpec& spec) {
    if (spec.n_beats < 2 && spec.duration_s <= 0.0) {
        throw DataError(DataErrc::precondition, "synth_ecg: n_beats must be >= 2");
    }
    if (!(spec.mean_rr_s > 0.0) || spec.rr_jitter_s < 0.0 || !(spec.fs > 0.0)) {
        throw DataError(DataErrc::precondition, "synth_ecg: invalid RR parameters");
    }
    std::mt19937_64 rng(spec.seed);
    const double fs = spec.fs;
    const auto rr_gap = [&](double rr_s) {
        return std::max<std::int64_t>(1, std::llround(rr_s * fs));
    };

    SynthResult out;
    std::vector<double> rr_of_beat;
    std::int64_t n_total = 0;
    if (spec.duration_s > 0.0) {
        n_total = std::llround(spec.duration_s * fs);
        std::uniform_real_distribution<double> phase(0.1, std::max(0.11, spec.mean_rr_s));
        std::int64_t r = std::llround(phase(rng) * fs);
        while (r < n_total) {
            out.r_peaks.push_back(r);
            const double rr = spec.mean_rr_s + spec.rr_jitter_s * truncated_normal(rng);
            rr_of_beat.push_back(rr);
            r += rr_gap(rr);
        }
    } else {
        std::int64_t r = std::llround(0.4 * fs);
        for (int b = 0; b < spec.n_beats; ++b) {
            out.r_peaks.push_back(r);
            const double rr = spec.mean_rr_s + spec.rr_jitter_s * truncated_normal(rng);
            rr_of_beat.push_back(rr);
            if (b + 1 < spec.n_beats) r += rr_gap(rr);
        }
        n_total = out.r_peaks.back() + std::llround(0.6 * fs);
    }

    EcgRecord& rec = out.record;
    rec.fs = fs;
    rec.record_id = spec.record_id;
    rec.subject_id = spec.subject_id;
    rec.labels = spec.labels;
    rec.samples = SampleMatrix::Zero(kNumLeads, n_total);

    std::normal_distribution<double> nd(0.0, 1.0);
    const double gain = std::clamp(1.0 + spec.amplitude_jitter * nd(rng), 0.5, 1.5);

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(kNumLeads, n_total);
    for (std::size_t b = 0; b < out.r_peaks.size(); ++b) {
        const double rr = b > 0 ? rr_of_beat[b - 1] : spec.mean_rr_s;
        const auto r_idx = out.r_peaks[b];
        for (int lead = 0; lead < kNumLeads; ++lead) {
            for (const Wave& w : beat_waves(lead, rr, spec.morphology, spec.morphology_strength)) {
                if (w.amp == 0.0) continue;
                const double center = static_cast<double>(r_idx) + w.offset_s * fs;
                const double sigma = w.width_s * fs;
                const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(center - 5 * sigma)));
                const auto hi = std::min<std::int64_t>(n_total - 1, static_cast<std::int64_t>(std::ceil(center + 5 * sigma)));
                for (auto t = lo; t <= hi; ++t) {
                    const double z = (static_cast<double>(t) - center) / sigma;
                    acc(lead, t) += gain * w.amp * std::exp(-0.5 * z * z);
                }
            }
        }
    }
    if (spec.baseline_wander > 0.0) {
        std::uniform_real_distribution<double> freq(0.15, 0.35), phase(0.0, 2.0 * std::numbers::pi);
        for (int lead = 0; lead < kNumLeads; ++lead) {
            const double f = freq(rng), ph = phase(rng);
            for (std::int64_t t = 0; t < n_total; ++t) {
                acc(lead, t) += spec.baseline_wander *
                                std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / fs + ph);
            }
        }
    }
    if (spec.noise_std > 0.0) {
        for (int lead = 0; lead < kNumLeads; ++lead) {
            for (std::int64_t t = 0; t < n_total; ++t) acc(lead, t) += spec.noise_std * nd(rng);
        }
    }
    rec.samples = acc.cast<float>();
    return out;
}

// ---------------------------------------------------------------- catalog

DatasetCatalog catalog_build(const std::vector<RecordMeta>& records) {
    if (records.empty()) throw DataError(DataErrc::empty_input, "catalog_build: no records");
    std::set<std::string> vocab;
    std::set<std::string> seen_ids;
    for (const auto& r : records) {
        if (!seen_ids.insert(r.record_id).second) {
            throw DataError(DataErrc::duplicate_record_id, "duplicate record_id: " + r.record_id);
        }
        if (r.subject_id.empty()) {
            throw DataError(DataErrc::invalid_record, "record " + r.record_id + " has empty subject id");
        }
        vocab.insert(r.label_names.begin(), r.label_names.end());
    }
    DatasetCatalog cat;
    cat.class_names.assign(vocab.begin(), vocab.end());
    if (cat.class_names.empty()) {
        throw DataError(DataErrc::empty_input, "catalog_build: no labels observed");
    }
    for (const auto& r : records) {
        CatalogEntry e{r.record_id, r.subject_id, LabelVector(cat.class_names.size(), 0), r.path};
        for (const auto& name : r.label_names) {
            const auto it = std::lower_bound(cat.class_names.begin(), cat.class_names.end(), name);
            e.labels[static_cast<std::size_t>(it - cat.class_names.begin())] = 1;
        }
        cat.records.push_back(std::move(e));
    }
    return cat;
}

void validate_catalog(const DatasetCatalog& catalog) {
    if (catalog.class_names.empty()) throw DataError(DataErrc::invalid_record, "catalog has no classes");
    std::set<std::string> names(catalog.class_names.begin(), catalog.class_names.end());
    if (names.size() != catalog.class_names.size()) {
        throw DataError(DataErrc::invalid_record, "catalog class names contain duplicates");
    }
    std::set<std::string> ids;
    for (const auto& e : catalog.records) {
        if (!ids.insert(e.record_id).second) {
            throw DataError(DataErrc::duplicate_record_id, "duplicate record_id: " + e.record_id);
        }
        if (e.subject_id.empty()) throw DataError(DataErrc::invalid_record, "empty subject id");
        if (e.labels.size() != catalog.class_names.size()) {
            throw DataError(DataErrc::invalid_record, "label length mismatch for " + e.record_id);
        }
    }
}

void save_catalog(const DatasetCatalog& catalog, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["class_names"] = catalog.class_names;
    auto& recs = j["records"] = nlohmann::ordered_json::array();
    for (const auto& e : catalog.records) {
        nlohmann::ordered_json r;
        r["record_id"] = e.record_id;
        r["subject_id"] = e.subject_id;
        r["labels"] = std::vector<int>(e.labels.begin(), e.labels.end());
        r["path"] = e.path;
        recs.push_back(std::move(r));
    }
    spill(path, j.dump(2) + "\n");
}

DatasetCatalog load_catalog(const std::filesystem::path& path) {
    const auto buf = slurp(path);
    DatasetCatalog cat;
    try {
        const auto j = nlohmann::json::parse(buf.begin(), buf.end());
        cat.class_names = j.at("class_names").get<std::vector<std::string>>();
        for (const auto& r : j.at("records")) {
            CatalogEntry e;
            e.record_id = r.at("record_id").get<std::string>();
            e.subject_id = r.at("subject_id").get<std::string>();
            for (int v : r.at("labels").get<std::vector<int>>()) e.labels.push_back(static_cast<std::uint8_t>(v));
            e.path = r.value("path", "");
            cat.records.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(DataErrc::malformed_header, "malformed catalog " + path.string() + ": " + ex.what());
    }
    validate_catalog(cat);
    return cat;
}

EcgRecord load_entry(const CatalogEntry& entry, const std::filesystem::path& root) {
    std::filesystem::path p(entry.path);
    if (p.is_relative()) p = root / p;
    const auto format = p.extension() == ".csv" ? RecordFormat::csv : RecordFormat::raw_f32;
    EcgRecord rec = read_record(p, format);
    rec.record_id = entry.record_id;
    rec.subject_id = entry.subject_id;
    rec.labels = entry.labels;
    return rec;
}

}  // namespace rhythmorph
