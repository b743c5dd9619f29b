#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rhythmorph {

inline constexpr int kNumLeads = 12;
inline constexpr std::array<std::string_view, kNumLeads> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};
inline constexpr int kLeadII = 1;
inline constexpr int kFirstPrecordialLead = 6;

using SampleMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelVector = std::vector<std::uint8_t>;

// Returns the lead index for a name such as "V3"; throws DataError if unknown.
int lead_index(std::string_view name);

struct EcgRecord {
    SampleMatrix samples;  // kNumLeads x N
    double fs = 500.0;
    std::string subject_id;
    std::string record_id;
    LabelVector labels;

    Eigen::Index length() const { return samples.cols(); }
    bool operator==(const EcgRecord&) const = default;
};

// Throws DataError(invalid_record) when a record breaks the type invariants.
// `n_classes` < 0 skips the label-length check.
void validate_record(const EcgRecord& record, int n_classes = -1);

enum class RecordFormat { raw_f32, csv };

RecordFormat parse_record_format(std::string_view name);

// Raw-f32 layout (little-endian):
//   char[4] "ECGF" | u32 version | u32 n_leads | u64 n_samples | f64 fs
//   u32 len + record_id | u32 len + subject_id | u32 n_labels + u8[n_labels]
//   f32[n_leads * n_samples] row-major (lead-major) payload
EcgRecord read_record(const std::filesystem::path& path, RecordFormat format);
void write_record(const EcgRecord& record, const std::filesystem::path& path, RecordFormat format);

// Synthetic morphology variants; they only alter precordial (V1-V6) templates.
enum MorphologyFlags : unsigned {
    morph_normal = 0,
    morph_wide_qrs = 1u << 0,
    morph_st_elevation = 1u << 1,
    morph_t_inversion = 1u << 2,
};

struct SynthSpec {
    int n_beats = 10;
    double mean_rr_s = 0.8;
    double rr_jitter_s = 0.0;
    unsigned morphology = morph_normal;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
    double fs = 500.0;
    // When > 0 the record has exactly round(duration_s * fs) samples and beats
    // are generated until the record is covered (n_beats is then ignored).
    double duration_s = 0.0;
    double amplitude_jitter = 0.0;  // relative per-record gain spread
    double baseline_wander = 0.0;   // peak amplitude of a slow sinusoid
    // Strength of the morphology variants in [0, 1].
    double morphology_strength = 1.0;
    std::string record_id = "synth";
    std::string subject_id = "synth";
    LabelVector labels;
};

struct SynthResult {
    EcgRecord record;
    std::vector<std::int64_t> r_peaks;  // ground-truth R indices
};

SynthResult synth_ecg(const SynthSpec& spec);

struct RecordMeta {
    std::string record_id;
    std::string subject_id;
    std::vector<std::string> label_names;
    std::string path;
};

struct CatalogEntry {
    std::string record_id;
    std::string subject_id;
    LabelVector labels;
    std::string path;
};

struct DatasetCatalog {
    std::vector<CatalogEntry> records;
    std::vector<std::string> class_names;

    std::size_t size() const { return records.size(); }
    int n_classes() const { return static_cast<int>(class_names.size()); }
};

// Vocabulary is the lexicographically sorted union of observed labels.
DatasetCatalog catalog_build(const std::vector<RecordMeta>& records);
// Validates the catalog invariants; throws DataError on violation.
void validate_catalog(const DatasetCatalog& catalog);

void save_catalog(const DatasetCatalog& catalog, const std::filesystem::path& path);
DatasetCatalog load_catalog(const std::filesystem::path& path);

// Loads the record an entry points at; relative paths resolve against `root`.
EcgRecord load_entry(const CatalogEntry& entry, const std::filesystem::path& root);

}  // namespace rhythmorph
