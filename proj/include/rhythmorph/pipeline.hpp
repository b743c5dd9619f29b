#pragma once

#include "rhythmorph/checkpoint.hpp"
#include "rhythmorph/folds.hpp"
#include "rhythmorph/ingest.hpp"
#include "rhythmorph/metrics.hpp"
#include "rhythmorph/minirocket.hpp"
#include "rhythmorph/model.hpp"
#include "rhythmorph/pca.hpp"
#include "rhythmorph/preprocess.hpp"
#include "rhythmorph/rhythm.hpp"
#include "rhythmorph/train.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rhythmorph {

// ---------------------------------------------------------------- study data

inline const std::vector<std::string> kRhythmClasses = {"bradycardia", "irregular_rhythm"};
inline const std::vector<std::string> kMorphologyClasses = {"st_elevation", "wide_qrs"};

struct StudySpec {
    int n_records = 400;
    int n_subjects = 200;
    double duration_s = 10.0;
    double fs = 500.0;
    double noise_std = 0.04;
    double baseline_wander = 0.1;
    double amplitude_jitter = 0.1;
    double morphology_strength = 0.6;
    double irregular_jitter_s = 0.15;
    double regular_jitter_s = 0.02;
    std::uint64_t seed = 0;
};

struct Study {
    DatasetCatalog catalog;
    std::vector<EcgRecord> records;  // same order as the catalog
};

// Subjects carry the labels; each record of a subject shares them. Rhythm
// classes change RR statistics only, morphology classes change V1-V6 only.
Study synth_study(const StudySpec& spec);

// Writes records as <record_id>.<ext> and catalog.json under `dir`.
void write_study(const Study& study, const std::filesystem::path& dir, RecordFormat format);
Study load_study(const std::filesystem::path& catalog_path, const std::filesystem::path& data_dir = {});

// Keeps only the named class columns (in the given order).
Study restrict_classes(const Study& study, const std::vector<std::string>& class_names);

ClassGroups study_class_groups();

// --------------------------------------------------------------- preparation

struct PreparedDataset {
    DatasetCatalog catalog;
    std::vector<SliceBag> bags;
    std::vector<HrvVector> hrv;  // record-level, unscaled
    std::vector<int> masked_leads;
};

// Filter, normalise, slice and extract HRV from every record. Leads in
// `masked_leads` are zeroed in the raw record first.
PreparedDataset prepare_dataset(const Study& study, const PreprocessParams& params,
                                const std::vector<int>& masked_leads = {});

// ------------------------------------------------------------ fold artifacts

struct HrvScaler {
    Vector mean = Vector::Zero(kHrvDim);
    Vector scale = Vector::Ones(kHrvDim);
    Vector apply(const Vector& h) const;
};

struct FoldArtifacts {
    std::string fold_id;
    RocketConfig rocket;
    PcaProjection pca;
    double morph_scale = 1.0;  // single global factor, not per component
    HrvScaler hrv;
    std::vector<std::string> fit_record_ids;
};

struct FitOptions {
    RocketOptions rocket;
    Eigen::Index morph_dim = 192;
    std::uint64_t seed = 0;
};

FoldArtifacts fit_fold_artifacts(const PreparedDataset& data, const std::vector<std::size_t>& train_records,
                                 const FitOptions& options, std::string fold_id);

struct RecordFeatures {
    std::vector<Vector> morph;  // one per slice
    Vector hrv;                 // scaled
};

RecordFeatures record_features(const PreparedDataset& data, std::size_t record, const FoldArtifacts& artifacts);
std::vector<RecordFeatures> all_record_features(const PreparedDataset& data, const FoldArtifacts& artifacts);

void store_artifacts(Bundle& b, const FoldArtifacts& a);
FoldArtifacts fetch_artifacts(const Bundle& b);

// ------------------------------------------------------------ training / eval

struct CvOptions {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<int> folds_to_run;  // empty: all folds
    ModelVariant variant = ModelVariant::full;
    ModelConfig model;
    TrainParams train;
    FitOptions fit;
    double pool_q = 3.0;
    double tau = 0.5;
    ClassGroups groups;
    bool shuffle_labels = false;
    std::function<void(const std::string&)> progress;
};

struct FoldRun {
    int fold = 0;
    std::vector<std::size_t> train_records, test_records;
    FoldArtifacts artifacts;
    std::vector<Matrix> weights;  // EMA weights used for evaluation
    std::vector<EpochLog> log;
    Matrix test_probs;            // record-level
};

struct CvResult {
    EvalReport report;
    std::vector<FoldRun> folds;
    Matrix labels;  // labels used (after any shuffling), one row per record
};

// Fold artifacts depend only on the preprocessed training records, so they may
// be shared across variants and label permutations through this cache.
struct FeatureCache {
    std::map<int, std::pair<FoldArtifacts, std::vector<RecordFeatures>>> folds;
};

CvResult run_cv(const PreparedDataset& data, const std::vector<int>& record_folds, const CvOptions& options,
                FeatureCache* cache = nullptr);

// Record-level probabilities from a trained model and fixed artifacts. Never
// fits anything.
Matrix predict_records(const EcgModel& model, const PreparedDataset& data, const std::vector<std::size_t>& records,
                       const FoldArtifacts& artifacts, double pool_q);

Matrix label_matrix(const DatasetCatalog& catalog, const std::vector<std::size_t>& records);

struct DropoutReport {
    std::vector<int> masked_leads;
    EvalReport baseline, masked;
    double macro_delta = 0;                   // masked - baseline, macro ROC-AUC
    std::map<std::string, double> group_delta;
};

// Re-evaluates the trained fold models of `cv` on the masked dataset with
// the same fold artifacts. Empty mask gives zero deltas.
DropoutReport lead_dropout_eval(const CvResult& cv, const PreparedDataset& clean, const PreparedDataset& masked,
                                const CvOptions& options);

// Trains one model on all records (fold id "all") and returns the bundle.
Bundle train_full(const PreparedDataset& data, const CvOptions& options, std::vector<EpochLog>* log = nullptr);

struct LoadedModel {
    std::unique_ptr<EcgModel> model;
    FoldArtifacts artifacts;
    std::vector<std::string> class_names;
    double pool_q = 3.0;
};

void store_model(Bundle& b, const EcgModel& model);
LoadedModel load_model_bundle(const Bundle& b);

// Zero-shot evaluation: stored artifacts and weights only; asserts that no
// fit counter moved.
EvalReport zeroshot_eval(const LoadedModel& loaded, const PreparedDataset& data, double tau,
                         const ClassGroups& groups = {});

}  // namespace rhythmorph
