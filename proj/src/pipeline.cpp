#include "rhythmorph/pipeline.hpp"

#include "rhythmorph/aggregate.hpp"
#include "rhythmorph/audit.hpp"
#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace rhythmorph {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string padded(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05d", prefix, i);
    return buf;
}

std::string extension(RecordFormat f) { return f == RecordFormat::raw_f32 ? ".f32" : ".csv"; }

}  // namespace

// ---------------------------------------------------------------- study data

Study synth_study(const StudySpec& spec) {
    if (spec.n_records < 1 || spec.n_subjects < 1 || spec.n_subjects > spec.n_records) {
        throw ConfigError("synthetic study needs 1 <= n_subjects <= n_records");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Subject {
        bool brady, irregular, st, wide;
        double base_rr;
    };
    std::vector<Subject> subjects;
    for (int s = 0; s < spec.n_subjects; ++s) {
        Subject sub{};
        sub.brady = unit(rng) < 0.3;
        sub.irregular = unit(rng) < 0.35;
        sub.st = unit(rng) < 0.35;
        sub.wide = unit(rng) < 0.35;
        sub.base_rr = sub.brady ? 1.2 + 0.3 * unit(rng) : 0.65 + 0.3 * unit(rng);
        subjects.push_back(sub);
    }

    Study study;
    study.catalog.class_names = {"bradycardia", "irregular_rhythm", "st_elevation", "wide_qrs"};
    for (int i = 0; i < spec.n_records; ++i) {
        const Subject& sub = subjects[static_cast<std::size_t>(i % spec.n_subjects)];
        SynthSpec s;
        s.duration_s = spec.duration_s;
        s.fs = spec.fs;
        s.mean_rr_s = sub.base_rr * (0.97 + 0.06 * unit(rng));
        s.rr_jitter_s = sub.irregular ? spec.irregular_jitter_s : spec.regular_jitter_s;
        s.morphology = (sub.st ? morph_st_elevation : 0u) | (sub.wide ? morph_wide_qrs : 0u);
        s.morphology_strength = spec.morphology_strength;
        s.noise_std = spec.noise_std;
        s.baseline_wander = spec.baseline_wander;
        s.amplitude_jitter = spec.amplitude_jitter;
        s.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
        s.record_id = padded("R", i);
        s.subject_id = padded("S", i % spec.n_subjects);
        s.labels = {static_cast<std::uint8_t>(sub.brady), static_cast<std::uint8_t>(sub.irregular),
                    static_cast<std::uint8_t>(sub.st), static_cast<std::uint8_t>(sub.wide)};
        EcgRecord rec = synth_ecg(s).record;
        study.catalog.records.push_back({rec.record_id, rec.subject_id, rec.labels, rec.record_id + ".f32"});
        study.records.push_back(std::move(rec));
    }
    validate_catalog(study.catalog);
    return study;
}

void write_study(const Study& study, const std::filesystem::path& dir, RecordFormat format) {
    std::filesystem::create_directories(dir);
    DatasetCatalog cat = study.catalog;
    for (std::size_t i = 0; i < study.records.size(); ++i) {
        const std::string name = study.records[i].record_id + extension(format);
        write_record(study.records[i], dir / name, format);
        cat.records[i].path = name;
    }
    save_catalog(cat, dir / "catalog.json");
}

Study load_study(const std::filesystem::path& catalog_path, const std::filesystem::path& data_dir) {
    Study s;
    s.catalog = load_catalog(catalog_path);
    const auto root = data_dir.empty() ? catalog_path.parent_path() : data_dir;
    for (const auto& e : s.catalog.records) s.records.push_back(load_entry(e, root));
    return s;
}

Study restrict_classes(const Study& study, const std::vector<std::string>& names) {
    std::vector<std::size_t> cols;
    for (const auto& n : names) {
        const auto it = std::find(study.catalog.class_names.begin(), study.catalog.class_names.end(), n);
        if (it == study.catalog.class_names.end()) throw ConfigError("unknown class '" + n + "'");
        cols.push_back(static_cast<std::size_t>(it - study.catalog.class_names.begin()));
    }
    Study out = study;
    out.catalog.class_names = names;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        LabelVector y;
        for (auto c : cols) y.push_back(study.catalog.records[i].labels[c]);
        out.catalog.records[i].labels = y;
        out.records[i].labels = y;
    }
    return out;
}

ClassGroups study_class_groups() {
    return {{"rhythm", kRhythmClasses}, {"morphology", kMorphologyClasses}};
}

// --------------------------------------------------------------- preparation

PreparedDataset prepare_dataset(const Study& study, const PreprocessParams& params,
                                const std::vector<int>& masked_leads) {
    if (study.records.size() != study.catalog.size()) {
        throw DataError(DataErrc::shape_mismatch, "study records and catalog differ in size");
    }
    PreparedDataset d;
    d.catalog = study.catalog;
    d.masked_leads = masked_leads;
    for (const auto& original : study.records) {
        validate_record(original, study.catalog.n_classes());
        EcgRecord rec = original;
        for (int lead : masked_leads) {
            if (lead < 0 || lead >= kNumLeads) throw ConfigError("masked lead index out of range");
            rec.samples.row(lead).setZero();
        }
        PreparedRecord p = preprocess_record(rec, params);
        d.bags.push_back(std::move(p.bag));
        d.hrv.push_back(record_hrv(rec));
    }
    return d;
}

// ------------------------------------------------------------ fold artifacts

Vector HrvScaler::apply(const Vector& h) const {
    return (h - mean).cwiseProduct(scale);
}

FoldArtifacts fit_fold_artifacts(const PreparedDataset& data, const std::vector<std::size_t>& train,
                                 const FitOptions& options, std::string fold_id) {
    if (train.empty()) throw DataError(DataErrc::empty_input, "fold has no training records");
    FoldArtifacts a;
    a.fold_id = std::move(fold_id);
    for (auto r : train) a.fit_record_ids.push_back(data.catalog.records[r].record_id);

    // Seeded subset of training slices for the bias quantiles.
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (auto r : train)
        for (std::size_t j = 0; j < data.bags[r].size(); ++j) slots.emplace_back(r, j);
    std::mt19937_64 rng(options.seed);
    std::shuffle(slots.begin(), slots.end(), rng);
    const auto n_fit = std::min<std::size_t>(slots.size(), static_cast<std::size_t>(options.rocket.fit_sample_size));
    std::vector<Signal> fit_slices;
    for (std::size_t i = 0; i < n_fit; ++i) fit_slices.push_back(data.bags[slots[i].first].slices[slots[i].second]);
    const Eigen::Index L = fit_slices.front().cols();
    a.rocket = minirocket_fit(fit_slices, L, options.seed, options.rocket);
    fit_slices.clear();

    std::size_t n_train_slices = 0;
    for (auto r : train) n_train_slices += data.bags[r].size();
    Matrix feats(static_cast<Eigen::Index>(n_train_slices), a.rocket.feature_count());
    Eigen::Index row = 0;
    for (auto r : train)
        for (const auto& s : data.bags[r].slices) feats.row(row++) = minirocket_transform(s, a.rocket).cast<double>().transpose();
    a.pca = pca_fit(feats, options.morph_dim, a.fold_id);
    const double mean_var = a.pca.explained_variance.mean();
    a.morph_scale = mean_var > 0 ? 1.0 / std::sqrt(mean_var) : 1.0;

    fit_counters().scaler_fit++;
    Matrix h(static_cast<Eigen::Index>(train.size()), kHrvDim);
    for (std::size_t i = 0; i < train.size(); ++i) h.row(static_cast<Eigen::Index>(i)) = data.hrv[train[i]].values.transpose();
    a.hrv.mean = h.colwise().mean().transpose();
    const Vector sd = ((h.rowwise() - a.hrv.mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
    a.hrv.scale = sd.unaryExpr([](double s) { return s > 1e-12 ? 1.0 / s : 1.0; });
    return a;
}

RecordFeatures record_features(const PreparedDataset& data, std::size_t record, const FoldArtifacts& a) {
    RecordFeatures f;
    for (const auto& s : data.bags[record].slices) {
        const Vector raw = minirocket_transform(s, a.rocket).cast<double>();
        f.morph.push_back(pca_apply(raw, a.pca) * a.morph_scale);
    }
    f.hrv = a.hrv.apply(data.hrv[record].values);
    return f;
}

std::vector<RecordFeatures> all_record_features(const PreparedDataset& data, const FoldArtifacts& a) {
    std::vector<RecordFeatures> out;
    out.reserve(data.catalog.size());
    for (std::size_t r = 0; r < data.catalog.size(); ++r) out.push_back(record_features(data, r, a));
    return out;
}

void store_artifacts(Bundle& b, const FoldArtifacts& a) {
    store_rocket(b, "rocket", a.rocket);
    store_pca(b, "pca", a.pca);
    b.put("hrv.mean", a.hrv.mean, BlockType::f64);
    b.put("hrv.scale", a.hrv.scale, BlockType::f64);
    b.meta["artifacts"] = {{"fold_id", a.fold_id}, {"morph_scale", a.morph_scale}, {"fit_record_ids", a.fit_record_ids}};
}

FoldArtifacts fetch_artifacts(const Bundle& b) {
    FoldArtifacts a;
    a.rocket = fetch_rocket(b, "rocket");
    a.pca = fetch_pca(b, "pca");
    a.hrv.mean = b.matrix("hrv.mean").col(0);
    a.hrv.scale = b.matrix("hrv.scale").col(0);
    try {
        const auto& j = b.meta.at("artifacts");
        a.fold_id = j.at("fold_id").get<std::string>();
        a.morph_scale = j.at("morph_scale").get<double>();
        a.fit_record_ids = j.at("fit_record_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(DataErrc::malformed_header, std::string("artifact metadata: ") + e.what());
    }
    return a;
}

// ------------------------------------------------------------ training / eval

Matrix label_matrix(const DatasetCatalog& catalog, const std::vector<std::size_t>& records) {
    Matrix y(static_cast<Eigen::Index>(records.size()), catalog.n_classes());
    for (std::size_t i = 0; i < records.size(); ++i)
        for (int c = 0; c < catalog.n_classes(); ++c)
            y(static_cast<Eigen::Index>(i), c) = catalog.records[records[i]].labels[static_cast<std::size_t>(c)];
    return y;
}

namespace {

Vector predict_one(const EcgModel& model, const SliceBag& bag, const RecordFeatures& f, double q) {
    Matrix slice_probs(static_cast<Eigen::Index>(bag.size()), model.config().n_classes);
    for (std::size_t j = 0; j < bag.size(); ++j)
        slice_probs.row(static_cast<Eigen::Index>(j)) = model.forward(bag.slices[j], f.morph[j], f.hrv).transpose();
    return pool_record(slice_probs, q).probs;
}

}  // namespace

Matrix predict_records(const EcgModel& model, const PreparedDataset& data, const std::vector<std::size_t>& records,
                       const FoldArtifacts& artifacts, double pool_q) {
    Matrix p(static_cast<Eigen::Index>(records.size()), model.config().n_classes);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const RecordFeatures f = record_features(data, records[i], artifacts);
        p.row(static_cast<Eigen::Index>(i)) = predict_one(model, data.bags[records[i]], f, pool_q).transpose();
    }
    return p;
}

CvResult run_cv(const PreparedDataset& data, const std::vector<int>& record_folds, const CvOptions& o,
                FeatureCache* cache) {
    check_record_folds(data.catalog, record_folds, o.k);
    const std::size_t n = data.catalog.size();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    CvResult result;
    result.labels = label_matrix(data.catalog, all);
    if (o.shuffle_labels) {
        std::vector<std::size_t> perm = all;
        std::mt19937_64 rng(mix_seed(o.seed, 0x5EED));
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix shuffled(result.labels.rows(), result.labels.cols());
        for (std::size_t i = 0; i < n; ++i) shuffled.row(static_cast<Eigen::Index>(i)) = result.labels.row(static_cast<Eigen::Index>(perm[i]));
        result.labels = shuffled;
    }
    result.report.tau = o.tau;
    result.report.tau_deviation = o.tau != 0.5;
    result.report.variant = variant_name(o.variant);
    result.report.class_names = data.catalog.class_names;

    std::vector<int> folds = o.folds_to_run;
    if (folds.empty()) {
        folds.resize(static_cast<std::size_t>(o.k));
        std::iota(folds.begin(), folds.end(), 0);
    }
    for (int f : folds) {
        if (f < 0 || f >= o.k) throw ConfigError("fold index out of range");
        FoldRun run;
        run.fold = f;
        std::set<std::string> train_ids;
        for (std::size_t i = 0; i < n; ++i) {
            if (record_folds[i] == f) {
                run.test_records.push_back(i);
            } else {
                run.train_records.push_back(i);
                train_ids.insert(data.catalog.records[i].record_id);
            }
        }
        const std::string fold_id = "fold" + std::to_string(f);
        const bool cached = cache && cache->folds.count(f);
        if (o.progress) o.progress(fold_id + (cached ? ": cached features" : ": fitting features"));

        std::vector<RecordFeatures> local_features;
        const std::vector<RecordFeatures>* features = nullptr;
        if (cached) {
            run.artifacts = cache->folds.at(f).first;
            features = &cache->folds.at(f).second;
        } else {
            FitOptions fit = o.fit;
            fit.seed = mix_seed(o.fit.seed, static_cast<std::uint64_t>(f));
            run.artifacts = fit_fold_artifacts(data, run.train_records, fit, fold_id);
            local_features = all_record_features(data, run.artifacts);
            if (cache) {
                cache->folds[f] = {run.artifacts, std::move(local_features)};
                features = &cache->folds.at(f).second;
            } else {
                features = &local_features;
            }
        }
        assert_fit_isolation(run.artifacts.fit_record_ids, train_ids, "fold " + std::to_string(f) + " feature fit");
        if (run.artifacts.pca.fold_id != fold_id) throw LeakageError("PCA projection belongs to another fold");

        ModelConfig mc = o.model;
        mc.seed = mix_seed(o.seed, 100 + static_cast<std::uint64_t>(f));
        EcgModel model(mc);
        model.set_variant(o.variant);
        std::vector<TrainSample> samples;
        for (auto r : run.train_records) {
            const auto& bag = data.bags[r];
            for (std::size_t j = 0; j < bag.size(); ++j) {
                samples.push_back({&bag.slices[j], &(*features)[r].morph[j], &(*features)[r].hrv,
                                   result.labels.row(static_cast<Eigen::Index>(r)).transpose()});
            }
        }
        TrainParams tp = o.train;
        tp.seed = mix_seed(o.seed, 200 + static_cast<std::uint64_t>(f));
        if (o.progress) o.progress(fold_id + ": training on " + std::to_string(samples.size()) + " slices");
        TrainResult tr = train_model(model, samples, tp, [&](const EpochLog& e) {
            if (o.progress) {
                char buf[128];
                std::snprintf(buf, sizeof buf, "%s: epoch %d loss %.5f train-auc %.3f", fold_id.c_str(), e.epoch, e.loss,
                              e.train_macro_roc_auc);
                o.progress(buf);
            }
        });
        if (tr.diverged) throw NumericError(fold_id + ": " + tr.message);
        model.restore(tr.ema.shadow);
        run.weights = tr.ema.shadow;
        run.log = tr.log;

        run.test_probs.resize(static_cast<Eigen::Index>(run.test_records.size()), mc.n_classes);
        Matrix test_labels(static_cast<Eigen::Index>(run.test_records.size()), mc.n_classes);
        for (std::size_t i = 0; i < run.test_records.size(); ++i) {
            const auto r = run.test_records[i];
            run.test_probs.row(static_cast<Eigen::Index>(i)) = predict_one(model, data.bags[r], (*features)[r], o.pool_q).transpose();
            test_labels.row(static_cast<Eigen::Index>(i)) = result.labels.row(static_cast<Eigen::Index>(r));
        }
        result.report.folds.push_back(
            evaluate_predictions(run.test_probs, test_labels, data.catalog.class_names, o.tau, o.groups, fold_id));
        result.folds.push_back(std::move(run));
    }
    return result;
}

DropoutReport lead_dropout_eval(const CvResult& cv, const PreparedDataset& clean, const PreparedDataset& masked,
                                const CvOptions& o) {
    if (clean.catalog.size() != masked.catalog.size()) {
        throw DataError(DataErrc::shape_mismatch, "masked dataset does not match the evaluation set");
    }
    DropoutReport rep;
    rep.masked_leads = masked.masked_leads;
    rep.baseline = cv.report;
    rep.masked.tau = o.tau;
    rep.masked.tau_deviation = o.tau != 0.5;
    rep.masked.variant = cv.report.variant;
    rep.masked.class_names = clean.catalog.class_names;
    for (std::size_t k = 0; k < cv.folds.size(); ++k) {
        const FoldRun& run = cv.folds[k];
        ModelConfig mc = o.model;
        mc.seed = 0;
        EcgModel model(mc);
        model.set_variant(o.variant);
        model.restore(run.weights);
        Matrix probs = masked.masked_leads.empty()
                           ? run.test_probs
                           : predict_records(model, masked, run.test_records, run.artifacts, o.pool_q);
        Matrix y(static_cast<Eigen::Index>(run.test_records.size()), cv.labels.cols());
        for (std::size_t i = 0; i < run.test_records.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = cv.labels.row(static_cast<Eigen::Index>(run.test_records[i]));
        rep.masked.folds.push_back(evaluate_predictions(probs, y, clean.catalog.class_names, o.tau, o.groups,
                                                        cv.report.folds[k].fold));
    }
    rep.macro_delta = rep.masked.macro_roc_auc().mean - rep.baseline.macro_roc_auc().mean;
    for (const auto& [g, _] : o.groups) {
        rep.group_delta[g] = rep.masked.group_roc_auc(g).mean - rep.baseline.group_roc_auc(g).mean;
    }
    return rep;
}

// ------------------------------------------------------------ checkpoints

void store_model(Bundle& b, const EcgModel& model) {
    for (const auto& p : model.params().params()) b.put("param/" + p.name, p.value, BlockType::f32);
    b.meta["model"] = model.config().to_json();
    b.meta["variant"] = variant_name(model.variant());
}

Bundle train_full(const PreparedDataset& data, const CvOptions& o, std::vector<EpochLog>* log) {
    std::vector<std::size_t> all(data.catalog.size());
    std::iota(all.begin(), all.end(), 0);
    FitOptions fit = o.fit;
    fit.seed = mix_seed(o.fit.seed, 999);
    const FoldArtifacts a = fit_fold_artifacts(data, all, fit, "all");
    const auto features = all_record_features(data, a);
    ModelConfig mc = o.model;
    mc.seed = mix_seed(o.seed, 1000);
    EcgModel model(mc);
    model.set_variant(o.variant);
    const Matrix labels = label_matrix(data.catalog, all);
    std::vector<TrainSample> samples;
    for (auto r : all)
        for (std::size_t j = 0; j < data.bags[r].size(); ++j)
            samples.push_back({&data.bags[r].slices[j], &features[r].morph[j], &features[r].hrv,
                               labels.row(static_cast<Eigen::Index>(r)).transpose()});
    TrainParams tp = o.train;
    tp.seed = mix_seed(o.seed, 1001);
    TrainResult tr = train_model(model, samples, tp, [&](const EpochLog& e) {
        if (o.progress) o.progress("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss));
    });
    if (log) *log = tr.log;
    Bundle b;
    b.meta["class_names"] = data.catalog.class_names;
    b.meta["pool_q"] = o.pool_q;
    b.meta["diverged"] = tr.diverged;
    if (tr.diverged) b.meta["divergence"] = tr.message;
    model.restore(tr.ema.shadow);
    store_model(b, model);
    store_artifacts(b, a);
    if (tr.diverged) throw NumericError(tr.message);
    return b;
}

LoadedModel load_model_bundle(const Bundle& b) {
    LoadedModel m;
    if (!b.meta.contains("model")) throw DataError(DataErrc::malformed_header, "bundle holds no model");
    const ModelConfig mc = ModelConfig::from_json(b.meta.at("model"));
    m.model = std::make_unique<EcgModel>(mc);
    m.model->set_variant(parse_variant(b.meta.value("variant", std::string("full"))));
    for (auto& p : m.model->params().params()) {
        const Matrix v = b.matrix("param/" + p.name);
        if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
            throw DataError(DataErrc::shape_mismatch, "checkpoint shape mismatch for " + p.name);
        }
        p.value = v;
    }
    m.artifacts = fetch_artifacts(b);
    m.class_names = b.meta.at("class_names").get<std::vector<std::string>>();
    m.pool_q = b.meta.value("pool_q", 3.0);
    return m;
}

EvalReport zeroshot_eval(const LoadedModel& loaded, const PreparedDataset& data, double tau, const ClassGroups& groups) {
    const auto before = fit_counters().snapshot();
    std::vector<std::size_t> all(data.catalog.size());
    std::iota(all.begin(), all.end(), 0);
    const Matrix probs = predict_records(*loaded.model, data, all, loaded.artifacts, loaded.pool_q);
    // Align the external label vocabulary with the model's classes by name.
    Matrix y = Matrix::Zero(probs.rows(), probs.cols());
    for (std::size_t c = 0; c < loaded.class_names.size(); ++c) {
        const auto& names = data.catalog.class_names;
        const auto it = std::find(names.begin(), names.end(), loaded.class_names[c]);
        if (it == names.end()) continue;
        const auto src = static_cast<std::size_t>(it - names.begin());
        for (std::size_t i = 0; i < all.size(); ++i) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = data.catalog.records[i].labels[src];
    }
    EvalReport rep;
    rep.tau = tau;
    rep.tau_deviation = tau != 0.5;
    rep.variant = variant_name(loaded.model->variant());
    rep.class_names = loaded.class_names;
    rep.folds.push_back(evaluate_predictions(probs, y, loaded.class_names, tau, groups, "zeroshot"));
    const auto after = fit_counters().snapshot();
    if (after.total() != before.total()) throw LeakageError("zeroshot invoked a fit or update operation");
    return rep;
}

}  // namespace rhythmorph
