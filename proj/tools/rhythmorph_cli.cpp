// Command-line entry point. Every subcommand reads a flat config file plus
// `--key value` overrides, validates it, runs its pipeline and writes outputs
// and a manifest.json under out_dir.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error, 5 leakage.

#include "rhythmorph/audit.hpp"
#include "rhythmorph/bench.hpp"
#include "rhythmorph/config.hpp"
#include "rhythmorph/errors.hpp"
#include "rhythmorph/folds.hpp"
#include "rhythmorph/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;
using namespace rhythmorph;

namespace {

constexpr const char* kVersion = "1.0.0";

const std::vector<std::string> kSubcommands = {"synth", "featurize", "preprocess", "train", "eval",
                                               "zeroshot", "ablate", "dropout", "bench", "saliency"};

std::string canonical_key(std::string k) {
    std::replace(k.begin(), k.end(), '-', '_');
    if (k == "out") return "out_dir";
    if (k == "n") return "n_records";
    if (k == "model") return "checkpoint";
    return k;
}

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& args) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError("unexpected argument '" + a + "'");
        std::string body = a.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(canonical_key(body.substr(0, eq)), body.substr(eq + 1));
        } else {
            if (i + 1 >= args.size()) throw ConfigError("option '" + a + "' needs a value");
            out.emplace_back(canonical_key(body), args[++i]);
        }
    }
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError(DataErrc::io, "cannot write " + p.string());
    f << text;
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) { write_text(p, j.dump(2) + "\n"); }

struct Run {
    std::string subcommand;
    RunConfig cfg;
    fs::path out;

    void log(const std::string& msg) const { std::cerr << "[" << subcommand << "] " << msg << "\n"; }

    void manifest(const nlohmann::ordered_json& extra = {}) const {
        nlohmann::ordered_json m;
        m["version"] = kVersion;
        m["subcommand"] = subcommand;
        m["seed"] = cfg.seed();
        m["config_hash"] = cfg.hash_hex();
        m["config"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : cfg.entries()) m["config"][k] = v;
        if (!extra.is_null()) m["outputs"] = extra;
        write_json(out / "manifest.json", m);
    }
};

// A catalog is either given, or the run synthesizes the study in memory.
Study obtain_study(const Run& r) {
    const auto& cat = r.cfg.str("catalog");
    Study s;
    if (!cat.empty()) {
        s = load_study(cat, r.cfg.str("data_dir"));
    } else {
        StudySpec spec;
        spec.n_records = static_cast<int>(r.cfg.integer("n_records"));
        spec.n_subjects = static_cast<int>(r.cfg.integer("n_subjects"));
        if (spec.n_subjects <= 0) spec.n_subjects = std::max(1, spec.n_records / 2);  // 0 = auto
        spec.duration_s = r.cfg.number("duration_s");
        spec.fs = r.cfg.number("fs");
        spec.noise_std = r.cfg.number("noise_std");
        spec.baseline_wander = r.cfg.number("baseline_wander");
        spec.amplitude_jitter = r.cfg.number("amplitude_jitter");
        spec.morphology_strength = r.cfg.number("morphology_strength");
        spec.irregular_jitter_s = r.cfg.number("irregular_jitter_s");
        spec.regular_jitter_s = r.cfg.number("regular_jitter_s");
        spec.seed = r.cfg.seed();
        s = synth_study(spec);
    }
    const auto mode = r.cfg.str("label_mode");
    if (mode == "rhythm") s = restrict_classes(s, kRhythmClasses);
    if (mode == "morphology") s = restrict_classes(s, kMorphologyClasses);
    return s;
}

std::vector<int> mask_indices(const RunConfig& cfg) {
    std::vector<int> m;
    for (const auto& name : cfg.list("mask_leads")) m.push_back(lead_index(name));
    return m;
}

CvOptions cv_options(const Run& r, const DatasetCatalog& cat) {
    CvOptions o;
    o.k = static_cast<int>(r.cfg.integer("folds"));
    o.seed = r.cfg.seed();
    const long ef = r.cfg.integer("eval_folds");
    for (long f = 0; f < ef; ++f) o.folds_to_run.push_back(static_cast<int>(f));
    o.variant = parse_variant(r.cfg.str("variant"));
    o.model = r.cfg.model(cat.n_classes());
    o.train = r.cfg.train();
    o.fit.rocket = r.cfg.rocket();
    o.fit.morph_dim = o.model.morph_dim();
    o.fit.seed = r.cfg.seed();
    o.pool_q = r.cfg.pool_q();
    o.tau = r.cfg.tau();
    o.groups = r.cfg.class_groups();
    o.progress = [&r](const std::string& m) { r.log(m); };
    return o;
}

void announce_tau(const Run& r) {
    if (r.cfg.tau() != 0.5) {
        std::cout << "*** PROTOCOL DEVIATION: decision threshold tau = " << r.cfg.tau()
                  << " (fixed protocol value is 0.5) ***\n";
    }
}

void print_summary(const EvalReport& rep) {
    const auto p = [](const char* name, MeanStd m) {
        std::cout << name << " " << m.mean << " +/- " << m.std << "\n";
    };
    p("macro_roc_auc", rep.macro_roc_auc());
    p("macro_pr_auc", rep.macro_pr_auc());
    p("macro_f1", rep.macro_f1());
    std::map<std::string, bool> groups;
    for (const auto& f : rep.folds)
        for (const auto& [g, _] : f.group_roc_auc) groups[g] = true;
    for (const auto& [g, _] : groups) {
        const auto m = rep.group_roc_auc(g);
        std::cout << "group_roc_auc." << g << " " << m.mean << " +/- " << m.std << "\n";
    }
    if (rep.tau_deviation) std::cout << "tau_deviation true (tau = " << rep.tau << ")\n";
}

void write_report(const Run& r, const EvalReport& rep, const std::string& stem) {
    write_json(r.out / (stem + ".json"), rep.to_json());
    write_text(r.out / (stem + ".csv"), rep.to_csv());
}

std::vector<int> record_folds(const Run& r, const DatasetCatalog& cat) {
    return subject_kfold(cat, static_cast<int>(r.cfg.integer("folds")), r.cfg.seed()).record_folds(cat);
}

// ------------------------------------------------------------- subcommands

void cmd_synth(const Run& r) {
    const Study s = obtain_study(r);
    write_study(s, r.out, parse_record_format(r.cfg.str("format")));
    r.manifest({{"catalog", "catalog.json"}, {"records", s.catalog.size()}});
    std::cout << "wrote " << s.catalog.size() << " records to " << r.out.string() << "\n";
}

void cmd_preprocess(const Run& r) {
    const Study s = obtain_study(r);
    const PreparedDataset d = prepare_dataset(s, r.cfg.preprocess(), {});
    std::ostringstream os;
    os << "record_id,n_slices";
    for (const auto& n : hrv_feature_names()) os << ',' << n;
    os << '\n';
    for (std::size_t i = 0; i < d.catalog.size(); ++i) {
        os << d.catalog.records[i].record_id << ',' << d.bags[i].size();
        for (Eigen::Index j = 0; j < d.hrv[i].values.size(); ++j) os << ',' << d.hrv[i].values(j);
        os << '\n';
    }
    write_text(r.out / "hrv.csv", os.str());
    r.manifest({{"hrv", "hrv.csv"}});
    std::cout << "prepared " << d.catalog.size() << " records\n";
}

void cmd_featurize(const Run& r) {
    const Study s = obtain_study(r);
    const PreparedDataset d = prepare_dataset(s, r.cfg.preprocess(), {});
    std::vector<std::size_t> all(d.catalog.size());
    std::iota(all.begin(), all.end(), 0);
    FitOptions fit;
    fit.rocket = r.cfg.rocket();
    fit.morph_dim = r.cfg.model(d.catalog.n_classes()).morph_dim();
    fit.seed = r.cfg.seed();
    const FoldArtifacts a = fit_fold_artifacts(d, all, fit, "all");
    Bundle b;
    store_artifacts(b, a);
    save_bundle(b, r.out / "features.ckpt");
    std::ostringstream os;
    os << "record_id,slice,feature,value\n";
    for (std::size_t i = 0; i < d.catalog.size(); ++i) {
        const RecordFeatures f = record_features(d, i, a);
        for (std::size_t j = 0; j < f.morph.size(); ++j)
            for (Eigen::Index c = 0; c < f.morph[j].size(); ++c)
                os << d.catalog.records[i].record_id << ',' << j << ',' << c << ',' << f.morph[j](c) << '\n';
    }
    write_text(r.out / "morph_features.csv", os.str());
    r.manifest({{"artifacts", "features.ckpt"}, {"features", "morph_features.csv"},
                {"explained_variance_ratio", a.pca.explained_variance_ratio}});
    std::cout << "rocket features " << a.rocket.feature_count() << ", explained variance ratio "
              << a.pca.explained_variance_ratio << "\n";
}

void cmd_train(const Run& r) {
    const Study s = obtain_study(r);
    const PreparedDataset d = prepare_dataset(s, r.cfg.preprocess(), {});
    const CvOptions o = cv_options(r, d.catalog);
    std::vector<EpochLog> log;
    const Bundle b = train_full(d, o, &log);
    save_bundle(b, r.out / "model.ckpt");
    write_text(r.out / "training_log.csv", training_log_csv(log));
    r.manifest({{"checkpoint", "model.ckpt"}, {"training_log", "training_log.csv"}});
    std::cout << "final loss " << (log.empty() ? 0.0 : log.back().loss) << "\n";
}

void cmd_eval(const Run& r) {
    announce_tau(r);
    const Study s = obtain_study(r);
    const PreparedDataset d = prepare_dataset(s, r.cfg.preprocess(), {});
    const CvResult cv = run_cv(d, record_folds(r, d.catalog), cv_options(r, d.catalog));
    write_report(r, cv.report, "report");
    for (const auto& f : cv.folds)
        write_text(r.out / ("training_log_fold" + std::to_string(f.fold) + ".csv"), training_log_csv(f.log));
    r.manifest({{"report", "report.json"}, {"tau_deviation", cv.report.tau_deviation}});
    print_summary(cv.report);
}

void cmd_zeroshot(const Run& r) {
    announce_tau(r);
    if (r.cfg.str("checkpoint").empty()) throw ConfigError("zeroshot needs --model <checkpoint>");
    if (r.cfg.str("catalog").empty()) throw ConfigError("zeroshot needs --catalog <external catalog>");
    const LoadedModel m = load_model_bundle(load_bundle(r.cfg.str("checkpoint")));
    const Study s = obtain_study(r);
    const PreparedDataset d = prepare_dataset(s, r.cfg.preprocess(), {});
    const auto before = fit_counters().snapshot();
    const EvalReport rep = zeroshot_eval(m, d, r.cfg.tau(), r.cfg.class_groups());
    const auto fits = fit_counters().snapshot().total() - before.total();
    write_report(r, rep, "report");
    r.manifest({{"report", "report.json"}, {"fit_operations", fits}, {"tau_deviation", rep.tau_deviation}});
    print_summary(rep);
    std::cout << "fit_operations " << fits << "\n";
}

void cmd_ablate(const Run& r) {
    announce_tau(r);
    const Study s = obtain_study(r);
    const PreparedDataset d = prepare_dataset(s, r.cfg.preprocess(), {});
    const auto folds = record_folds(r, d.catalog);
    FeatureCache cache;
    nlohmann::ordered_json out;
    for (auto v : {ModelVariant::full, ModelVariant::no_hrv, ModelVariant::no_backbone, ModelVariant::no_morph}) {
        CvOptions o = cv_options(r, d.catalog);
        o.variant = v;
        const CvResult cv = run_cv(d, folds, o, &cache);
        write_report(r, cv.report, "report_" + variant_name(v));
        out[variant_name(v)] = cv.report.macro_roc_auc().mean;
        std::cout << variant_name(v) << " macro_roc_auc " << cv.report.macro_roc_auc().mean << "\n";
    }
    write_json(r.out / "ablation.json", out);
    r.manifest({{"ablation", "ablation.json"}});
}

void cmd_dropout(const Run& r) {
    announce_tau(r);
    const Study s = obtain_study(r);
    const auto pp = r.cfg.preprocess();
    const PreparedDataset clean = prepare_dataset(s, pp, {});
    const PreparedDataset masked = prepare_dataset(s, pp, mask_indices(r.cfg));
    const CvOptions o = cv_options(r, clean.catalog);
    const CvResult cv = run_cv(clean, record_folds(r, clean.catalog), o);
    const DropoutReport rep = lead_dropout_eval(cv, clean, masked, o);
    nlohmann::ordered_json j;
    j["masked_leads"] = r.cfg.list("mask_leads");
    j["macro_roc_auc_delta"] = rep.macro_delta;
    j["group_roc_auc_delta"] = rep.group_delta;
    j["baseline"] = rep.baseline.to_json();
    j["masked"] = rep.masked.to_json();
    write_json(r.out / "dropout.json", j);
    r.manifest({{"dropout", "dropout.json"}});
    std::cout << "macro_roc_auc_delta " << rep.macro_delta << "\n";
    for (const auto& [g, v] : rep.group_delta) std::cout << "group_delta." << g << " " << v << "\n";
}

void cmd_bench(const Run& r) {
    std::vector<Eigen::Index> lengths;
    for (const auto& s : r.cfg.list("bench_lengths")) lengths.push_back(std::stol(s));
    ScanBenchOptions o;
    o.reps = static_cast<int>(r.cfg.integer("bench_reps"));
    o.channels = r.cfg.integer("bench_channels");
    o.state = r.cfg.integer("bench_state");
    o.seed = r.cfg.seed();
    const auto rows = scan_scaling_bench(lengths, o);
    const std::string csv = scan_bench_csv(rows);
    write_text(r.out / "bench.csv", csv);
    r.manifest({{"bench", "bench.csv"}});
    std::cout << csv;
}

void cmd_saliency(const Run& r) {
    if (r.cfg.str("checkpoint").empty()) throw ConfigError("saliency needs --model <checkpoint>");
    const LoadedModel m = load_model_bundle(load_bundle(r.cfg.str("checkpoint")));
    const Study s = obtain_study(r);
    std::size_t idx = 0;
    const auto& want = r.cfg.str("record");
    if (!want.empty()) {
        const auto& recs = s.catalog.records;
        const auto it = std::find_if(recs.begin(), recs.end(), [&](const CatalogEntry& e) { return e.record_id == want; });
        if (it == recs.end()) throw DataError(DataErrc::invalid_record, "record '" + want + "' not in catalog");
        idx = static_cast<std::size_t>(it - recs.begin());
    }
    Study one;
    one.catalog = s.catalog;
    one.catalog.records = {s.catalog.records[idx]};
    one.records = {s.records[idx]};
    const PreparedDataset d = prepare_dataset(one, r.cfg.preprocess(), {});
    const RecordFeatures f = record_features(d, 0, m.artifacts);
    const Signal sal = m.model->saliency(d.bags[0].slices[0], f.morph[0], f.hrv);
    std::ostringstream os;
    os << "lead,per_lead_mean_abs\n";
    for (Eigen::Index l = 0; l < sal.rows(); ++l) os << kLeadNames[static_cast<std::size_t>(l)] << ',' << sal.row(l).mean() << '\n';
    write_text(r.out / "saliency_leads.csv", os.str());
    std::ostringstream full;
    for (Eigen::Index l = 0; l < sal.rows(); ++l) {
        for (Eigen::Index t = 0; t < sal.cols(); ++t) full << (t ? "," : "") << sal(l, t);
        full << '\n';
    }
    write_text(r.out / "saliency.csv", full.str());
    r.manifest({{"record", one.catalog.records[0].record_id}, {"saliency", "saliency.csv"}});
    std::cout << os.str();
}

int dispatch(int argc, char** argv) {
    CLI::App app{"ECG rhythm and morphology pipeline"};
    app.set_version_flag("--version", kVersion);
    std::string config_path;
    app.add_option("--config", config_path, "flat key = value config file");
    app.allow_extras();
    app.require_subcommand(1);
    std::vector<CLI::App*> subs;
    for (const auto& name : kSubcommands) {
        auto* s = app.add_subcommand(name);
        s->allow_extras();
        s->add_option("--config", config_path, "flat key = value config file");
        subs.push_back(s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << " (subcommands:";
        for (const auto& n : kSubcommands) std::cerr << ' ' << n;
        std::cerr << ")\n";
        return 2;
    }
    Run r;
    std::vector<std::string> extras = app.remaining();
    for (auto* s : subs) {
        if (s->parsed()) {
            r.subcommand = s->get_name();
            const auto rem = s->remaining();
            extras.insert(extras.end(), rem.begin(), rem.end());
        }
    }
    r.cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::load(config_path);
    r.cfg.apply_overrides(parse_overrides(extras));
    r.cfg.validate();
    r.out = r.cfg.str("out_dir");
    fs::create_directories(r.out);

    const std::map<std::string, void (*)(const Run&)> table = {
        {"synth", cmd_synth},       {"preprocess", cmd_preprocess}, {"featurize", cmd_featurize},
        {"train", cmd_train},       {"eval", cmd_eval},             {"zeroshot", cmd_zeroshot},
        {"ablate", cmd_ablate},     {"dropout", cmd_dropout},       {"bench", cmd_bench},
        {"saliency", cmd_saliency},
    };
    table.at(r.subcommand)(r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const LeakageError& e) {
        std::cerr << "leakage assertion: " << e.what() << "\n";
        return 5;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    }
}
