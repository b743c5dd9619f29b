// Acceptance runner: one [PASS]/[FAIL] line per criterion, nonzero exit on
// any failure. Pass criterion numbers as arguments to run a subset.

#include "gradcheck.hpp"
#include "oracles.hpp"

#include "rhythmorph/aggregate.hpp"
#include "rhythmorph/audit.hpp"
#include "rhythmorph/bench.hpp"
#include "rhythmorph/config.hpp"
#include "rhythmorph/errors.hpp"
#include "rhythmorph/folds.hpp"
#include "rhythmorph/losses.hpp"
#include "rhythmorph/metrics.hpp"
#include "rhythmorph/minirocket.hpp"
#include "rhythmorph/pipeline.hpp"
#include "rhythmorph/preprocess.hpp"
#include "rhythmorph/ssm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace rhythmorph;

namespace {

// ------------------------------------------------------------ tolerances

constexpr double kPowerMeanAgree = 1e-9;
constexpr double kPowerMeanSeconds = 10.0;
constexpr double kZohAgree = 1e-9;
constexpr double kZohContinuity = 1e-8;
constexpr double kScanAgree = 1e-6;
constexpr double kGradRel = 1e-3;
constexpr double kGradSeconds = 300.0;
constexpr double kApAgree = 1e-9;
constexpr double kPpvAgree = 1e-6;
constexpr double kDcResidual = 1e-3;
constexpr double kPassLo = 0.7, kPassHi = 1.05, kStopHi = 0.1;
constexpr double kRhythmAuc = 0.90, kMorphAuc = 0.80, kCvSeconds = 30 * 60.0;
constexpr double kShuffledLo = 0.4, kShuffledHi = 0.6;
constexpr double kDropMorph = 0.10, kDropRhythm = 0.05;
constexpr double kScanRatio = 2.5;
constexpr double kAblationGap = 0.05;

struct Outcome {
    bool pass = true;
    std::ostringstream measured;

    void need(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            measured << "[violated: " << what << "] ";
        }
    }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Signal randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
    std::normal_distribution<double> g(0.0, s);
    return Signal::NullaryExpr(r, c, [&] { return g(rng); });
}

// ----------------------------------------------------------- 1 power mean

double direct_power_mean(const std::vector<double>& p, double q) {
    double s = 0;
    for (double v : p) s += std::pow(std::clamp(v, kProbEps, 1 - kProbEps), q);
    return std::pow(s / static_cast<double>(p.size()), 1.0 / q);
}

void criterion_power_mean(Outcome& o) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0, 1);
    const std::vector<double> qs{1, 1.5, 2, 3, 5, 8, 16, 32};
    double worst_agree = 0, worst_perm = 0, worst_mean = 0;
    bool bounds = true, monotone = true;
    for (int trial = 0; trial < 2000; ++trial) {
        const int m = 1 + static_cast<int>(rng() % 64);
        std::vector<double> p(static_cast<std::size_t>(m));
        for (auto& v : p) v = u(rng);
        if (trial % 5 == 0)
            for (auto& v : p) v = 1e-7 + 1e-3 * v;  // near the clamp
        double lo = 1, hi = 0, mean = 0;
        for (double v : p) {
            const double c = std::clamp(v, kProbEps, 1 - kProbEps);
            lo = std::min(lo, c);
            hi = std::max(hi, c);
            mean += c / m;
        }
        double prev = -1;
        for (double q : qs) {
            const double got = power_mean(p, q);
            bounds = bounds && got >= lo * (1 - 1e-12) && got <= hi * (1 + 1e-12);
            monotone = monotone && got >= prev * (1 - 1e-12);
            prev = got;
            worst_agree = std::max(worst_agree, std::abs(got - direct_power_mean(p, q)));
            auto shuffled = p;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            worst_perm = std::max(worst_perm, std::abs(got - power_mean(shuffled, q)));
        }
        worst_mean = std::max(worst_mean, std::abs(power_mean(p, 1.0) - mean));
    }
    const std::vector<double> huge(1000000, 1e-6);
    double worst_huge = 0;
    bool finite = true;
    for (double q : qs) {
        const double v = power_mean(huge, q);
        finite = finite && std::isfinite(v);
        worst_huge = std::max(worst_huge, std::abs(v - 1e-6) / 1e-6);
    }
    const double secs = seconds_since(t0);
    o.need(bounds, "bounds");
    o.need(monotone, "Q-monotone");
    o.need(worst_perm <= 1e-12, "permutation invariance");
    o.need(worst_mean <= 1e-12, "Q=1 mean");
    o.need(worst_agree <= kPowerMeanAgree, "log/direct agreement");
    o.need(finite && worst_huge <= 1e-9, "M=1e6 stability");
    o.need(secs < kPowerMeanSeconds, "runtime");
    o.measured << "log/direct max diff " << worst_agree << ", perm diff " << worst_perm << ", Q=1 diff "
               << worst_mean << ", M=1e6 rel err " << worst_huge << ", " << secs << " s";
}

// ------------------------------------------------------------------ 2 ZOH

void criterion_zoh(Outcome& o) {
    double worst = 0;
    int points = 0;
    for (int i = 0; i <= 60; ++i) {
        // a from -10 to -1e-12 and delta from 1e-12 to 1, both log spaced
        const double a = -std::pow(10.0, 1.0 - 13.0 * i / 60.0);
        for (int j = 0; j <= 60; ++j) {
            const double delta = std::pow(10.0, -12.0 + 12.0 * j / 60.0);
            const double b = 1.7;
            const ZohStep z = zoh_discretize(a, b, delta);
            const double want_a = std::exp(delta * a);
            const double want_b = std::expm1(delta * a) / a * b;
            worst = std::max({worst, std::abs(z.a_bar - want_a) / std::max(1.0, std::abs(want_a)),
                              std::abs(z.b_bar - want_b) / std::max(std::abs(want_b), 1e-300)});
            ++points;
        }
    }
    // both sides of the series switch, for either sign of z
    double jump = 0;
    for (double z0 : {kZohSeriesThreshold, -kZohSeriesThreshold}) {
        const double below = zoh_phi(std::nextafter(z0, 0.0));
        const double above = zoh_phi(std::nextafter(z0, z0 * 2));
        jump = std::max({jump, std::abs(below - above), std::abs(below - std::expm1(z0) / z0)});
    }
    o.need(worst <= kZohAgree, "closed form");
    o.need(jump <= kZohContinuity, "series continuity");
    o.measured << points << " grid points, max rel err " << worst << ", branch jump " << jump;
}

// ----------------------------------------------------------------- 3 scan

void criterion_scan(Outcome& o) {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> u(0, 1);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index T = 64 + static_cast<Eigen::Index>(rng() % 449);
        const Eigen::Index E = 1 + static_cast<Eigen::Index>(rng() % 8);
        const Eigen::Index N = 1 + static_cast<Eigen::Index>(rng() % 16);
        ScanParams p;
        p.A = Matrix::NullaryExpr(E, N, [&] { return -std::exp(std::log(1e-3) + u(rng) * std::log(1e4)); });
        p.delta = Matrix::NullaryExpr(T, E, [&] { return 1e-3 + 0.5 * u(rng); });
        p.B = randn(T, N, rng);
        p.C = randn(T, N, rng);
        const Matrix in = randn(T, E, rng);
        const auto chunk = static_cast<Eigen::Index>(8 << (rng() % 5));
        const auto dir = trial % 2 ? ScanDirection::backward : ScanDirection::forward;
        const Matrix got = ssm_scan(in, p, dir, {chunk, 1 + static_cast<int>(trial % 3)});
        const Matrix want = oracle::naive_scan(in, p.A, p.delta, p.B, p.C, dir == ScanDirection::backward);
        worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
    }
    o.need(worst <= kScanAgree, "scan agreement");
    o.measured << "100 parameterisations, max abs err " << worst;
}

// ------------------------------------------------------------ 4 gradients

std::string block_of(const std::string& name) {
    return name.substr(0, name.find('.'));
}

void criterion_gradients(Outcome& o) {
    const auto t0 = Clock::now();
    ModelConfig c = ModelConfig::desk();
    c.n_classes = 4;
    c.seed = 404;
    EcgModel m(c);
    std::mt19937_64 rng(404);
    const Signal x = randn(kNumLeads, c.slice_length, rng);
    const Vector morph = randn(c.morph_dim(), 1, rng).col(0);
    const Vector hrv = randn(c.hrv_dim, 1, rng).col(0);
    Matrix y(1, 4);
    y << 1, 0, 0, 1;
    std::map<std::string, std::pair<double, int>> blocks;
    for (const auto& r : gradcheck::check_model(m, x, morph, hrv, y, 3, 12, 405, 1e-4)) {
        auto& b = blocks[block_of(r.name)];
        b.first = std::max(b.first, r.rel_error);
        b.second += r.checked;
    }
    for (const auto& want : {"lead", "tok", "block0", "fusion", "head"})
        o.need(blocks.count(want) != 0, std::string("block present: ") + want);
    for (const auto& [name, b] : blocks) {
        o.need(b.first < kGradRel, "block " + name);
        o.measured << name << " " << b.first << " (" << b.second << ") ";
    }
    Matrix probs(6, 4), labels(6, 4);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        probs.data()[i] = u(rng);
        labels.data()[i] = static_cast<double>(rng() % 2);
    }
    const double e_bce = gradcheck::check_loss([](const Matrix& p, const Matrix& l) { return bce_loss(p, l); },
                                               probs, labels, 1e-4);
    const double e_asl = gradcheck::check_loss(
        [](const Matrix& p, const Matrix& l) { return asl_loss(p, l, 2.5, 1.0); }, probs, labels, 1e-4);
    o.need(e_bce < kGradRel, "bce");
    o.need(e_asl < kGradRel, "asl");
    const double secs = seconds_since(t0);
    o.need(secs < kGradSeconds, "runtime");
    o.measured << "bce " << e_bce << " asl " << e_asl << ", slice " << c.slice_length << ", " << secs << " s";
}

// -------------------------------------------------------------- 5 metrics

void criterion_metrics(Outcome& o) {
    std::mt19937_64 rng(505);
    int auc_mismatch = 0, instances = 0;
    double worst_ap = 0;
    while (instances < 1000) {
        const int n = 2 + static_cast<int>(rng() % 199);
        std::vector<double> s(static_cast<std::size_t>(n));
        std::vector<std::uint8_t> y(static_cast<std::size_t>(n));
        const bool ties = rng() % 2;
        std::uniform_real_distribution<double> u(0, 1);
        for (int i = 0; i < n; ++i) {
            s[static_cast<std::size_t>(i)] = ties ? static_cast<double>(rng() % 7) / 6.0 : u(rng);
            y[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng() % 3 == 0);
        }
        const int pos = std::accumulate(y.begin(), y.end(), 0);
        if (pos == 0 || pos == n) continue;
        ++instances;
        if (roc_auc(s, y) != oracle::pair_auc(s, y)) ++auc_mismatch;
        worst_ap = std::max(worst_ap, std::abs(pr_auc(s, y) - oracle::threshold_ap(s, y)));
    }
    // Hand fixture: tau 0.5, strict >.
    //   class 0: tp 2 fp 1 fn 0 -> f1 4/5
    //   class 1: tp 1 fp 0 fn 1 -> f1 2/3
    //   class 2: no positives, no predictions -> 0
    Matrix p(4, 3), y(4, 3);
    p << 0.9, 0.7, 0.1,
         0.6, 0.2, 0.5,
         0.8, 0.4, 0.2,
         0.1, 0.5, 0.3;
    y << 1, 1, 0,
         1, 0, 0,
         0, 1, 0,
         0, 0, 0;
    const F1Result f = macro_f1(p, y, 0.5);
    const double want = (0.8 + 2.0 / 3.0 + 0.0) / 3.0;
    const bool f1_ok = std::abs(f.per_class[0] - 0.8) < 1e-15 && std::abs(f.per_class[1] - 2.0 / 3.0) < 1e-15 &&
                       f.per_class[2] == 0.0 && std::abs(f.macro - want) < 1e-15;
    o.need(auc_mismatch == 0, "roc exact");
    o.need(worst_ap <= kApAgree, "pr oracle");
    o.need(f1_ok, "macro f1 fixture");
    o.measured << instances << " instances, roc mismatches " << auc_mismatch << ", pr max diff " << worst_ap
               << ", macro_f1 " << f.macro << " (want " << want << ")";
}

// ------------------------------------------------------------- 6 protocol

Study tiny_study(int n, std::uint64_t seed) {
    StudySpec s;
    s.n_records = n;
    s.n_subjects = n / 2;
    s.duration_s = 5;
    s.seed = seed;
    return synth_study(s);
}

CvOptions tiny_options(int n_classes) {
    CvOptions o;
    o.k = 2;
    o.seed = 3;
    o.model.n_classes = n_classes;
    o.model.d_model = 16;
    o.model.n_blocks = 1;
    o.model.state_dim = 4;
    o.model.token_stride = 25;
    o.model.branch_channels = 4;
    o.model.n_heads = 4;
    o.model.n_morph_tokens = 2;
    o.model.lead_dim = 8;
    o.model.seed = 3;
    o.train.epochs = 1;
    o.train.batch = 16;
    o.fit.rocket = {168, 32, 32};
    o.fit.morph_dim = o.model.morph_dim();
    o.fit.seed = 3;
    return o;
}

void criterion_protocol(Outcome& o) {
    std::mt19937_64 rng(606);
    int overlaps = 0, catalogs = 0;
    for (; catalogs < 10000; ++catalogs) {
        DatasetCatalog cat;
        cat.class_names = {"a"};
        const int n_subj = 2 + static_cast<int>(rng() % 60);
        std::vector<std::string> subjects;
        for (int s = 0; s < n_subj; ++s) subjects.push_back("p" + std::to_string(rng() % 100000) + "_" + std::to_string(s));
        const int n_rec = n_subj + static_cast<int>(rng() % (3 * n_subj + 1));
        for (int r = 0; r < n_rec; ++r) {
            // every subject gets a record first, the rest land at random
            const auto& sid = subjects[static_cast<std::size_t>(r < n_subj ? r : static_cast<int>(rng() % n_subj))];
            cat.records.push_back({"r" + std::to_string(r), sid, {0}, ""});
        }
        std::shuffle(cat.records.begin(), cat.records.end(), rng);
        const int k = 2 + static_cast<int>(rng() % std::min(9, n_subj - 1));
        const FoldSplit split = subject_kfold(cat, k, rng());
        const auto rf = split.record_folds(cat);
        std::map<std::string, std::set<int>> seen;
        for (std::size_t i = 0; i < cat.size(); ++i) seen[cat.records[i].subject_id].insert(rf[i]);
        bool bad = false;
        for (const auto& [_, f] : seen) bad = bad || f.size() != 1;
        std::set<int> used(rf.begin(), rf.end());
        bad = bad || static_cast<int>(used.size()) != k;
        if (bad) ++overlaps;
    }
    o.need(overlaps == 0, "subject overlap");

    // Injected leakage: move one record of a multi-record subject across folds.
    const Study s = tiny_study(40, 61);
    auto rf = subject_kfold(s.catalog, 5, 1).record_folds(s.catalog);
    bool caught_split = false, caught_fit = false;
    for (std::size_t i = 1; i < s.catalog.size(); ++i) {
        if (s.catalog.records[i].subject_id != s.catalog.records[0].subject_id) continue;
        rf[i] = (rf[i] + 1) % 5;
        break;
    }
    try {
        check_record_folds(s.catalog, rf, 5);
    } catch (const LeakageError&) {
        caught_split = true;
    }
    try {
        assert_fit_isolation({"R00000", "R00001"}, {"R00000"}, "minirocket_fit");
    } catch (const LeakageError&) {
        caught_fit = true;
    }
    o.need(caught_split, "leaky split not caught");
    o.need(caught_fit, "leaky fit not caught");

    // Zero-shot: a model trained on one study evaluated on another.
    const Study train = restrict_classes(tiny_study(48, 62), kRhythmClasses);
    const Study external = restrict_classes(tiny_study(16, 63), kRhythmClasses);
    const PreparedDataset dtrain = prepare_dataset(train, {});
    const PreparedDataset dext = prepare_dataset(external, {});
    const LoadedModel loaded = load_model_bundle(train_full(dtrain, tiny_options(2)));
    const auto before = fit_counters().snapshot();
    const EvalReport rep = zeroshot_eval(loaded, dext, 0.5);
    const auto after = fit_counters().snapshot();
    const auto delta = after.total() - before.total();
    o.need(delta == 0, "zeroshot fit calls");
    o.need(rep.folds.size() == 1, "zeroshot report");
    o.measured << catalogs << " catalogs, overlaps " << overlaps << ", injected split caught " << caught_split
               << ", injected fit caught " << caught_fit << ", zeroshot fit/update calls " << delta;
}

// ------------------------------------------------------------ 7 minirocket

Signal dyadic_slice(Eigen::Index L, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> q(-32, 32);
    return Signal::NullaryExpr(kNumLeads, L, [&] { return q(rng) / 8.0; });
}

void criterion_minirocket(Outcome& o) {
    std::mt19937_64 rng(707);
    std::vector<Signal> slices;
    for (int i = 0; i < 6; ++i) slices.push_back(randn(kNumLeads, 2500, rng));
    const RocketOptions opts{10000, 32, 256};
    const RocketConfig a = minirocket_fit(slices, 2500, 17, opts);
    const RocketConfig b = minirocket_fit(slices, 2500, 17, opts);
    const Eigen::VectorXf fa = minirocket_transform(slices[0], a);
    const Eigen::VectorXf fb = minirocket_transform(slices[0], b);
    const bool bitwise = a == b && fa.size() == fb.size() &&
                         std::memcmp(fa.data(), fb.data(), sizeof(float) * static_cast<std::size_t>(fa.size())) == 0;
    o.need(bitwise, "determinism");

    const auto sched = oracle::canonical_schedule(2500, 10000, 32);
    int enumerated = 0;
    for (std::size_t d = 0; d < sched.dilations.size(); ++d)
        for (int kernel = 0; kernel < 84; ++kernel) enumerated += sched.per_dilation[d];
    o.need(a.feature_count() == enumerated, "feature count");

    // Two dilations so the padding alternation over dilation index is exercised.
    const Eigen::Index L = 1000;
    std::uniform_int_distribution<int> dil(1, static_cast<int>((L - 1) / 8));
    std::uniform_real_distribution<double> bias(-6.0, 6.0);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        RocketConfig cfg;
        cfg.input_length = L;
        cfg.n_channels = kNumLeads;
        int d0 = dil(rng), d1 = dil(rng);
        while (d1 == d0) d1 = dil(rng);
        cfg.dilations = {std::min(d0, d1), std::max(d0, d1)};
        cfg.features_per_dilation = {1, 1};
        for (int k = 0; k < 2 * 84; ++k) {
            std::vector<int> ch(kNumLeads);
            std::iota(ch.begin(), ch.end(), 0);
            std::shuffle(ch.begin(), ch.end(), rng);
            ch.resize(1 + static_cast<std::size_t>(rng() % 4));
            std::sort(ch.begin(), ch.end());
            cfg.channels.push_back(ch);
            cfg.biases.push_back(static_cast<float>(bias(rng)));
        }
        const int di = static_cast<int>(rng() % 2);
        const int k = static_cast<int>(rng() % 84);
        const int feature = di * 84 + k;
        const Signal x = dyadic_slice(L, rng);
        const auto& taps = rocket_kernels()[static_cast<std::size_t>(k)];
        const bool padded = (di % 2 + k) % 2 == 0;
        const double want = oracle::brute_ppv(x, {taps[0], taps[1], taps[2]}, cfg.dilations[static_cast<std::size_t>(di)],
                                              cfg.channels[static_cast<std::size_t>(feature)],
                                              static_cast<double>(cfg.biases[static_cast<std::size_t>(feature)]), padded);
        worst = std::max(worst, std::abs(static_cast<double>(minirocket_transform(x, cfg)(feature)) - want));
    }
    o.need(worst <= kPpvAgree, "ppv oracle");
    o.measured << "bitwise repeat " << bitwise << ", features " << a.feature_count() << " (enumerated " << enumerated
               << "), 50 triples max ppv diff " << worst;
}

// ---------------------------------------------------------------- 8 filter

void criterion_filter(Outcome& o) {
    const double fs = 500;
    const Eigen::Index n = 5000;
    const auto tone = [&](double f) {
        Signal s(kNumLeads, n);
        for (Eigen::Index t = 0; t < n; ++t) s.col(t).setConstant(std::sin(2 * std::numbers::pi * f * t / fs));
        return s;
    };
    // middle 3000 samples: whole periods at 10 and 100 Hz, edges excluded
    const auto centre = [](const Signal& y) {
        std::vector<double> v;
        for (Eigen::Index t = 1000; t < 4000; ++t) v.push_back(y(3, t));
        return v;
    };
    const double dc = bandpass_filter(Signal::Ones(kNumLeads, n), 0.5, 40, 4, fs).middleCols(1000, 3000).cwiseAbs().maxCoeff();
    const double a10 = oracle::dft_amplitude(centre(bandpass_filter(tone(10), 0.5, 40, 4, fs)), 10, fs);
    const double a100 = oracle::dft_amplitude(centre(bandpass_filter(tone(100), 0.5, 40, 4, fs)), 100, fs);
    o.need(dc < kDcResidual, "dc");
    o.need(a10 >= kPassLo && a10 <= kPassHi, "10 Hz");
    o.need(a100 <= kStopHi, "100 Hz");
    o.measured << "dc residual " << dc << ", |H(10 Hz)| " << a10 << ", |H(100 Hz)| " << a100;
}

// -------------------------------------------------- 9 / 10 synthetic study

RunConfig desk_config() {
    return RunConfig::load(std::string(RHYTHMORPH_SOURCE_DIR) + "/configs/desk.conf");
}

CvOptions study_options(const RunConfig& cfg, int n_classes) {
    CvOptions o;
    o.k = static_cast<int>(cfg.integer("folds"));
    o.seed = cfg.seed();
    o.model = cfg.model(n_classes);
    o.train = cfg.train();
    o.fit.rocket = cfg.rocket();
    o.fit.morph_dim = o.model.morph_dim();
    o.fit.seed = cfg.seed();
    o.pool_q = cfg.pool_q();
    o.tau = cfg.tau();
    o.groups = cfg.class_groups();
    o.progress = [](const std::string& m) { std::cerr << "  " << m << "\n"; };
    return o;
}

StudySpec study_spec(const RunConfig& cfg) {
    StudySpec s;
    s.n_records = static_cast<int>(cfg.integer("n_records"));
    s.n_subjects = static_cast<int>(cfg.integer("n_subjects"));
    s.duration_s = cfg.number("duration_s");
    s.fs = cfg.number("fs");
    s.noise_std = cfg.number("noise_std");
    s.baseline_wander = cfg.number("baseline_wander");
    s.amplitude_jitter = cfg.number("amplitude_jitter");
    s.morphology_strength = cfg.number("morphology_strength");
    s.irregular_jitter_s = cfg.number("irregular_jitter_s");
    s.regular_jitter_s = cfg.number("regular_jitter_s");
    s.seed = cfg.seed();
    return s;
}

struct StudyRun {
    RunConfig cfg = desk_config();
    Study study;
    PreparedDataset data;
    CvOptions options;
    std::vector<int> folds;
    FeatureCache cache;
    CvResult cv;
    double seconds = 0;
};

StudyRun& study_run() {
    static std::optional<StudyRun> run;
    if (!run) {
        run.emplace();
        auto& r = *run;
        const auto t0 = Clock::now();
        r.study = synth_study(study_spec(r.cfg));
        r.data = prepare_dataset(r.study, r.cfg.preprocess());
        r.options = study_options(r.cfg, r.data.catalog.n_classes());
        r.folds = subject_kfold(r.data.catalog, r.options.k, r.options.seed).record_folds(r.data.catalog);
        r.cv = run_cv(r.data, r.folds, r.options, &r.cache);
        r.seconds = seconds_since(t0);
    }
    return *run;
}

void criterion_end_to_end(Outcome& o) {
    auto& r = study_run();
    const auto rhythm = r.cv.report.group_roc_auc("rhythm");
    const auto morph = r.cv.report.group_roc_auc("morphology");
    const auto macro = r.cv.report.macro_roc_auc();
    o.need(r.data.catalog.size() == 400, "400 records");
    o.need(rhythm.n == r.options.k && rhythm.mean >= kRhythmAuc, "rhythm auc");
    o.need(morph.n == r.options.k && morph.mean >= kMorphAuc, "morphology auc");
    o.need(r.seconds <= kCvSeconds, "runtime");

    CvOptions shuffled = r.options;
    shuffled.shuffle_labels = true;
    const auto ctl = run_cv(r.data, r.folds, shuffled, &r.cache).report.macro_roc_auc();
    o.need(ctl.mean >= kShuffledLo && ctl.mean <= kShuffledHi, "shuffled control");
    o.measured << "rhythm " << rhythm.mean << " +/- " << rhythm.std << ", morphology " << morph.mean << " +/- "
               << morph.std << ", macro " << macro.mean << ", " << r.seconds << " s; shuffled macro " << ctl.mean
               << " +/- " << ctl.std;
}

void criterion_dropout(Outcome& o) {
    auto& r = study_run();
    std::vector<int> mask;
    for (const auto& lead : r.cfg.list("mask_leads")) mask.push_back(lead_index(lead));
    const PreparedDataset masked = prepare_dataset(r.study, r.cfg.preprocess(), mask);
    const DropoutReport d = lead_dropout_eval(r.cv, r.data, masked, r.options);
    const double dm = d.group_delta.at("morphology");
    const double dr = d.group_delta.at("rhythm");
    o.need(dm <= -kDropMorph, "morphology drop");
    o.need(std::abs(dr) <= kDropRhythm, "rhythm stable");
    o.measured << "morphology delta " << dm << ", rhythm delta " << dr << ", macro delta " << d.macro_delta;
}

// ----------------------------------------------------------------- 11 bench

void criterion_bench(Outcome& o) {
    ScanBenchOptions opts;
    const auto rows = scan_scaling_bench({1024, 2048, 4096, 8192}, opts);
    o.need(rows.size() == 4, "rows");
    for (std::size_t i = 2; i < rows.size(); ++i) o.need(rows[i].ratio <= kScanRatio, "ratio at " + std::to_string(rows[i].length));
    for (const auto& row : rows) o.measured << row.length << ":" << row.median_ms << "ms(x" << row.ratio << ") ";
}

// -------------------------------------------------------------- 12 ablation

void criterion_ablation(Outcome& o) {
    const RunConfig cfg = desk_config();
    const Study base = synth_study(study_spec(cfg));
    const PreparedDataset all = prepare_dataset(base, cfg.preprocess());
    struct Task {
        std::string name;
        std::vector<std::string> classes;
        ModelVariant ablated;
    };
    const std::vector<Task> tasks{{"rhythm", kRhythmClasses, ModelVariant::no_hrv},
                                  {"morphology", kMorphologyClasses, ModelVariant::no_morph}};
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
        FeatureCache cache;  // artifacts ignore labels, so both tasks share them
        for (const auto& t : tasks) {
            PreparedDataset d = all;
            d.catalog = restrict_classes(Study{base.catalog, {}}, t.classes).catalog;
            CvOptions opt = study_options(cfg, d.catalog.n_classes());
            opt.seed = seed;
            opt.model.seed = seed;
            opt.fit.seed = seed;
            opt.groups = {};
            opt.folds_to_run = {0, 1};
            const auto folds = subject_kfold(d.catalog, opt.k, seed).record_folds(d.catalog);
            const double full = run_cv(d, folds, opt, &cache).report.macro_roc_auc().mean;
            opt.variant = t.ablated;
            const double ablated = run_cv(d, folds, opt, &cache).report.macro_roc_auc().mean;
            const double gap = full - ablated;
            o.need(gap >= kAblationGap, t.name + " seed " + std::to_string(seed));
            o.measured << t.name << "/s" << seed << " full " << full << " " << variant_name(t.ablated) << " "
                       << ablated << "; ";
        }
    }
}

struct Criterion {
    int id;
    std::string name;
    std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "power-mean suite", criterion_power_mean},
        {2, "ZOH oracle", criterion_zoh},
        {3, "scan equivalence", criterion_scan},
        {4, "gradient checks", criterion_gradients},
        {5, "metric oracles", criterion_metrics},
        {6, "protocol integrity", criterion_protocol},
        {7, "MiniRocket", criterion_minirocket},
        {8, "filter response", criterion_filter},
        {9, "synthetic study CV", criterion_end_to_end},
        {10, "lead dropout direction", criterion_dropout},
        {11, "scan linear scaling", criterion_bench},
        {12, "ablation direction", criterion_ablation},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Outcome o;
        const auto t0 = Clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.measured << "exception: " << e.what();
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << " (" << c.name
                  << "): " << o.measured.str() << " [" << seconds_since(t0) << " s]" << std::endl;
    }
    std::cout << (failed ? "acceptance: FAILED " : "acceptance: all passed ") << failed << " failing" << std::endl;
    return failed ? 1 : 0;
}
