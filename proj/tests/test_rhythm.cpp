#include "rhythmorph/errors.hpp"
#include "rhythmorph/ingest.hpp"
#include "rhythmorph/preprocess.hpp"
#include "rhythmorph/rhythm.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rhythmorph;

namespace {

std::vector<double> lead_ii(const EcgRecord& r) {
    std::vector<double> v(static_cast<std::size_t>(r.length()));
    for (Eigen::Index t = 0; t < r.length(); ++t) v[static_cast<std::size_t>(t)] = r.samples(kLeadII, t);
    return v;
}

RrSeries series(const std::vector<double>& rr) {
    std::vector<std::int64_t> peaks{100};
    for (double g : rr) peaks.push_back(peaks.back() + std::llround(g * 1000.0));
    double dur = 0;
    for (double g : rr) dur += g;
    return RrSeries::from_peaks(peaks, 1000.0, dur + 0.2);
}

}  // namespace

TEST(Detector, MatchesGroundTruthOnPeriodicBeats) {
    SynthSpec s;
    s.n_beats = 10;
    s.mean_rr_s = 0.8;
    s.seed = 7;
    const auto res = synth_ecg(s);
    const auto rr = detect_rpeaks(lead_ii(res.record), 500);
    ASSERT_EQ(rr.peak_indices.size(), res.r_peaks.size());
    for (std::size_t i = 0; i < rr.peak_indices.size(); ++i) EXPECT_LE(std::llabs(rr.peak_indices[i] - res.r_peaks[i]), 2);
}

TEST(Detector, NoisyJitteredBeatsAreFound) {
    SynthSpec s;
    s.duration_s = 10;
    s.mean_rr_s = 0.75;
    s.rr_jitter_s = 0.1;
    s.noise_std = 0.05;
    s.baseline_wander = 0.2;
    s.seed = 3;
    const auto res = synth_ecg(s);
    const auto rr = detect_rpeaks(lead_ii(res.record), 500);
    EXPECT_EQ(rr.peak_indices.size(), res.r_peaks.size());
}

TEST(Detector, FlatSignalHasNoPeaks) {
    try {
        detect_rpeaks(std::vector<double>(5000, 0.0), 500);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.code(), DataErrc::no_peaks);
        EXPECT_NE(std::string(e.what()).find("no peaks found"), std::string::npos);
    }
}

TEST(Detector, DoubledRateDoublesCount) {
    SynthSpec slow;
    slow.duration_s = 10;
    slow.mean_rr_s = 0.8;
    slow.seed = 1;
    SynthSpec fast = slow;
    fast.mean_rr_s = 0.4;
    const auto n_slow = static_cast<long>(detect_rpeaks(lead_ii(synth_ecg(slow).record), 500).peak_indices.size());
    const auto n_fast = static_cast<long>(detect_rpeaks(lead_ii(synth_ecg(fast).record), 500).peak_indices.size());
    EXPECT_LE(std::labs(n_fast - 2 * n_slow), 1);
}

TEST(Detector, RefractorySpacing) {
    SynthSpec s;
    s.duration_s = 10;
    s.mean_rr_s = 0.35;
    s.rr_jitter_s = 0.05;
    s.noise_std = 0.1;
    s.seed = 12;
    const auto rr = detect_rpeaks(lead_ii(synth_ecg(s).record), 500);
    for (double g : rr.rr_s) EXPECT_GE(g, 0.2);
}

TEST(Hrv, ConstantRr) {
    const auto h = hrv_features(series(std::vector<double>(60, 0.8))).values;
    ASSERT_EQ(h.size(), 36);
    EXPECT_NEAR(h(hrv_sdnn), 0.0, 1e-12);
    EXPECT_NEAR(h(hrv_rmssd), 0.0, 1e-12);
    EXPECT_NEAR(h(hrv_mean_hr), 75.0, 1e-9);
    EXPECT_NEAR(h(hrv_mean_rr), 0.8, 1e-12);
}

TEST(Hrv, AlternatingRr) {
    std::vector<double> rr;
    for (int i = 0; i < 40; ++i) rr.push_back(i % 2 ? 0.9 : 0.7);
    const auto h = hrv_features(series(rr)).values;
    EXPECT_NEAR(h(hrv_rmssd), 0.2, 1e-9);
    EXPECT_NEAR(h(hrv_pnn50), 1.0, 1e-12);
    EXPECT_NEAR(h(hrv_min_rr), 0.7, 1e-12);
    EXPECT_NEAR(h(hrv_max_rr), 0.9, 1e-12);
    EXPECT_NEAR(h(hrv_drr_frac_up50), 0.5, 0.03);
    EXPECT_NEAR(h(hrv_sd1), std::sqrt(0.04 / 2.0), 1e-2);
}

TEST(Hrv, FiniteThirtySixAndShortInputError) {
    const auto h = hrv_features(series({0.8, 0.82, 0.79, 0.81, 0.8, 0.83})).values;
    EXPECT_EQ(h.size(), 36);
    EXPECT_TRUE(h.allFinite());
    EXPECT_EQ(h(hrv_freq_valid), 0.0);
    EXPECT_EQ(hrv_feature_names().size(), 36u);
    try {
        hrv_features(series({0.8, 0.8, 0.8}));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.code(), DataErrc::insufficient_beats);
    }
}

TEST(Hrv, TimeScalingOfSpreadMeasures) {
    std::vector<double> rr;
    for (int i = 0; i < 30; ++i) rr.push_back(0.5 + 0.01 * ((i * 7) % 11));
    std::vector<double> scaled;
    for (double g : rr) scaled.push_back(2.0 * g);
    const auto a = hrv_features(series(rr)).values;
    const auto b = hrv_features(series(scaled)).values;
    EXPECT_NEAR(b(hrv_sdnn), 2.0 * a(hrv_sdnn), 1e-12);
    EXPECT_NEAR(b(hrv_rmssd), 2.0 * a(hrv_rmssd), 1e-12);
}

TEST(Hrv, ZeroJitterRecordHasNearZeroSdnn) {
    SynthSpec s;
    s.duration_s = 10;
    s.mean_rr_s = 0.8;
    s.seed = 2;
    const auto h = record_hrv(synth_ecg(s).record).values;
    EXPECT_EQ(h(hrv_detected), 1.0);
    EXPECT_LE(h(hrv_sdnn), 1.0 / 500.0 + 1e-6);
    EXPECT_NEAR(h(hrv_duration), 10.0, 1e-9);
}

TEST(Hrv, FallbackOnFlatRecord) {
    EcgRecord r;
    r.samples = SampleMatrix::Zero(12, 5000);
    const auto h = record_hrv(r).values;
    EXPECT_EQ(h(hrv_detected), 0.0);
    EXPECT_NEAR(h(hrv_duration), 10.0, 1e-12);
    EXPECT_EQ(h.cwiseAbs().sum(), 10.0);
}

TEST(Hrv, SpectralBlockOnLongSeries) {
    std::vector<double> rr;
    double t = 0;
    for (int i = 0; i < 300; ++i) {
        const double g = 0.8 + 0.05 * std::sin(2 * M_PI * 0.25 * t);
        rr.push_back(g);
        t += g;
    }
    const auto h = hrv_features(series(rr)).values;
    EXPECT_EQ(h(hrv_freq_valid), 1.0);
    EXPECT_GT(h(hrv_hf), h(hrv_lf));
    EXPECT_NEAR(h(hrv_hf_peak), 0.25, 0.03);
}

TEST(Broadcast, CopiesAreIndependent) {
    HrvVector h;
    h.values.setLinSpaced(36, 0, 35);
    SliceBag bag;
    bag.slices.resize(3);
    auto v = broadcast_rhythm(h, bag);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[0].values, h.values);
    EXPECT_EQ(v[2].values, h.values);
    v[0].values(0) = 99;
    EXPECT_EQ(v[1].values(0), 0.0);
    bag.slices.resize(1);
    EXPECT_EQ(broadcast_rhythm(h, bag).size(), 1u);
}

TEST(RrSeries, RejectsNonIncreasing) {
    EXPECT_THROW(RrSeries::from_peaks({10, 10, 20}, 500, 1), DataError);
}
