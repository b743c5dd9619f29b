#include "rhythmorph/errors.hpp"
#include "rhythmorph/ingest.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <random>

using namespace rhythmorph;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("rm_ingest_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

EcgRecord random_record(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    EcgRecord r;
    r.samples = SampleMatrix::NullaryExpr(kNumLeads, n, [&] { return g(rng); });
    r.fs = 500.0;
    r.record_id = "r" + std::to_string(seed);
    r.subject_id = "s1";
    r.labels = {1, 0, 1};
    return r;
}

std::vector<char> bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

TEST(Ingest, RawRoundTripShapeAndBits) {
    const auto dir = temp_dir("rt");
    const EcgRecord r = random_record(5000, 1);
    write_record(r, dir / "a.f32", RecordFormat::raw_f32);
    const EcgRecord back = read_record(dir / "a.f32", RecordFormat::raw_f32);
    EXPECT_EQ(back.samples.rows(), 12);
    EXPECT_EQ(back.samples.cols(), 5000);
    EXPECT_EQ(0, std::memcmp(back.samples.data(), r.samples.data(), sizeof(float) * 12 * 5000));
    EXPECT_EQ(back, r);
}

TEST(Ingest, RoundTripOracleOnRandomRecords) {
    const auto dir = temp_dir("rand");
    for (std::uint64_t s = 0; s < 10; ++s) {
        const EcgRecord r = random_record(1 + static_cast<Eigen::Index>(s * 37), s);
        write_record(r, dir / "x.f32", RecordFormat::raw_f32);
        EXPECT_EQ(read_record(dir / "x.f32", RecordFormat::raw_f32), r);
    }
}

TEST(Ingest, MinimalOneSampleRecord) {
    const auto dir = temp_dir("one");
    const EcgRecord r = random_record(1, 3);
    write_record(r, dir / "one.f32", RecordFormat::raw_f32);
    EXPECT_EQ(read_record(dir / "one.f32", RecordFormat::raw_f32), r);
}

TEST(Ingest, DeterministicBytes) {
    const auto dir = temp_dir("det");
    const EcgRecord r = random_record(700, 4);
    write_record(r, dir / "a.f32", RecordFormat::raw_f32);
    write_record(r, dir / "b.f32", RecordFormat::raw_f32);
    EXPECT_EQ(bytes(dir / "a.f32"), bytes(dir / "b.f32"));
    write_record(r, dir / "a.csv", RecordFormat::csv);
    write_record(r, dir / "b.csv", RecordFormat::csv);
    EXPECT_EQ(bytes(dir / "a.csv"), bytes(dir / "b.csv"));
}

TEST(Ingest, CsvRoundTripIsExact) {
    const auto dir = temp_dir("csv");
    const EcgRecord r = random_record(300, 5);
    write_record(r, dir / "a.csv", RecordFormat::csv);
    const EcgRecord back = read_record(dir / "a.csv", RecordFormat::csv);
    EXPECT_EQ((back.samples - r.samples).cwiseAbs().maxCoeff(), 0.0f);
    std::ifstream f(dir / "a.csv");
    const std::string header((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    EXPECT_NE(header.find("I,II,III,aVR,aVL,aVF,V1,V2,V3,V4,V5,V6"), std::string::npos);
}

TEST(Ingest, ThreeLeadFileIsLeadCountMismatch) {
    const auto dir = temp_dir("leads");
    std::ofstream f(dir / "bad.f32", std::ios::binary);
    f.write("ECGF", 4);
    put<std::uint32_t>(f, 1);
    put<std::uint32_t>(f, 3);
    put<std::uint64_t>(f, 10);
    put<double>(f, 500.0);
    for (int i = 0; i < 2; ++i) put<std::uint32_t>(f, 0);
    put<std::uint32_t>(f, 0);
    for (int i = 0; i < 30; ++i) put<float>(f, 0.0f);
    f.close();
    try {
        read_record(dir / "bad.f32", RecordFormat::raw_f32);
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_EQ(e.code(), DataErrc::lead_count_mismatch);
        EXPECT_NE(std::string(e.what()).find("lead count mismatch"), std::string::npos);
    }
}

TEST(Ingest, DistinctCodesForHeaderAndTruncation) {
    const auto dir = temp_dir("codes");
    {
        std::ofstream f(dir / "magic.f32", std::ios::binary);
        f << "JUNKJUNKJUNK";
    }
    try {
        read_record(dir / "magic.f32", RecordFormat::raw_f32);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.code(), DataErrc::malformed_header);
    }
    const EcgRecord r = random_record(100, 6);
    write_record(r, dir / "t.f32", RecordFormat::raw_f32);
    fs::resize_file(dir / "t.f32", fs::file_size(dir / "t.f32") - 8);
    try {
        read_record(dir / "t.f32", RecordFormat::raw_f32);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.code(), DataErrc::truncated_payload);
    }
}

TEST(Ingest, UnwritablePathThrows) {
    const EcgRecord r = random_record(10, 7);
    EXPECT_THROW(write_record(r, "/nonexistent_dir_xyz/a.f32", RecordFormat::raw_f32), DataError);
}

TEST(Synth, ZeroJitterIsExactlyPeriodic) {
    SynthSpec s;
    s.n_beats = 10;
    s.mean_rr_s = 0.8;
    s.seed = 7;
    const auto res = synth_ecg(s);
    ASSERT_EQ(res.r_peaks.size(), 10u);
    for (std::size_t i = 1; i < res.r_peaks.size(); ++i) EXPECT_EQ(res.r_peaks[i] - res.r_peaks[i - 1], 400);
}

TEST(Synth, SameSeedSameOutput) {
    SynthSpec s;
    s.n_beats = 12;
    s.rr_jitter_s = 0.05;
    s.noise_std = 0.1;
    s.seed = 11;
    EXPECT_EQ(synth_ecg(s).record.samples, synth_ecg(s).record.samples);
}

TEST(Synth, JitterStatisticsOverTwoHundredBeats) {
    SynthSpec s;
    s.n_beats = 201;
    s.mean_rr_s = 0.9;
    s.rr_jitter_s = 0.1;
    s.seed = 3;
    const auto res = synth_ecg(s);
    std::vector<double> gaps;
    for (std::size_t i = 1; i < res.r_peaks.size(); ++i) gaps.push_back((res.r_peaks[i] - res.r_peaks[i - 1]) / 500.0);
    double m = 0;
    for (double g : gaps) m += g;
    m /= static_cast<double>(gaps.size());
    double v = 0;
    for (double g : gaps) v += (g - m) * (g - m);
    const double sd = std::sqrt(v / static_cast<double>(gaps.size() - 1));
    EXPECT_NEAR(sd, 0.1, 0.02);
}

TEST(Synth, MorphologyOnlyTouchesPrecordialLeads) {
    SynthSpec s;
    s.n_beats = 6;
    s.seed = 2;
    const auto base = synth_ecg(s).record.samples;
    s.morphology = morph_st_elevation | morph_wide_qrs;
    const auto variant = synth_ecg(s).record.samples;
    EXPECT_EQ((base.topRows(6) - variant.topRows(6)).cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_GT((base.bottomRows(6) - variant.bottomRows(6)).cwiseAbs().maxCoeff(), 0.01f);
}

TEST(Catalog, CountsAndSortedVocabulary) {
    const auto cat = catalog_build({{"a", "s1", {"zeta"}, "a.f32"}, {"b", "s1", {"alpha"}, "b.f32"}, {"c", "s2", {}, "c.f32"}});
    EXPECT_EQ(cat.size(), 3u);
    std::map<std::string, int> mult;
    for (const auto& e : cat.records) mult[e.subject_id]++;
    EXPECT_EQ(mult["s1"], 2);
    EXPECT_EQ(mult["s2"], 1);
    EXPECT_EQ(cat.class_names, (std::vector<std::string>{"alpha", "zeta"}));
    EXPECT_EQ(cat.records[0].labels, (LabelVector{0, 1}));
}

TEST(Catalog, DuplicateRecordIdThrows) {
    EXPECT_THROW(catalog_build({{"a", "s1", {}, ""}, {"a", "s2", {}, ""}}), DataError);
}

TEST(Catalog, PrevalenceMatchesGeneratorAssignment) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.3);
    std::vector<RecordMeta> metas;
    std::map<std::string, int> expected;
    for (int i = 0; i < 100; ++i) {
        RecordMeta m{"r" + std::to_string(i), "s" + std::to_string(i / 2), {}, ""};
        for (std::string c : {"brady", "stemi", "wide"}) {
            if (coin(rng)) {
                m.label_names.push_back(c);
                expected[c]++;
            }
        }
        metas.push_back(m);
    }
    const auto cat = catalog_build(metas);
    for (int c = 0; c < cat.n_classes(); ++c) {
        int n = 0;
        for (const auto& e : cat.records) n += e.labels[static_cast<std::size_t>(c)];
        EXPECT_EQ(n, expected[cat.class_names[static_cast<std::size_t>(c)]]);
    }
}

TEST(Catalog, SaveLoadRoundTrip) {
    const auto dir = temp_dir("cat");
    const auto cat = catalog_build({{"a", "s1", {"x"}, "a.f32"}, {"b", "s2", {"y"}, "b.f32"}});
    save_catalog(cat, dir / "c.json");
    const auto back = load_catalog(dir / "c.json");
    EXPECT_EQ(back.class_names, cat.class_names);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.records[1].labels, cat.records[1].labels);
    EXPECT_EQ(back.records[1].path, "b.f32");
}

TEST(Ingest, LeadNames) {
    EXPECT_EQ(lead_index("V1"), 6);
    EXPECT_EQ(lead_index("II"), 1);
    EXPECT_THROW(lead_index("V9"), DataError);
}
