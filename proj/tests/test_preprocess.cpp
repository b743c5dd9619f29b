#include "oracles.hpp"
#include "rhythmorph/errors.hpp"
#include "rhythmorph/filter.hpp"
#include "rhythmorph/preprocess.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace rhythmorph;

namespace {

Signal sine_rows(double freq, double fs, Eigen::Index n) {
    Signal s(12, n);
    for (Eigen::Index t = 0; t < n; ++t) s.col(t).setConstant(std::sin(2 * std::numbers::pi * freq * t / fs));
    return s;
}

// Central segment (edges excluded), an integer number of periods long.
std::vector<double> steady(const Signal& y, Eigen::Index row) {
    std::vector<double> v;
    for (Eigen::Index t = 1000; t < 4000; ++t) v.push_back(y(row, t));
    return v;
}

}  // namespace

TEST(Filter, RejectsDc) {
    const Signal y = bandpass_filter(Signal::Ones(12, 5000), 0.5, 40, 4, 500);
    EXPECT_LT(y.middleCols(1000, 3000).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Filter, PassbandAndStopbandByDft) {
    const double a10 = oracle::dft_amplitude(steady(bandpass_filter(sine_rows(10, 500, 5000), 0.5, 40, 4, 500), 3), 10, 500);
    EXPECT_GE(a10, 0.7);
    EXPECT_LE(a10, 1.05);
    const double a100 = oracle::dft_amplitude(steady(bandpass_filter(sine_rows(100, 500, 5000), 0.5, 40, 4, 500), 3), 100, 500);
    EXPECT_LE(a100, 0.1);
}

TEST(Filter, Linearity) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    const Signal x = Signal::NullaryExpr(12, 1500, [&] { return g(rng); });
    const Signal z = Signal::NullaryExpr(12, 1500, [&] { return g(rng); });
    const Signal lhs = bandpass_filter(2.5 * x - 0.7 * z, 0.5, 40, 4, 500);
    const Signal rhs = 2.5 * bandpass_filter(x, 0.5, 40, 4, 500) - 0.7 * bandpass_filter(z, 0.5, 40, 4, 500);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Filter, ZeroPhaseKeepsPeakPosition) {
    Signal x = Signal::Zero(12, 3000);
    for (Eigen::Index t = 0; t < 3000; ++t) x(0, t) = std::exp(-0.5 * std::pow((t - 1500) / 8.0, 2));
    const Signal y = bandpass_filter(x, 0.5, 40, 4, 500);
    Eigen::Index arg = 0;
    y.row(0).maxCoeff(&arg);
    EXPECT_NEAR(static_cast<double>(arg), 1500.0, 1.0);
}

TEST(Filter, MagnitudeResponseShape) {
    const ButterworthBandpass f(4, 0.5, 40, 500);
    EXPECT_EQ(f.sections().size(), 4u);
    EXPECT_NEAR(f.magnitude(40.0), std::sqrt(0.5), 2e-3);
    EXPECT_LT(f.magnitude(0.0), 1e-9);
}

TEST(Filter, BadCutoffsThrow) {
    EXPECT_THROW(bandpass_filter(Signal::Ones(12, 100), 0.5, 300, 4, 500), ConfigError);
    EXPECT_THROW(bandpass_filter(Signal::Ones(12, 100), 0.0, 40, 4, 500), ConfigError);
    EXPECT_THROW(bandpass_filter(Signal::Ones(12, 5), 0.5, 40, 4, 500), DataError);
}

TEST(Znorm, ExamplesFromDefinition) {
    Signal s = Signal::Zero(12, 4);
    s.row(0).setConstant(5.0);
    s.row(1) << -1, 1, -1, 1;
    s.row(2) << 0, 1, 2, 3;
    const Signal z = znorm_instance(s);
    EXPECT_EQ(z.row(0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT((z.row(1) - s.row(1)).cwiseAbs().maxCoeff(), 1e-6);
    const double sd = std::sqrt(1.25);
    const Eigen::RowVector4d want(-1.5 / sd, -0.5 / sd, 0.5 / sd, 1.5 / sd);
    EXPECT_LT((z.row(2) - want).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(z(2, 0), -1.3416, 1e-4);
}

TEST(Znorm, MomentsIdempotenceAffineInvariance) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(3.0, 2.0);
    const Signal x = Signal::NullaryExpr(12, 777, [&] { return g(rng); });
    const Signal z = znorm_instance(x);
    for (Eigen::Index r = 0; r < 12; ++r) {
        const double m = z.row(r).mean();
        EXPECT_NEAR(m, 0.0, 1e-6);
        EXPECT_NEAR(std::sqrt((z.row(r).array() - m).square().mean()), 1.0, 1e-6);
    }
    EXPECT_LT((znorm_instance(z) - z).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((znorm_instance((3.7 * x.array() - 11.0).matrix()) - z).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Slicing, OffsetsAndPadding) {
    const auto bag = slice_record(Signal::Ones(12, 5000), 2500, 1250);
    EXPECT_EQ(bag.offsets, (std::vector<Eigen::Index>{0, 1250, 2500}));
    EXPECT_EQ(slice_record(Signal::Ones(12, 2500), 2500, 1250).offsets, (std::vector<Eigen::Index>{0}));
    const auto short_bag = slice_record(Signal::Ones(12, 2000), 2500, 1250);
    ASSERT_EQ(short_bag.size(), 1u);
    EXPECT_EQ(short_bag.slices[0].cols(), 2500);
    EXPECT_EQ(short_bag.slices[0].rightCols(500).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(short_bag.slices[0].leftCols(2000).minCoeff(), 1.0);
}

TEST(Slicing, CountFormula) {
    for (Eigen::Index n : {1, 100, 2499, 2500, 3749, 3750, 5000, 6249, 12345}) {
        const auto expect = static_cast<std::size_t>((std::max<Eigen::Index>(n, 2500) - 2500) / 1250 + 1);
        EXPECT_EQ(slice_record(Signal::Zero(12, n)).size(), expect);
        EXPECT_EQ(slice_count(n, 2500, 1250), expect);
    }
}

TEST(Slicing, SliceContentsMatchSource) {
    Signal x(12, 4000);
    for (Eigen::Index t = 0; t < 4000; ++t) x.col(t).setConstant(static_cast<double>(t));
    const auto bag = slice_record(x, 1000, 700);
    ASSERT_EQ(bag.size(), 5u);
    for (std::size_t i = 0; i < bag.size(); ++i) EXPECT_EQ(bag.slices[i](5, 0), static_cast<double>(bag.offsets[i]));
}

TEST(Preprocess, RecordPipelineUsesOnlyTheRecord) {
    EcgRecord r;
    r.samples = SampleMatrix::Random(12, 5000);
    r.record_id = "x";
    r.subject_id = "s";
    r.labels = {1};
    const auto p = preprocess_record(r, {});
    EXPECT_EQ(p.bag.size(), 3u);
    EXPECT_EQ(p.bag.parent_record_id, "x");
    EXPECT_EQ(p.bag.labels, r.labels);
    const auto again = preprocess_record(r, {});
    EXPECT_EQ(p.normalized, again.normalized);
}
