#pragma once

#include "rhythmorph/ingest.hpp"
#include "rhythmorph/preprocess.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace rhythmorph {

struct RrSeries {
    std::vector<std::int64_t> peak_indices;  // strictly increasing
    std::vector<double> rr_s;                // peak_indices.size() - 1 gaps
    double fs = 500.0;
    double duration_s = 0.0;                 // length of the source record

    // Builds gaps from peak indices; throws DataError on non-increasing peaks.
    static RrSeries from_peaks(std::vector<std::int64_t> peaks, double fs, double duration_s);
};

struct DetectorParams {
    double low_hz = 5.0;
    double high_hz = 15.0;
    double integration_s = 0.150;
    double refractory_s = 0.200;
    double refine_s = 0.075;  // half-width of the search window on the raw lead
};

// QRS detection: bandpass, derivative, squaring, moving-window integration and
// an adaptive dual threshold with search-back. Requires at least 2 s of signal.
RrSeries detect_rpeaks(std::span<const double> lead, double fs, const DetectorParams& params = {});

inline constexpr int kHrvDim = 36;

enum HrvIndex : int {
    hrv_mean_rr, hrv_median_rr, hrv_sdnn, hrv_rmssd, hrv_pnn50, hrv_cv_rr,
    hrv_min_rr, hrv_max_rr, hrv_mean_hr, hrv_sdsd, hrv_tri_index, hrv_beat_count,
    hrv_vlf, hrv_lf, hrv_hf, hrv_lf_hf, hrv_lf_norm, hrv_hf_norm, hrv_total_power, hrv_hf_peak,
    hrv_rr_skew, hrv_rr_kurt, hrv_drr_mean, hrv_drr_std, hrv_drr_skew, hrv_drr_kurt, hrv_drr_max_abs,
    hrv_drr_frac_up50,
    hrv_sd1, hrv_sd2, hrv_sd1_sd2, hrv_sampen, hrv_detected, hrv_freq_valid, hrv_duration,
    hrv_rr_per_min,
};

const std::array<std::string_view, kHrvDim>& hrv_feature_names();

struct HrvVector {
    Eigen::VectorXd values = Eigen::VectorXd::Zero(kHrvDim);
};

// Minimum interval counts for the time-domain and spectral blocks.
inline constexpr std::size_t kMinRrIntervals = 4;
inline constexpr std::size_t kMinSpectralIntervals = 16;

HrvVector hrv_features(const RrSeries& rr);

// Detection on lead II of the full record. When detection or feature
// extraction fails the vector is all zero except duration, with the detection
// flag cleared.
HrvVector record_hrv(const EcgRecord& record, const DetectorParams& params = {});

std::vector<HrvVector> broadcast_rhythm(const HrvVector& hrv, const SliceBag& bag);

}  // namespace rhythmorph
