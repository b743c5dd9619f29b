#include "rhythmorph/rhythm.hpp"

#include "rhythmorph/errors.hpp"
#include "rhythmorph/filter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace rhythmorph {

RrSeries RrSeries::from_peaks(std::vector<std::int64_t> peaks, double fs, double duration_s) {
    RrSeries rr;
    rr.fs = fs;
    rr.duration_s = duration_s;
    for (std::size_t i = 1; i < peaks.size(); ++i) {
        if (peaks[i] <= peaks[i - 1]) throw DataError(DataErrc::precondition, "peak indices must increase");
        rr.rr_s.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) / fs);
    }
    rr.peak_indices = std::move(peaks);
    return rr;
}

namespace {

std::vector<double> moving_average(const std::vector<double>& x, std::size_t width) {
    const std::size_t n = x.size();
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    std::vector<double> out(n);
    const std::size_t half = width / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + (width - half));
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(width);
    }
    return out;
}

}  // namespace

RrSeries detect_rpeaks(std::span<const double> lead, double fs, const DetectorParams& params) {
    const std::size_t n = lead.size();
    if (!(fs > 0.0) || static_cast<double>(n) < 2.0 * fs) {
        throw DataError(DataErrc::precondition, "detect_rpeaks needs at least 2 s of signal");
    }
    const ButterworthBandpass band(2, params.low_hz, params.high_hz, fs);
    const auto bp = band.filtfilt(lead, n / 10);

    // Five-point derivative, centred, then squared.
    std::vector<double> energy(n, 0.0);
    const auto at = [&](std::ptrdiff_t i) {
        return bp[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1))];
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::ptrdiff_t>(i);
        const double d = (-at(k - 2) - 2.0 * at(k - 1) + 2.0 * at(k + 1) + at(k + 2)) / 8.0;
        energy[i] = d * d;
    }
    const auto width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(params.integration_s * fs)));
    const auto mwi = moving_average(energy, width);

    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1]) candidates.push_back(i);
    }

    const auto learn = static_cast<std::size_t>(std::min<double>(static_cast<double>(n), 2.0 * fs));
    double spki = *std::max_element(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(learn)) / 3.0;
    double npki = std::accumulate(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(learn), 0.0) /
                  static_cast<double>(learn) / 2.0;
    const auto refractory = static_cast<std::size_t>(std::lround(params.refractory_s * fs));

    std::vector<std::size_t> qrs;
    const auto threshold = [&] { return npki + 0.25 * (spki - npki); };
    const auto mean_rr = [&] {
        const std::size_t k = std::min<std::size_t>(8, qrs.size() - 1);
        return static_cast<double>(qrs.back() - qrs[qrs.size() - 1 - k]) / static_cast<double>(k);
    };

    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const std::size_t i = candidates[c];
        const double v = mwi[i];
        if (!(spki > 0.0)) break;
        if (v <= threshold()) {
            npki = 0.125 * v + 0.875 * npki;
            continue;
        }
        if (!qrs.empty() && i - qrs.back() < refractory) {
            if (v > mwi[qrs.back()]) qrs.back() = i;
            continue;
        }
        // Search back for a missed beat when the gap is long.
        if (qrs.size() >= 2 && static_cast<double>(i - qrs.back()) > 1.66 * mean_rr()) {
            const double thr2 = 0.5 * threshold();
            std::size_t best = 0;
            double best_v = thr2;
            for (std::size_t b = 0; b < c; ++b) {
                const std::size_t j = candidates[b];
                if (j <= qrs.back() + refractory || j + refractory > i) continue;
                if (mwi[j] > best_v) {
                    best_v = mwi[j];
                    best = j;
                }
            }
            if (best != 0) {
                qrs.push_back(best);
                spki = 0.25 * best_v + 0.75 * spki;
            }
        }
        qrs.push_back(i);
        spki = 0.125 * v + 0.875 * spki;
    }

    // Move each detection to the lead's local maximum, then re-impose the
    // refractory spacing keeping the taller peak.
    const auto half = static_cast<std::size_t>(std::lround(params.refine_s * fs));
    std::vector<std::int64_t> peaks;
    for (std::size_t q : qrs) {
        const std::size_t lo = q >= half ? q - half : 0;
        const std::size_t hi = std::min(n - 1, q + half);
        std::size_t arg = lo;
        for (std::size_t j = lo; j <= hi; ++j)
            if (lead[j] > lead[arg]) arg = j;
        const auto p = static_cast<std::int64_t>(arg);
        if (!peaks.empty() && p - peaks.back() < static_cast<std::int64_t>(refractory)) {
            if (lead[arg] > lead[static_cast<std::size_t>(peaks.back())]) peaks.back() = p;
            continue;
        }
        peaks.push_back(p);
    }
    if (peaks.size() < 2) throw DataError(DataErrc::no_peaks, "no peaks found");
    return RrSeries::from_peaks(std::move(peaks), fs, static_cast<double>(n) / fs);
}

const std::array<std::string_view, kHrvDim>& hrv_feature_names() {
    static constexpr std::array<std::string_view, kHrvDim> names = {
        "mean_rr_s", "median_rr_s", "sdnn_s", "rmssd_s", "pnn50", "cv_rr",
        "min_rr_s", "max_rr_s", "mean_hr_bpm", "sdsd_s", "triangular_index", "beat_count",
        "vlf_power", "lf_power", "hf_power", "lf_hf_ratio", "lf_norm", "hf_norm", "total_power", "hf_peak_hz",
        "rr_skewness", "rr_kurtosis", "drr_mean_s", "drr_std_s", "drr_skewness", "drr_kurtosis",
        "drr_max_abs_s", "drr_frac_above_50ms",
        "sd1_s", "sd2_s", "sd1_sd2", "sample_entropy", "detection_ok", "spectrum_valid", "duration_s",
        "rr_per_min",
    };
    return names;
}

namespace {

struct Moments {
    double mean = 0, sample_std = 0, skew = 0, kurt = 0;
};

Moments moments(const std::vector<double>& x) {
    Moments m;
    const auto n = static_cast<double>(x.size());
    if (x.empty()) return m;
    m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) {
        const double d = v - m.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.sample_std = x.size() > 1 ? std::sqrt(m2 * n / (n - 1.0)) : 0.0;
    if (m2 > 0.0) {
        m.skew = m3 / std::pow(m2, 1.5);
        m.kurt = m4 / (m2 * m2) - 3.0;
    }
    return m;
}

double median(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

double sample_entropy(const std::vector<double>& x, double r) {
    const std::size_t n = x.size();
    const std::size_t m = 2;
    if (n <= m + 1) return 0.0;
    std::size_t b = 0, a = 0;
    for (std::size_t i = 0; i + m < n; ++i) {
        for (std::size_t j = i + 1; j + m < n; ++j) {
            if (std::abs(x[i] - x[j]) > r || std::abs(x[i + 1] - x[j + 1]) > r) continue;
            ++b;
            if (std::abs(x[i + 2] - x[j + 2]) <= r) ++a;
        }
    }
    return -std::log((static_cast<double>(a) + 1.0) / (static_cast<double>(b) + 1.0));
}

struct Spectrum {
    double vlf = 0, lf = 0, hf = 0, hf_peak = 0;
};

// Lomb-Scargle periodogram of the mean-removed tachogram on a 1 mHz grid,
// scaled so that its integral approximates the tachogram variance.
Spectrum lomb_scargle(const std::vector<double>& rr) {
    const std::size_t n = rr.size();
    std::vector<double> t(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) t[i] = (acc += rr[i]);
    const double mean = acc / static_cast<double>(n);
    const double span = t.back() - t.front();
    constexpr double df = 0.001;
    Spectrum s;
    double hf_best = -1.0;
    for (int k = 3; k <= 400; ++k) {
        const double f = k * df;
        const double w = 2.0 * std::numbers::pi * f;
        double s2 = 0, c2 = 0;
        for (double ti : t) {
            s2 += std::sin(2.0 * w * ti);
            c2 += std::cos(2.0 * w * ti);
        }
        const double tau = std::atan2(s2, c2) / (2.0 * w);
        double yc = 0, ys = 0, cc = 0, ss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = std::cos(w * (t[i] - tau));
            const double sn = std::sin(w * (t[i] - tau));
            const double y = rr[i] - mean;
            yc += y * c;
            ys += y * sn;
            cc += c * c;
            ss += sn * sn;
        }
        double p = 0.0;
        if (cc > 0) p += yc * yc / cc;
        if (ss > 0) p += ys * ys / ss;
        const double psd = 0.5 * p * 2.0 * span / static_cast<double>(n);
        const double power = psd * df;
        if (f < 0.04) {
            s.vlf += power;
        } else if (f < 0.15) {
            s.lf += power;
        } else {
            s.hf += power;
            if (psd > hf_best) {
                hf_best = psd;
                s.hf_peak = f;
            }
        }
    }
    return s;
}

}  // namespace

HrvVector hrv_features(const RrSeries& series) {
    const auto& rr = series.rr_s;
    if (rr.size() < kMinRrIntervals) {
        throw DataError(DataErrc::insufficient_beats,
                        "insufficient beats: " + std::to_string(rr.size()) + " RR intervals");
    }
    for (double v : rr) {
        if (!(v > 0.0) || !std::isfinite(v)) throw DataError(DataErrc::precondition, "RR intervals must be positive");
    }
    HrvVector out;
    auto& h = out.values;
    const auto n = static_cast<double>(rr.size());

    std::vector<double> d(rr.size() - 1);
    for (std::size_t i = 1; i < rr.size(); ++i) d[i - 1] = rr[i] - rr[i - 1];
    const Moments mr = moments(rr);
    const Moments md = moments(d);

    double sq = 0.0, nn50 = 0.0, up50 = 0.0, max_abs = 0.0;
    for (double v : d) {
        sq += v * v;
        nn50 += std::abs(v) > 0.05;
        up50 += v > 0.05;
        max_abs = std::max(max_abs, std::abs(v));
    }
    const auto nd = static_cast<double>(d.size());

    std::map<long long, int> hist;
    for (double v : rr) ++hist[static_cast<long long>(std::floor(v * 128.0))];
    int mode = 0;
    for (const auto& [bin, count] : hist) mode = std::max(mode, count);

    h[hrv_mean_rr] = mr.mean;
    h[hrv_median_rr] = median(rr);
    h[hrv_sdnn] = mr.sample_std;
    h[hrv_rmssd] = std::sqrt(sq / nd);
    h[hrv_pnn50] = nn50 / nd;
    h[hrv_cv_rr] = mr.sample_std / mr.mean;
    h[hrv_min_rr] = *std::min_element(rr.begin(), rr.end());
    h[hrv_max_rr] = *std::max_element(rr.begin(), rr.end());
    h[hrv_mean_hr] = 60.0 / mr.mean;
    h[hrv_sdsd] = md.sample_std;
    h[hrv_tri_index] = n / mode;
    h[hrv_beat_count] = n + 1.0;

    if (rr.size() >= kMinSpectralIntervals) {
        const Spectrum s = lomb_scargle(rr);
        h[hrv_vlf] = s.vlf;
        h[hrv_lf] = s.lf;
        h[hrv_hf] = s.hf;
        h[hrv_lf_hf] = s.hf > 0 ? s.lf / s.hf : 0.0;
        h[hrv_lf_norm] = s.lf + s.hf > 0 ? s.lf / (s.lf + s.hf) : 0.0;
        h[hrv_hf_norm] = s.lf + s.hf > 0 ? s.hf / (s.lf + s.hf) : 0.0;
        h[hrv_total_power] = s.vlf + s.lf + s.hf;
        h[hrv_hf_peak] = s.hf_peak;
        h[hrv_freq_valid] = 1.0;
    }

    h[hrv_rr_skew] = mr.skew;
    h[hrv_rr_kurt] = mr.kurt;
    h[hrv_drr_mean] = md.mean;
    h[hrv_drr_std] = md.sample_std;
    h[hrv_drr_skew] = md.skew;
    h[hrv_drr_kurt] = md.kurt;
    h[hrv_drr_max_abs] = max_abs;
    h[hrv_drr_frac_up50] = up50 / nd;

    const double sd1 = std::sqrt(md.sample_std * md.sample_std / 2.0);
    const double sd2 = std::sqrt(std::max(0.0, 2.0 * mr.sample_std * mr.sample_std - sd1 * sd1));
    h[hrv_sd1] = sd1;
    h[hrv_sd2] = sd2;
    h[hrv_sd1_sd2] = sd2 > 0 ? sd1 / sd2 : 0.0;
    h[hrv_sampen] = sample_entropy(rr, 0.2 * mr.sample_std);
    h[hrv_detected] = 1.0;
    const double duration = series.duration_s > 0 ? series.duration_s : std::accumulate(rr.begin(), rr.end(), 0.0);
    h[hrv_duration] = duration;
    h[hrv_rr_per_min] = 60.0 * n / duration;
    return out;
}

HrvVector record_hrv(const EcgRecord& record, const DetectorParams& params) {
    const Eigen::VectorXd lead = record.samples.row(kLeadII).transpose().cast<double>();
    const double duration = static_cast<double>(record.length()) / record.fs;
    try {
        return hrv_features(detect_rpeaks({lead.data(), static_cast<std::size_t>(lead.size())}, record.fs, params));
    } catch (const DataError&) {
        HrvVector fallback;
        fallback.values[hrv_duration] = duration;
        return fallback;
    }
}

std::vector<HrvVector> broadcast_rhythm(const HrvVector& hrv, const SliceBag& bag) {
    return std::vector<HrvVector>(bag.size(), hrv);
}

}  // namespace rhythmorph
