#include "rhythmorph/filter.hpp"

#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace rhythmorph {

using cplx = std::complex<double>;

ButterworthBandpass::ButterworthBandpass(int order, double low_hz, double high_hz, double fs) : fs_(fs) {
    if (order < 1) throw ConfigError("filter order must be >= 1");
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0)) {
        throw ConfigError("cutoff outside (0, fs/2): require 0 < low < high < fs/2");
    }
    const double pi = std::numbers::pi;
    const double w1 = 2.0 * fs * std::tan(pi * low_hz / fs);
    const double w2 = 2.0 * fs * std::tan(pi * high_hz / fs);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    std::vector<cplx> zpoles;
    for (int k = 1; k <= order; ++k) {
        const cplx p = std::polar(1.0, pi * (2.0 * k + order - 1) / (2.0 * order));
        const cplx pb = p * bw;
        const cplx disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
        for (const cplx s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
            zpoles.push_back((2.0 * fs + s) / (2.0 * fs - s));
        }
    }

    std::vector<cplx> upper, real;
    for (const cplx& z : zpoles) {
        if (z.imag() > 1e-12) {
            upper.push_back(z);
        } else if (std::abs(z.imag()) <= 1e-12) {
            real.push_back(z);
        }
    }
    std::sort(upper.begin(), upper.end(), [](cplx x, cplx y) { return std::abs(x) < std::abs(y); });
    for (const cplx& z : upper) {
        Biquad s;
        s.b = {1.0, 0.0, -1.0};
        s.a = {1.0, -2.0 * z.real(), std::norm(z)};
        sections_.push_back(s);
    }
    std::sort(real.begin(), real.end(), [](cplx x, cplx y) { return x.real() < y.real(); });
    for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
        Biquad s;
        s.b = {1.0, 0.0, -1.0};
        s.a = {1.0, -(real[i].real() + real[i + 1].real()), real[i].real() * real[i + 1].real()};
        sections_.push_back(s);
    }

    // Unit gain at the digital image of the analog centre frequency.
    const double centre = std::atan(w0 / (2.0 * fs)) * fs / pi;
    const double g = magnitude(centre);
    const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(sections_.size()));
    for (auto& s : sections_) {
        for (double& c : s.b) c *= per_section;
    }

    double scale = 1.0;
    for (const auto& s : sections_) {
        const double a_sum = s.a[0] + s.a[1] + s.a[2];
        const double gain = (s.b[0] + s.b[1] + s.b[2]) / a_sum;
        const double z2 = s.b[2] - s.a[2] * gain;
        const double z1 = s.b[1] - s.a[1] * gain + z2;
        zi_.push_back({scale * z1, scale * z2});
        scale *= gain;
    }
}

void ButterworthBandpass::filter(std::span<double> x, double x0) const {
    for (std::size_t k = 0; k < sections_.size(); ++k) {
        const auto& s = sections_[k];
        double z1 = zi_[k][0] * x0;
        double z2 = zi_[k][1] * x0;
        for (double& v : x) {
            const double in = v;
            const double out = s.b[0] * in + z1;
            z1 = s.b[1] * in - s.a[1] * out + z2;
            z2 = s.b[2] * in - s.a[2] * out;
            v = out;
        }
    }
}

std::vector<double> ButterworthBandpass::filtfilt(std::span<const double> x, std::size_t pad) const {
    const std::size_t n = x.size();
    pad = std::min(pad, n > 0 ? n - 1 : 0);
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
        ext[i] = 2.0 * x[0] - x[pad - i];
        ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

    filter(ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    filter(ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

double ButterworthBandpass::magnitude(double freq_hz) const {
    const cplx z = std::polar(1.0, 2.0 * std::numbers::pi * freq_hz / fs_);
    const cplx zi = 1.0 / z;
    cplx h = 1.0;
    for (const auto& s : sections_) {
        h *= (s.b[0] + s.b[1] * zi + s.b[2] * zi * zi) / (s.a[0] + s.a[1] * zi + s.a[2] * zi * zi);
    }
    return std::abs(h);
}

}  // namespace rhythmorph
