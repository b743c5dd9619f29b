#pragma once

#include <array>
#include <span>
#include <vector>

namespace rhythmorph {

// One biquad in transposed direct form II: b = {b0, b1, b2}, a = {1, a1, a2}.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

// Digital Butterworth bandpass as cascaded second-order sections.
// `order` is the prototype order; the bandpass has 2*order poles and
// `order` sections. Designed by bilinear transform with pre-warping and
// normalised to unit gain at the band centre.
class ButterworthBandpass {
public:
    ButterworthBandpass(int order, double low_hz, double high_hz, double fs);

    const std::vector<Biquad>& sections() const { return sections_; }

    // Single causal pass with steady-state initial conditions scaled by `x0`.
    void filter(std::span<double> x, double x0) const;

    // Zero-phase forward-backward pass over an odd-reflected extension of
    // `pad` samples at each end.
    std::vector<double> filtfilt(std::span<const double> x, std::size_t pad) const;

    // |H(e^{j 2 pi f / fs})| for a single causal pass.
    double magnitude(double freq_hz) const;

private:
    std::vector<Biquad> sections_;
    std::vector<std::array<double, 2>> zi_;  // step-response steady state
    double fs_;
};

}  // namespace rhythmorph
