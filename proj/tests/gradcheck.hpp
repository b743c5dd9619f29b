#pragma once
// Central finite-difference checks shared by the unit tests and the
// acceptance runner.

#include "rhythmorph/losses.hpp"
#include "rhythmorph/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace gradcheck {

using namespace rhythmorph;

struct BlockResult {
    std::string name;
    double rel_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
    int checked = 0;
};

// Below this norm both gradients count as zero; relative error is then
// measured against the floor instead of the vanishing norm.
inline constexpr double kNormFloor = 1e-7;

inline double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), kNormFloor});
}

inline double slice_loss(const EcgModel& m, const Signal& x, const Vector& morph, const Vector& hrv,
                         const Matrix& labels) {
    const Vector p = m.forward(x, morph, hrv);
    return bce_loss(p.transpose(), labels).value;
}

// Checks up to `per_param` random entries of every parameter, plus `n_input`
// random input coordinates (reported as block "input").
inline std::vector<BlockResult> check_model(EcgModel& m, const Signal& x, const Vector& morph, const Vector& hrv,
                                            const Matrix& labels, int per_param, int n_input, std::uint64_t seed,
                                            double step = 1e-4) {
    std::mt19937_64 rng(seed);
    m.params().zero_grad();
    SliceTrace trace;
    const Vector p = m.forward(x, morph, hrv, &trace);
    const LossResult lr = bce_loss(p.transpose(), labels);
    const Signal dx = m.backward(trace, lr.grad.transpose());
    std::vector<BlockResult> out;
    for (auto& prm : m.params().params()) {
        const Eigen::Index n = prm.value.size();
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(per_param)));
        std::vector<double> a, num;
        for (auto i : idx) {
            double& w = prm.value.data()[i];
            const double keep = w;
            w = keep + step;
            const double up = slice_loss(m, x, morph, hrv, labels);
            w = keep - step;
            const double down = slice_loss(m, x, morph, hrv, labels);
            w = keep;
            num.push_back((up - down) / (2 * step));
            a.push_back(prm.grad.data()[i]);
        }
        out.push_back({prm.name, rel_error(a, num), static_cast<int>(a.size())});
    }
    if (n_input > 0) {
        std::uniform_int_distribution<Eigen::Index> row(0, x.rows() - 1), col(0, x.cols() - 1);
        Signal xv = x;
        std::vector<double> a, num;
        for (int k = 0; k < n_input; ++k) {
            const auto r = row(rng), c = col(rng);
            const double keep = xv(r, c);
            xv(r, c) = keep + step;
            const double up = slice_loss(m, xv, morph, hrv, labels);
            xv(r, c) = keep - step;
            const double down = slice_loss(m, xv, morph, hrv, labels);
            xv(r, c) = keep;
            num.push_back((up - down) / (2 * step));
            a.push_back(dx(r, c));
        }
        out.push_back({"input", rel_error(a, num), n_input});
    }
    return out;
}

// Loss gradient w.r.t. probabilities against central differences.
template <typename LossFn>
double check_loss(LossFn loss, const Matrix& probs, const Matrix& labels, double step = 1e-6) {
    const Matrix g = loss(probs, labels).grad;
    std::vector<double> a, num;
    Matrix p = probs;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double keep = p.data()[i];
        p.data()[i] = keep + step;
        const double up = loss(p, labels).value;
        p.data()[i] = keep - step;
        const double down = loss(p, labels).value;
        p.data()[i] = keep;
        num.push_back((up - down) / (2 * step));
        a.push_back(g.data()[i]);
    }
    return rel_error(a, num);
}

}  // namespace gradcheck
