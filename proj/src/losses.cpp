#include "rhythmorph/losses.hpp"

#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <cmath>

namespace rhythmorph {

namespace {

void check(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
    if (p.rows() != y.rows() || p.cols() != y.cols() || p.size() == 0) {
        throw DataError(DataErrc::shape_mismatch, "loss: probs and labels must have the same non-empty shape");
    }
}

}  // namespace

LossResult bce_loss(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels, double eps) {
    return asl_loss(probs, labels, 0.0, 0.0, eps);
}

LossResult asl_loss(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels, double gamma_neg, double gamma_pos,
                    double eps) {
    check(probs, labels);
    LossResult r;
    r.grad.resize(probs.rows(), probs.cols());
    const double scale = 1.0 / static_cast<double>(probs.size());
    double total = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            const double raw = probs(i, j);
            const double p = std::clamp(raw, eps, 1.0 - eps);
            const bool inside = raw > eps && raw < 1.0 - eps;
            const double y = labels(i, j);
            // Soft labels mix both branches linearly.
            const double wp = gamma_pos == 0.0 ? 1.0 : std::pow(1.0 - p, gamma_pos);
            const double wn = gamma_neg == 0.0 ? 1.0 : std::pow(p, gamma_neg);
            const double lp = -std::log(p), ln = -std::log1p(-p);
            total += y * wp * lp + (1.0 - y) * wn * ln;
            double g = 0.0;
            if (inside) {
                const double dwp = gamma_pos == 0.0 ? 0.0 : -gamma_pos * std::pow(1.0 - p, gamma_pos - 1.0);
                const double dwn = gamma_neg == 0.0 ? 0.0 : gamma_neg * std::pow(p, gamma_neg - 1.0);
                g = y * (dwp * lp - wp / p) + (1.0 - y) * (dwn * ln + wn / (1.0 - p));
            }
            r.grad(i, j) = g * scale;
        }
    }
    r.value = total * scale;
    return r;
}

}  // namespace rhythmorph
