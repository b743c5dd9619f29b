#pragma once

#include <Eigen/Core>

namespace rhythmorph {

struct LossResult {
    double value = 0.0;
    Eigen::MatrixXd grad;  // d value / d probs, same shape as probs
};

// Mean over all elements of -[y ln p + (1-y) ln(1-p)], p clamped to [eps, 1-eps].
LossResult bce_loss(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels, double eps = 1e-6);

// Asymmetric focal loss without probability margin:
//   y=1: (1-p)^gamma_pos * -ln p      y=0: p^gamma_neg * -ln(1-p)
LossResult asl_loss(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels, double gamma_neg = 2.5,
                    double gamma_pos = 0.0, double eps = 1e-6);

}  // namespace rhythmorph
