#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace rhythmorph {

inline constexpr double kProbEps = 1e-6;

// Generalised mean (mean p^Q)^(1/Q) evaluated in the log domain with a
// log-sum-exp reduction. Inputs are clamped to [eps, 1-eps] first and the
// result is clamped again. Throws DataError("empty bag") when M = 0.
double power_mean(std::span<const double> probs, double q, double eps = kProbEps);

struct RecordPrediction {
    std::string record_id;
    Eigen::VectorXd probs;
    double q = 3.0;
    Eigen::Index n_slices = 0;
};

// Column-wise power mean over a [M x classes] slice probability matrix.
RecordPrediction pool_record(const Eigen::MatrixXd& slice_probs, double q, std::string record_id = {});

struct QSweepRow {
    double q;
    Eigen::VectorXd probs;
};

std::vector<QSweepRow> q_sweep(const Eigen::MatrixXd& slice_probs, std::span<const double> q_list);

}  // namespace rhythmorph
