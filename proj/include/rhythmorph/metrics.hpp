#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rhythmorph {

// Mann-Whitney AUC with half credit for ties, from integer pair counts.
// Throws DataError(undefined_metric) unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Average precision: sum over distinct thresholds of (recall step) x precision.
// Throws DataError(undefined_metric) without positives.
double pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ClassMetrics {
    std::string name;
    double f1 = 0, precision = 0, recall = 0;
    std::optional<double> roc_auc, pr_auc;
    int positives = 0;
};

struct F1Result {
    double macro = 0;
    std::vector<double> per_class;
};

// Prediction is p > tau. A class with no true, predicted or actual positives
// contributes F1 = 0.
F1Result macro_f1(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels, double tau = 0.5);

struct FoldMetrics {
    std::string fold;
    std::vector<ClassMetrics> classes;
    double macro_f1 = 0;
    std::optional<double> macro_roc_auc, macro_pr_auc;
    std::map<std::string, double> group_roc_auc;
    std::vector<std::string> warnings;
};

using ClassGroups = std::map<std::string, std::vector<std::string>>;

// Per-class and macro metrics on record-level probabilities. Classes whose
// column holds a single label value are left out of the ranking averages and
// noted in `warnings`.
FoldMetrics evaluate_predictions(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels,
                                 const std::vector<std::string>& class_names, double tau,
                                 const ClassGroups& groups = {}, std::string fold = {});

struct MeanStd {
    double mean = 0, std = 0;
    int n = 0;
};

MeanStd mean_std(const std::vector<double>& values);

struct EvalReport {
    double tau = 0.5;
    bool tau_deviation = false;  // tau differs from the protocol value 0.5
    std::string variant = "full";
    std::vector<std::string> class_names;
    std::vector<FoldMetrics> folds;

    MeanStd macro_f1() const;
    MeanStd macro_roc_auc() const;
    MeanStd macro_pr_auc() const;
    MeanStd group_roc_auc(const std::string& group) const;

    nlohmann::ordered_json to_json() const;
    std::string to_csv() const;
};

}  // namespace rhythmorph
