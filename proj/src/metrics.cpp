#include "rhythmorph/metrics.hpp"

#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>

namespace rhythmorph {

namespace {

void check_inputs(std::span<const double> s, std::span<const std::uint8_t> y) {
    if (s.size() != y.size()) throw DataError(DataErrc::shape_mismatch, "scores and labels differ in length");
}

// Indices sorted by descending score.
std::vector<std::size_t> rank_desc(std::span<const double> s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::uint64_t pos = 0, neg = 0, neg_below = 0, twice = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        std::uint64_t gp = 0, gn = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] ? gp : gn)++;
            ++j;
        }
        twice += 2 * gp * neg_below + gp * gn;
        neg_below += gn;
        pos += gp;
        neg += gn;
        i = j;
    }
    if (pos == 0 || neg == 0) throw DataError(DataErrc::undefined_metric, "undefined AUC: single-class input");
    return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const auto total_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
    if (total_pos == 0) throw DataError(DataErrc::undefined_metric, "undefined PR-AUC: no positives");
    const auto idx = rank_desc(scores);
    double tp = 0, fp = 0, prev_recall = 0, ap = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] ? tp : fp) += 1.0;
            ++j;
        }
        const double recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
        i = j;
    }
    return ap;
}

F1Result macro_f1(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels, double tau) {
    if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) {
        throw DataError(DataErrc::shape_mismatch, "macro_f1: shape mismatch");
    }
    F1Result r;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            const bool pred = probs(i, c) > tau, truth = labels(i, c) > 0.5;
            tp += pred && truth;
            fp += pred && !truth;
            fn += !pred && truth;
        }
        const double denom = 2 * tp + fp + fn;
        r.per_class.push_back(denom > 0 ? 2 * tp / denom : 0.0);
    }
    r.macro = r.per_class.empty()
                  ? 0.0
                  : std::accumulate(r.per_class.begin(), r.per_class.end(), 0.0) / static_cast<double>(r.per_class.size());
    return r;
}

FoldMetrics evaluate_predictions(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels,
                                 const std::vector<std::string>& class_names, double tau, const ClassGroups& groups,
                                 std::string fold) {
    if (probs.cols() != static_cast<Eigen::Index>(class_names.size())) {
        throw DataError(DataErrc::shape_mismatch, "evaluate: class count mismatch");
    }
    FoldMetrics m;
    m.fold = std::move(fold);
    const F1Result f1 = macro_f1(probs, labels, tau);
    m.macro_f1 = f1.macro;
    std::vector<double> rocs, prs;
    std::map<std::string, double> roc_by_name;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
        ClassMetrics cm;
        cm.name = class_names[static_cast<std::size_t>(c)];
        cm.f1 = f1.per_class[static_cast<std::size_t>(c)];
        std::vector<double> s(static_cast<std::size_t>(probs.rows()));
        std::vector<std::uint8_t> y(s.size());
        double tp = 0, fp = 0, fn = 0;
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            s[static_cast<std::size_t>(i)] = probs(i, c);
            y[static_cast<std::size_t>(i)] = labels(i, c) > 0.5;
            const bool pred = probs(i, c) > tau;
            tp += pred && y[static_cast<std::size_t>(i)];
            fp += pred && !y[static_cast<std::size_t>(i)];
            fn += !pred && y[static_cast<std::size_t>(i)];
        }
        cm.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        cm.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        cm.positives = static_cast<int>(tp + fn);
        try {
            cm.roc_auc = roc_auc(s, y);
            cm.pr_auc = pr_auc(s, y);
            rocs.push_back(*cm.roc_auc);
            prs.push_back(*cm.pr_auc);
            roc_by_name[cm.name] = *cm.roc_auc;
        } catch (const DataError&) {
            m.warnings.push_back("class '" + cm.name + "' has a single label value; skipped in ranking macros");
        }
        m.classes.push_back(std::move(cm));
    }
    const auto avg = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    if (!rocs.empty()) {
        m.macro_roc_auc = avg(rocs);
        m.macro_pr_auc = avg(prs);
    }
    for (const auto& [group, members] : groups) {
        std::vector<double> v;
        for (const auto& name : members) {
            const auto it = roc_by_name.find(name);
            if (it != roc_by_name.end()) v.push_back(it->second);
        }
        if (!v.empty()) m.group_roc_auc[group] = avg(v);
    }
    return m;
}

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    r.n = static_cast<int>(v.size());
    if (v.empty()) return r;
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return r;
}

MeanStd EvalReport::macro_f1() const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.macro_f1);
    return mean_std(v);
}

MeanStd EvalReport::macro_roc_auc() const {
    std::vector<double> v;
    for (const auto& f : folds)
        if (f.macro_roc_auc) v.push_back(*f.macro_roc_auc);
    return mean_std(v);
}

MeanStd EvalReport::macro_pr_auc() const {
    std::vector<double> v;
    for (const auto& f : folds)
        if (f.macro_pr_auc) v.push_back(*f.macro_pr_auc);
    return mean_std(v);
}

MeanStd EvalReport::group_roc_auc(const std::string& group) const {
    std::vector<double> v;
    for (const auto& f : folds) {
        const auto it = f.group_roc_auc.find(group);
        if (it != f.group_roc_auc.end()) v.push_back(it->second);
    }
    return mean_std(v);
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["tau"] = tau;
    j["tau_protocol_deviation"] = tau_deviation;
    j["variant"] = variant;
    j["class_names"] = class_names;
    const auto ms = [](const MeanStd& m) { return nlohmann::ordered_json{{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; };
    j["summary"] = {{"macro_f1", ms(macro_f1())}, {"macro_roc_auc", ms(macro_roc_auc())},
                    {"macro_pr_auc", ms(macro_pr_auc())}};
    std::map<std::string, bool> groups;
    for (const auto& f : folds)
        for (const auto& [g, _] : f.group_roc_auc) groups[g] = true;
    for (const auto& [g, _] : groups) j["summary"]["group_roc_auc"][g] = ms(group_roc_auc(g));
    auto& arr = j["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : folds) {
        nlohmann::ordered_json fj;
        fj["fold"] = f.fold;
        fj["macro_f1"] = f.macro_f1;
        fj["macro_roc_auc"] = f.macro_roc_auc ? nlohmann::ordered_json(*f.macro_roc_auc) : nlohmann::ordered_json();
        fj["macro_pr_auc"] = f.macro_pr_auc ? nlohmann::ordered_json(*f.macro_pr_auc) : nlohmann::ordered_json();
        fj["group_roc_auc"] = f.group_roc_auc;
        auto& cls = fj["classes"] = nlohmann::ordered_json::array();
        for (const auto& c : f.classes) {
            cls.push_back({{"name", c.name},
                           {"f1", c.f1},
                           {"precision", c.precision},
                           {"recall", c.recall},
                           {"roc_auc", c.roc_auc ? nlohmann::ordered_json(*c.roc_auc) : nlohmann::ordered_json()},
                           {"pr_auc", c.pr_auc ? nlohmann::ordered_json(*c.pr_auc) : nlohmann::ordered_json()},
                           {"positives", c.positives}});
        }
        fj["warnings"] = f.warnings;
        arr.push_back(std::move(fj));
    }
    return j;
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "fold,class,f1,precision,recall,roc_auc,pr_auc,tau\n";
    const auto opt = [](const std::optional<double>& v) {
        std::ostringstream s;
        s.precision(10);
        if (v) s << *v;
        return s.str();
    };
    for (const auto& f : folds) {
        for (const auto& c : f.classes) {
            out << f.fold << ',' << c.name << ',' << c.f1 << ',' << c.precision << ',' << c.recall << ','
                << opt(c.roc_auc) << ',' << opt(c.pr_auc) << ',' << tau << '\n';
        }
        out << f.fold << ",macro," << f.macro_f1 << ",,," << opt(f.macro_roc_auc) << ',' << opt(f.macro_pr_auc) << ','
            << tau << '\n';
    }
    return out.str();
}

}  // namespace rhythmorph
