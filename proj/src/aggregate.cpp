#include "rhythmorph/aggregate.hpp"

#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rhythmorph {

double power_mean(std::span<const double> probs, double q, double eps) {
    if (probs.empty()) throw DataError(DataErrc::empty_bag, "empty bag");
    if (!(q >= 1.0) || !std::isfinite(q)) throw ConfigError("power_mean: Q must be a finite value >= 1");
    double mx = -std::numeric_limits<double>::infinity();
    for (double p : probs) mx = std::max(mx, q * std::log(std::clamp(p, eps, 1.0 - eps)));
    double acc = 0.0;
    for (double p : probs) acc += std::exp(q * std::log(std::clamp(p, eps, 1.0 - eps)) - mx);
    const double log_mean = (mx + std::log(acc) - std::log(static_cast<double>(probs.size()))) / q;
    return std::clamp(std::exp(log_mean), eps, 1.0 - eps);
}

RecordPrediction pool_record(const Eigen::MatrixXd& slice_probs, double q, std::string record_id) {
    if (slice_probs.rows() == 0) throw DataError(DataErrc::empty_bag, "empty bag");
    RecordPrediction r;
    r.record_id = std::move(record_id);
    r.q = q;
    r.n_slices = slice_probs.rows();
    r.probs.resize(slice_probs.cols());
    std::vector<double> col(static_cast<std::size_t>(slice_probs.rows()));
    for (Eigen::Index c = 0; c < slice_probs.cols(); ++c) {
        for (Eigen::Index m = 0; m < slice_probs.rows(); ++m) col[static_cast<std::size_t>(m)] = slice_probs(m, c);
        r.probs[c] = power_mean(col, q);
    }
    return r;
}

std::vector<QSweepRow> q_sweep(const Eigen::MatrixXd& slice_probs, std::span<const double> q_list) {
    std::vector<QSweepRow> out;
    for (double q : q_list) out.push_back({q, pool_record(slice_probs, q).probs});
    return out;
}

}  // namespace rhythmorph
