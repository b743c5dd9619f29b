#include "rhythmorph/preprocess.hpp"

#include "rhythmorph/errors.hpp"
#include "rhythmorph/filter.hpp"

#include <algorithm>
#include <cmath>

namespace rhythmorph {

Signal bandpass_filter(const Signal& signal, double low_hz, double high_hz, int order, double fs) {
    const ButterworthBandpass design(order, low_hz, high_hz, fs);
    const Eigen::Index n = signal.cols();
    if (n <= 3 * order) {
        throw DataError(DataErrc::precondition,
                        "record too short for stable filtering: N=" + std::to_string(n));
    }
    const auto pad = static_cast<std::size_t>(n / 10);
    Signal out(signal.rows(), n);
    for (Eigen::Index r = 0; r < signal.rows(); ++r) {
        const auto y = design.filtfilt({signal.row(r).data(), static_cast<std::size_t>(n)}, pad);
        std::copy(y.begin(), y.end(), out.row(r).data());
    }
    return out;
}

Signal znorm_instance(const Signal& signal, double eps) {
    Signal out(signal.rows(), signal.cols());
    const auto n = static_cast<double>(signal.cols());
    for (Eigen::Index r = 0; r < signal.rows(); ++r) {
        const auto row = signal.row(r);
        if (row.size() == 0 || row.maxCoeff() == row.minCoeff()) {
            out.row(r).setZero();
            continue;
        }
        const double mean = row.sum() / n;
        const double var = (row.array() - mean).square().sum() / n;
        out.row(r) = (row.array() - mean) / (std::sqrt(var) + eps);
    }
    return out;
}

std::size_t slice_count(Eigen::Index n, Eigen::Index window, Eigen::Index stride) {
    return static_cast<std::size_t>((std::max(n, window) - window) / stride + 1);
}

SliceBag slice_record(const Signal& signal, Eigen::Index window, Eigen::Index stride) {
    if (window < 1 || stride < 1 || stride > window) {
        throw ConfigError("slice_record requires 1 <= stride <= window");
    }
    SliceBag bag;
    bag.window = window;
    bag.stride = stride;
    const Eigen::Index n = signal.cols();
    if (n < window) {
        Signal s = Signal::Zero(signal.rows(), window);
        s.leftCols(n) = signal;
        bag.slices.push_back(std::move(s));
        bag.offsets.push_back(0);
        return bag;
    }
    for (Eigen::Index off = 0; off + window <= n; off += stride) {
        bag.slices.emplace_back(signal.middleCols(off, window));
        bag.offsets.push_back(off);
    }
    return bag;
}

Signal to_signal(const SampleMatrix& samples) {
    return samples.cast<double>();
}

PreparedRecord preprocess_record(const EcgRecord& record, const PreprocessParams& params) {
    validate_record(record);
    PreparedRecord out;
    out.normalized = znorm_instance(
        bandpass_filter(to_signal(record.samples), params.low_hz, params.high_hz, params.order, record.fs),
        params.eps);
    out.bag = slice_record(out.normalized, params.window, params.stride);
    out.bag.parent_record_id = record.record_id;
    out.bag.labels = record.labels;
    return out;
}

}  // namespace rhythmorph
