#pragma once

#include "rhythmorph/ingest.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace rhythmorph {

using Signal = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Zero-phase Butterworth bandpass applied to every row. Rows are extended by
// odd reflection of N/10 samples at each end before the forward-backward pass.
Signal bandpass_filter(const Signal& signal, double low_hz, double high_hz, int order, double fs);

// Per-row z-score using only the row's own statistics (population std).
// Constant rows map to zeros.
Signal znorm_instance(const Signal& signal, double eps = 1e-8);

struct SliceBag {
    std::string parent_record_id;
    std::vector<Signal> slices;           // each kNumLeads x window
    std::vector<Eigen::Index> offsets;    // strictly increasing start indices
    Eigen::Index window = 2500;
    Eigen::Index stride = 1250;
    LabelVector labels;

    std::size_t size() const { return slices.size(); }
};

// floor((max(N, L) - L) / S) + 1
std::size_t slice_count(Eigen::Index n, Eigen::Index window, Eigen::Index stride);

// Windows at offsets 0, S, 2S, ... fully inside the record. Records shorter
// than the window are right zero-padded into a single slice; trailing partial
// windows are dropped.
SliceBag slice_record(const Signal& signal, Eigen::Index window = 2500, Eigen::Index stride = 1250);

struct PreprocessParams {
    double low_hz = 0.5;
    double high_hz = 40.0;
    int order = 4;
    Eigen::Index window = 2500;
    Eigen::Index stride = 1250;
    double eps = 1e-8;
};

struct PreparedRecord {
    Signal normalized;  // full-length filtered + normalised record
    SliceBag bag;
};

// filter -> normalise -> slice, reading nothing but the record itself.
PreparedRecord preprocess_record(const EcgRecord& record, const PreprocessParams& params);

Signal to_signal(const SampleMatrix& samples);

}  // namespace rhythmorph
