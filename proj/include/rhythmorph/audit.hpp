#pragma once

#include <atomic>
#include <cstdint>

namespace rhythmorph {

// Process-wide counters of every operation that learns from data. `zeroshot`
// snapshots them before and after inference and requires a zero delta.
struct FitCounters {
    std::atomic<std::uint64_t> minirocket_fit{0};
    std::atomic<std::uint64_t> pca_fit{0};
    std::atomic<std::uint64_t> scaler_fit{0};
    std::atomic<std::uint64_t> parameter_update{0};

    struct Snapshot {
        std::uint64_t minirocket_fit, pca_fit, scaler_fit, parameter_update;
        std::uint64_t total() const { return minirocket_fit + pca_fit + scaler_fit + parameter_update; }
    };

    Snapshot snapshot() const {
        return {minirocket_fit.load(), pca_fit.load(), scaler_fit.load(), parameter_update.load()};
    }
};

inline FitCounters& fit_counters() {
    static FitCounters counters;
    return counters;
}

}  // namespace rhythmorph
