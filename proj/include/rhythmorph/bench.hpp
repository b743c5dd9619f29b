#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace rhythmorph {

struct ScanBenchRow {
    Eigen::Index length = 0;
    double median_ms = 0;
    double ratio = 0;  // median(L) / median(L/2 entry); 0 for the first row
};

struct ScanBenchOptions {
    int reps = 9;
    Eigen::Index channels = 64;
    Eigen::Index state = 16;
    std::uint64_t seed = 0;
    int threads = 1;
};

// Median wall-clock of a forward selective scan per length, after one
// untimed warm-up call per length.
std::vector<ScanBenchRow> scan_scaling_bench(const std::vector<Eigen::Index>& lengths, const ScanBenchOptions& options);

std::string scan_bench_csv(const std::vector<ScanBenchRow>& rows);

}  // namespace rhythmorph
