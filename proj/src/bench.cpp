#include "rhythmorph/bench.hpp"

#include "rhythmorph/errors.hpp"
#include "rhythmorph/ssm.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

namespace rhythmorph {

namespace {

ScanParams random_params(Eigen::Index T, Eigen::Index E, Eigen::Index N, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScanParams p;
    p.A = Matrix::NullaryExpr(E, N, [&] { return -0.05 - 2.0 * u(rng); });
    p.delta = Matrix::NullaryExpr(T, E, [&] { return 1e-3 + 0.1 * u(rng); });
    p.B = Matrix::NullaryExpr(T, N, [&] { return u(rng) - 0.5; });
    p.C = Matrix::NullaryExpr(T, N, [&] { return u(rng) - 0.5; });
    return p;
}

}  // namespace

std::vector<ScanBenchRow> scan_scaling_bench(const std::vector<Eigen::Index>& lengths, const ScanBenchOptions& o) {
    if (o.reps < 1 || o.channels < 1 || o.state < 1) throw ConfigError("bench needs reps, channels and state >= 1");
    std::mt19937_64 rng(o.seed);
    ScanOptions scan;
    scan.threads = o.threads;
    std::vector<ScanBenchRow> rows;
    for (auto T : lengths) {
        if (T < 1) throw ConfigError("bench lengths must be positive");
        const ScanParams p = random_params(T, o.channels, o.state, rng);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        const Matrix u = Matrix::NullaryExpr(T, o.channels, [&] { return dist(rng); });
        volatile double sink = ssm_scan(u, p, ScanDirection::forward, scan).sum();
        std::vector<double> times;
        for (int r = 0; r < o.reps; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const Matrix y = ssm_scan(u, p, ScanDirection::forward, scan);
            const auto t1 = std::chrono::steady_clock::now();
            sink = sink + y(0, 0);
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
        ScanBenchRow row;
        row.length = T;
        row.median_ms = times[times.size() / 2];
        if (!rows.empty() && rows.back().median_ms > 0) row.ratio = row.median_ms / rows.back().median_ms;
        rows.push_back(row);
        (void)sink;
    }
    return rows;
}

std::string scan_bench_csv(const std::vector<ScanBenchRow>& rows) {
    std::ostringstream os;
    os << "length,median_ms,ratio\n";
    for (const auto& r : rows) os << r.length << ',' << r.median_ms << ',' << r.ratio << '\n';
    return os.str();
}

}  // namespace rhythmorph
