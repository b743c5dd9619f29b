#include "rhythmorph/ssm.hpp"

#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace rhythmorph {

double zoh_phi(double z) {
    if (std::abs(z) < kZohSeriesThreshold) return 1.0 + z / 2.0 + z * z / 6.0;
    return std::expm1(z) / z;
}

double zoh_phi_grad(double z) {
    if (std::abs(z) < kZohSeriesThreshold) return 0.5 + z / 3.0 + z * z / 8.0;
    return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

ZohStep zoh_discretize(double a, double b, double delta) {
    const double z = delta * a;
    return {std::exp(z), zoh_phi(z) * delta * b};
}

namespace {

void check_shapes(const Matrix& u, const ScanParams& p) {
    const Eigen::Index t = u.rows(), e = u.cols(), n = p.A.cols();
    if (p.A.rows() != e || p.delta.rows() != t || p.delta.cols() != e || p.B.rows() != t || p.B.cols() != n ||
        p.C.rows() != t || p.C.cols() != n) {
        throw DataError(DataErrc::shape_mismatch, "ssm_scan: inconsistent shapes");
    }
}

template <class F>
void parallel_for(Eigen::Index count, int threads, F&& body) {
    if (threads <= 1 || count <= 1) {
        for (Eigen::Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    const auto workers = std::min<Eigen::Index>(threads, count);
    for (Eigen::Index w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (Eigen::Index i = w; i < count; i += workers) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

Matrix ssm_scan(const Matrix& u, const ScanParams& p, ScanDirection direction, const ScanOptions& options,
                std::vector<double>* states) {
    check_shapes(u, p);
    const Eigen::Index T = u.rows(), E = u.cols(), N = p.A.cols();
    const Eigen::Index chunk = std::max<Eigen::Index>(1, options.chunk);
    const Eigen::Index n_chunks = (T + chunk - 1) / chunk;
    const auto step = [&](Eigen::Index s) { return direction == ScanDirection::forward ? s : T - 1 - s; };
    const auto EN = static_cast<std::size_t>(E * N);

    std::vector<double> local_buf;
    std::vector<double>& h = states ? *states : local_buf;
    h.assign(static_cast<std::size_t>(T) * EN, 0.0);
    std::vector<double> decay(static_cast<std::size_t>(T) * EN);
    std::vector<double> chunk_decay(static_cast<std::size_t>(n_chunks) * EN, 1.0);

    // Pass 1: local recurrence per block, in scan order, from a zero state.
    parallel_for(n_chunks, options.threads, [&](Eigen::Index c) {
        std::vector<double> state(EN, 0.0);
        double* prod = &chunk_decay[static_cast<std::size_t>(c) * EN];
        for (Eigen::Index s = c * chunk; s < std::min(T, (c + 1) * chunk); ++s) {
            const Eigen::Index t = step(s);
            double* hs = &h[static_cast<std::size_t>(t) * EN];
            double* dk = &decay[static_cast<std::size_t>(t) * EN];
            for (Eigen::Index e = 0; e < E; ++e) {
                const double dt = p.delta(t, e);
                const double x = u(t, e);
                for (Eigen::Index n = 0; n < N; ++n) {
                    const auto k = static_cast<std::size_t>(e * N + n);
                    const double z = dt * p.A(e, n);
                    const double a_bar = std::exp(z);
                    state[k] = a_bar * state[k] + zoh_phi(z) * dt * p.B(t, n) * x;
                    hs[k] = state[k];
                    dk[k] = a_bar;
                    prod[k] *= a_bar;
                }
            }
        }
    });

    // Pass 2: carries entering each block.
    std::vector<double> carry(static_cast<std::size_t>(n_chunks) * EN, 0.0);
    for (Eigen::Index c = 1; c < n_chunks; ++c) {
        const Eigen::Index last = step(std::min(T, c * chunk) - 1);
        const double* prev = &carry[static_cast<std::size_t>(c - 1) * EN];
        const double* prod = &chunk_decay[static_cast<std::size_t>(c - 1) * EN];
        const double* end = &h[static_cast<std::size_t>(last) * EN];
        double* cur = &carry[static_cast<std::size_t>(c) * EN];
        for (std::size_t k = 0; k < EN; ++k) cur[k] = prod[k] * prev[k] + end[k];
    }

    // Pass 3: fix-up and readout.
    Matrix y(T, E);
    bool finite = true;
    parallel_for(n_chunks, options.threads, [&](Eigen::Index c) {
        std::vector<double> running(carry.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * EN),
                                    carry.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c + 1) * EN));
        const bool has_carry = c > 0;
        for (Eigen::Index s = c * chunk; s < std::min(T, (c + 1) * chunk); ++s) {
            const Eigen::Index t = step(s);
            double* hs = &h[static_cast<std::size_t>(t) * EN];
            const double* dk = &decay[static_cast<std::size_t>(t) * EN];
            for (Eigen::Index e = 0; e < E; ++e) {
                double acc = 0.0;
                for (Eigen::Index n = 0; n < N; ++n) {
                    const auto k = static_cast<std::size_t>(e * N + n);
                    if (has_carry) {
                        running[k] *= dk[k];
                        hs[k] += running[k];
                    }
                    acc += p.C(t, n) * hs[k];
                }
                y(t, e) = acc;
            }
        }
    });
    for (double v : y.reshaped())
        if (!std::isfinite(v)) finite = false;
    if (!finite) throw NumericError("state overflow");
    return y;
}

ScanGrads ssm_scan_backward(const Matrix& u, const ScanParams& p, ScanDirection direction,
                            const std::vector<double>& states, const Matrix& dy) {
    check_shapes(u, p);
    const Eigen::Index T = u.rows(), E = u.cols(), N = p.A.cols();
    const auto EN = static_cast<std::size_t>(E * N);
    const auto step = [&](Eigen::Index s) { return direction == ScanDirection::forward ? s : T - 1 - s; };

    ScanGrads g{Matrix::Zero(T, E), Matrix::Zero(T, E), Matrix::Zero(T, N), Matrix::Zero(T, N), Matrix::Zero(E, N)};
    std::vector<double> adj(EN, 0.0);       // dL/dh_t accumulated from the future
    std::vector<double> next_decay(EN, 0.0);  // a_bar at the following scan step
    for (Eigen::Index s = T - 1; s >= 0; --s) {
        const Eigen::Index t = step(s);
        const double* hs = &states[static_cast<std::size_t>(t) * EN];
        const double* hp = s > 0 ? &states[static_cast<std::size_t>(step(s - 1)) * EN] : nullptr;
        for (Eigen::Index e = 0; e < E; ++e) {
            const double dt = p.delta(t, e);
            const double x = u(t, e);
            double ddt = 0.0, dx = 0.0;
            for (Eigen::Index n = 0; n < N; ++n) {
                const auto k = static_cast<std::size_t>(e * N + n);
                g.dC(t, n) += dy(t, e) * hs[k];
                const double gh = dy(t, e) * p.C(t, n) + next_decay[k] * adj[k];
                adj[k] = gh;
                const double z = dt * p.A(e, n);
                const double a_bar = std::exp(z);
                next_decay[k] = a_bar;
                const double phi = zoh_phi(z);
                const double prev = hp ? hp[k] : 0.0;
                // h = a_bar(z) * prev + phi(z) * dt * B * x
                const double dz = gh * (a_bar * prev + zoh_phi_grad(z) * dt * p.B(t, n) * x);
                ddt += dz * p.A(e, n) + gh * phi * p.B(t, n) * x;
                g.dA(e, n) += dz * dt;
                g.dB(t, n) += gh * phi * dt * x;
                dx += gh * phi * dt * p.B(t, n);
            }
            g.ddelta(t, e) = ddt;
            g.du(t, e) = dx;
        }
    }
    return g;
}

}  // namespace rhythmorph
