#pragma once

#include "rhythmorph/nn.hpp"

#include <Eigen/Core>

#include <vector>

namespace rhythmorph {

struct ZohStep {
    double a_bar;  // exp(delta * a)
    double b_bar;  // ((exp(delta * a) - 1) / (delta * a)) * delta * b
};

// Below this |delta * a| the bracketed factor uses 1 + z/2 + z^2/6.
inline constexpr double kZohSeriesThreshold = 1e-4;

// (e^z - 1) / z and its derivative, with series branches near zero.
double zoh_phi(double z);
double zoh_phi_grad(double z);

ZohStep zoh_discretize(double a, double b, double delta);

enum class ScanDirection { forward, backward };

// Inputs of the selective diagonal scan over E channels and N states:
//   h_t[e,n] = exp(delta[t,e] A[e,n]) h_{t-1}[e,n] + phi(delta A) delta[t,e] B[t,n] u[t,e]
//   y[t,e]   = sum_n C[t,n] h_t[e,n]
// A backward scan runs the same recurrence from t = T-1 down to 0.
struct ScanParams {
    Matrix A;      // E x N, non-positive at init
    Matrix delta;  // T x E, positive
    Matrix B;      // T x N
    Matrix C;      // T x N
};

struct ScanOptions {
    Eigen::Index chunk = 64;  // two-level scan block length
    int threads = 1;
};

// Chunked two-level scan: local recurrences inside each block from a zero
// state, a sequential carry pass over block boundaries, then a fix-up that
// adds the propagated carry. If `states` is non-null it receives h as
// [T][E][N] in time order. Throws NumericError("state overflow") on a
// non-finite state.
Matrix ssm_scan(const Matrix& u, const ScanParams& params, ScanDirection direction,
                const ScanOptions& options = {}, std::vector<double>* states = nullptr);

struct ScanGrads {
    Matrix du, ddelta, dB, dC, dA;
};

ScanGrads ssm_scan_backward(const Matrix& u, const ScanParams& params, ScanDirection direction,
                            const std::vector<double>& states, const Matrix& dy);

}  // namespace rhythmorph
