#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

namespace rhythmorph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    bool decay = true;  // decoupled weight decay applies
};

// Owns parameters with stable addresses; layers hold raw pointers into it.
class ParamStore {
public:
    Param& add(std::string name, Eigen::Index rows, Eigen::Index cols, bool decay);
    std::deque<Param>& params() { return params_; }
    const std::deque<Param>& params() const { return params_; }
    Param* find(const std::string& name);
    void zero_grad();
    std::size_t scalar_count() const;

private:
    std::deque<Param> params_;
};

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

Matrix sigmoid(const Matrix& x);
Matrix silu(const Matrix& x);

// Row-wise RMS normalisation with a learnable gain.
struct RmsNormCache {
    Matrix x;
    Vector inv_rms;
};
Matrix rms_norm(const Matrix& x, const RowVector& gain, double eps, RmsNormCache* cache);
// Returns dx and accumulates into dgain.
Matrix rms_norm_backward(const RmsNormCache& cache, const RowVector& gain, const Matrix& dy, RowVector& dgain);

// Row-wise softmax; entries with mask false get zero weight.
Matrix softmax_rows(const Matrix& logits, const std::vector<bool>* mask = nullptr);
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs);

// Row reversal (time flip) of a [T x D] sequence.
Matrix flip_rows(const Matrix& x);

// Uniform(-a, a) initialisation.
void init_uniform(Matrix& m, double a, std::mt19937_64& rng);

}  // namespace rhythmorph
