#include "rhythmorph/nn.hpp"

#include "rhythmorph/errors.hpp"

#include <limits>

namespace rhythmorph {

Param& ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols, bool decay) {
    if (find(name)) throw ConfigError("duplicate parameter name " + name);
    Param& p = params_.emplace_back();
    p.name = std::move(name);
    p.value = Matrix::Zero(rows, cols);
    p.grad = Matrix::Zero(rows, cols);
    p.decay = decay;
    return p;
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

Matrix sigmoid(const Matrix& x) {
    return x.unaryExpr([](double v) { return sigmoid(v); });
}

Matrix silu(const Matrix& x) {
    return x.unaryExpr([](double v) { return silu(v); });
}

Matrix rms_norm(const Matrix& x, const RowVector& gain, double eps, RmsNormCache* cache) {
    const auto d = static_cast<double>(x.cols());
    Vector inv = ((x.array().square().rowwise().sum() / d) + eps).rsqrt();
    Matrix y = (x.array().colwise() * inv.array()).rowwise() * gain.array();
    if (cache) {
        cache->x = x;
        cache->inv_rms = std::move(inv);
    }
    return y;
}

Matrix rms_norm_backward(const RmsNormCache& c, const RowVector& gain, const Matrix& dy, RowVector& dgain) {
    const auto d = static_cast<double>(c.x.cols());
    const Matrix xhat = c.x.array().colwise() * c.inv_rms.array();
    dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
    const Matrix g = dy.array().rowwise() * gain.array();
    const Vector dot = (g.array() * xhat.array()).rowwise().sum();
    Matrix dx = (g.array() - xhat.array().colwise() * (dot.array() / d)).colwise() * c.inv_rms.array();
    return dx;
}

Matrix softmax_rows(const Matrix& logits, const std::vector<bool>* mask) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < logits.cols(); ++j)
            if (!mask || (*mask)[static_cast<std::size_t>(j)]) mx = std::max(mx, logits(i, j));
        if (!std::isfinite(mx)) throw NumericError("softmax over an empty or non-finite row");
        double s = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            const bool on = !mask || (*mask)[static_cast<std::size_t>(j)];
            p(i, j) = on ? std::exp(logits(i, j) - mx) : 0.0;
            s += p(i, j);
        }
        p.row(i) /= s;
    }
    return p;
}

Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp) {
    const Vector dot = (p.array() * dp.array()).rowwise().sum();
    return p.array() * (dp.array().colwise() - dot.array());
}

Matrix flip_rows(const Matrix& x) {
    return x.colwise().reverse();
}

void init_uniform(Matrix& m, double a, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
}

}  // namespace rhythmorph
