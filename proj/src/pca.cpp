#include "rhythmorph/pca.hpp"

#include "rhythmorph/audit.hpp"
#include "rhythmorph/checkpoint.hpp"
#include "rhythmorph/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace rhythmorph {

namespace {

void fix_signs(Eigen::MatrixXd& components) {
    for (Eigen::Index j = 0; j < components.cols(); ++j) {
        Eigen::Index arg = 0;
        components.col(j).cwiseAbs().maxCoeff(&arg);
        if (components(arg, j) < 0.0) components.col(j) *= -1.0;
    }
}

// Replaces columns that could not be normalised (zero-variance directions)
// with unit vectors orthogonal to everything before them.
void complete_basis(Eigen::MatrixXd& v, const std::vector<bool>& valid) {
    const Eigen::Index d = v.rows();
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        if (valid[static_cast<std::size_t>(j)]) continue;
        double best = -1.0;
        Eigen::VectorXd pick;
        for (Eigen::Index i = 0; i < d; ++i) {
            Eigen::VectorXd e = Eigen::VectorXd::Unit(d, i);
            for (Eigen::Index k = 0; k < v.cols(); ++k) {
                if (k == j || (k > j && !valid[static_cast<std::size_t>(k)])) continue;
                e -= v.col(k).dot(e) * v.col(k);
            }
            const double n = e.norm();
            if (n > best) {
                best = n;
                pick = e / n;
            }
            if (n > 0.7) break;
        }
        v.col(j) = pick;
    }
}

}  // namespace

PcaProjection pca_fit(const Eigen::MatrixXd& x, Eigen::Index d_out, std::string fold_id) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d_in = x.cols();
    if (n < 2) throw DataError(DataErrc::precondition, "pca_fit needs at least 2 rows");
    if (d_out < 1 || d_out > std::min(n - 1, d_in)) {
        throw DataError(DataErrc::precondition, "pca_fit: d_out too large for n=" + std::to_string(n) +
                                                    ", D_in=" + std::to_string(d_in));
    }
    fit_counters().pca_fit++;

    PcaProjection p;
    p.fold_id = std::move(fold_id);
    p.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd xc = x.rowwise() - p.mean.transpose();
    const double total = xc.squaredNorm() / static_cast<double>(n - 1);
    if (!(total > 0.0)) throw DataError(DataErrc::precondition, "pca_fit: degenerate input (all rows identical)");

    Eigen::VectorXd eval;
    Eigen::MatrixXd v(d_in, d_out);
    std::vector<bool> valid(static_cast<std::size_t>(d_out), true);
    if (n - 1 < d_in) {
        // Dual form: eigenvectors of the n x n Gram matrix map to feature space.
        const Eigen::MatrixXd gram = (xc * xc.transpose()) / static_cast<double>(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        eval = es.eigenvalues().reverse();
        const Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
        for (Eigen::Index j = 0; j < d_out; ++j) {
            Eigen::VectorXd col = xc.transpose() * u.col(j);
            const double norm = col.norm();
            if (norm > 1e-10 * std::sqrt(total * static_cast<double>(n))) {
                v.col(j) = col / norm;
            } else {
                valid[static_cast<std::size_t>(j)] = false;
            }
        }
    } else {
        const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        eval = es.eigenvalues().reverse();
        v = es.eigenvectors().rowwise().reverse().leftCols(d_out);
    }
    complete_basis(v, valid);
    fix_signs(v);
    p.components = std::move(v);
    p.explained_variance = eval.head(d_out).cwiseMax(0.0);
    p.explained_variance_ratio = std::min(1.0, p.explained_variance.sum() / total);
    return p;
}

Eigen::VectorXd pca_apply(const Eigen::VectorXd& features, const PcaProjection& projection) {
    if (features.size() != projection.input_dim()) {
        throw DataError(DataErrc::shape_mismatch, "pca_apply: dimension mismatch");
    }
    return projection.components.transpose() * (features - projection.mean);
}

Eigen::MatrixXd pca_apply_rows(const Eigen::MatrixXd& features, const PcaProjection& projection) {
    if (features.cols() != projection.input_dim()) {
        throw DataError(DataErrc::shape_mismatch, "pca_apply: dimension mismatch");
    }
    return (features.rowwise() - projection.mean.transpose()) * projection.components;
}

void save_pca(const PcaProjection& projection, const std::filesystem::path& path) {
    Bundle b;
    b.meta = {{"kind", "pca"}};
    store_pca(b, "pca", projection);
    save_bundle(b, path);
}

PcaProjection load_pca(const std::filesystem::path& path) {
    return fetch_pca(load_bundle(path), "pca");
}

}  // namespace rhythmorph
