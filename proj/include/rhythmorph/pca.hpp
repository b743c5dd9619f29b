#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>

namespace rhythmorph {

struct PcaProjection {
    Eigen::VectorXd mean;                // D_in
    Eigen::MatrixXd components;          // D_in x D_out, orthonormal columns
    Eigen::VectorXd explained_variance;  // D_out eigenvalues, descending
    double explained_variance_ratio = 0.0;
    std::string fold_id;

    Eigen::Index input_dim() const { return mean.size(); }
    Eigen::Index output_dim() const { return components.cols(); }
};

// Top principal directions of the mean-centred rows of `train_features`.
// Exact eigendecomposition (covariance or Gram form, whichever is smaller);
// each component's largest-magnitude entry is positive. No whitening.
PcaProjection pca_fit(const Eigen::MatrixXd& train_features, Eigen::Index d_out, std::string fold_id);

Eigen::VectorXd pca_apply(const Eigen::VectorXd& features, const PcaProjection& projection);
// Row-wise apply: [n x D_in] -> [n x D_out].
Eigen::MatrixXd pca_apply_rows(const Eigen::MatrixXd& features, const PcaProjection& projection);

void save_pca(const PcaProjection& projection, const std::filesystem::path& path);
PcaProjection load_pca(const std::filesystem::path& path);

}  // namespace rhythmorph
