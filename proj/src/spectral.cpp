#include "pertkit/spectral.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "pertkit/binio.hpp"

namespace pertkit::spectral {

namespace {

// Reproducible sign convention: the largest-magnitude entry of each
// component is positive (first such entry on magnitude ties).
void fix_signs(Eigen::MatrixXd& components) {
    for (Eigen::Index i = 0; i < components.rows(); ++i) {
        Eigen::Index pivot = 0;
        components.row(i).cwiseAbs().maxCoeff(&pivot);
        if (components(i, pivot) < 0.0) components.row(i) *= -1.0;
    }
}

void clamp_eigenvalues(Eigen::VectorXd& values) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] < -1e-9) {
            throw std::runtime_error("PCA produced a significantly negative eigenvalue: " +
                                     std::to_string(values[i]));
        }
        if (values[i] < 0.0) values[i] = 0.0;
    }
}

}  // namespace

SpectralBasis fit_pca(const Eigen::MatrixXd& images) {
    const Eigen::Index n = images.rows();
    const Eigen::Index m = images.cols();
    if (n < 2) throw std::invalid_argument("fit_pca requires at least 2 images");
    if (m < 2) throw std::invalid_argument("fit_pca requires dimension >= 2");
    if (!images.allFinite()) throw std::invalid_argument("fit_pca input contains non-finite values");

    SpectralBasis basis;
    basis.mean = images.colwise().mean();
    Eigen::MatrixXd centered = images.rowwise() - basis.mean.transpose();

    if (n >= m) {
        // SVD of the centered data matrix; singular values squared over n-1
        // are the covariance eigenvalues.
        Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);
        Eigen::VectorXd singular = svd.singularValues();
        basis.eigenvalues = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < singular.size() && i < m; ++i) {
            basis.eigenvalues[i] = singular[i] * singular[i] / static_cast<double>(n - 1);
        }
        basis.components = svd.matrixV().transpose();
    } else {
        // Fewer samples than dimensions: eigendecomposition of the m x m
        // sample covariance (rank-deficient tail comes out as zeros).
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        if (eig.info() != Eigen::Success) throw std::runtime_error("covariance eigendecomposition failed");
        // SelfAdjointEigenSolver sorts ascending; flip to most significant first.
        basis.eigenvalues = eig.eigenvalues().reverse();
        basis.components = eig.eigenvectors().rowwise().reverse().transpose();
    }

    clamp_eigenvalues(basis.eigenvalues);
    fix_signs(basis.components);
    return basis;
}

Eigen::VectorXd project(const Eigen::VectorXd& image, const SpectralBasis& basis) {
    if (image.size() != basis.dim()) {
        throw std::invalid_argument("project: image dimension " + std::to_string(image.size()) +
                                    " does not match basis dimension " + std::to_string(basis.dim()));
    }
    return basis.components * (image - basis.mean);
}

Eigen::VectorXd reconstruct(const Eigen::VectorXd& coeffs, const SpectralBasis& basis) {
    if (coeffs.size() != basis.dim()) {
        throw std::invalid_argument("reconstruct: coefficient dimension " + std::to_string(coeffs.size()) +
                                    " does not match basis dimension " + std::to_string(basis.dim()));
    }
    return basis.mean + basis.components.transpose() * coeffs;
}

Eigen::VectorXd perturb_least_significant(const Eigen::VectorXd& coeffs, int count, double sigma,
                                          RandomStream& rng) {
    const int m = static_cast<int>(coeffs.size());
    if (count < 1 || count > m) {
        throw std::invalid_argument("perturb_least_significant: count " + std::to_string(count) +
                                    " out of range [1, " + std::to_string(m) + "]");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("perturb_least_significant: sigma must be finite and positive");
    }
    Eigen::VectorXd out = coeffs;
    for (int i = m - count; i < m; ++i) out[i] += sigma * rng.normal();
    return out;
}

ExplainedVariance explained_variance(const SpectralBasis& basis) {
    ExplainedVariance result;
    const double total = basis.eigenvalues.sum();
    result.cumulative.resize(static_cast<std::size_t>(basis.eigenvalues.size()), 0.0);
    if (total <= 0.0) {
        result.degenerate = true;
        return result;
    }
    double running = 0.0;
    for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) {
        running += basis.eigenvalues[i];
        result.cumulative[static_cast<std::size_t>(i)] = running / total;
    }
    return result;
}

double orthonormality_error(const SpectralBasis& basis) {
    const Eigen::Index m = basis.components.rows();
    Eigen::MatrixXd gram = basis.components * basis.components.transpose();
    return (gram - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
}

void save_basis(const SpectralBasis& basis, const std::string& path) {
    auto out = binio::open_out(path);
    binio::write_magic(out, "PSB1");
    const int m = basis.dim();
    binio::write_u32(out, static_cast<std::uint32_t>(m));
    for (int i = 0; i < m; ++i) binio::write_f64(out, basis.mean[i]);
    for (int i = 0; i < m; ++i) binio::write_f64(out, basis.eigenvalues[i]);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) binio::write_f64(out, basis.components(i, j));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

SpectralBasis load_basis(const std::string& path) {
    auto in = binio::open_in(path);
    binio::expect_magic(in, "PSB1", "basis");
    const auto m = binio::read_u32(in, "basis dimension");
    if (m < 2) throw std::runtime_error("basis file has dimension < 2");
    SpectralBasis basis;
    basis.mean.resize(m);
    basis.eigenvalues.resize(m);
    basis.components.resize(m, m);
    for (std::uint32_t i = 0; i < m; ++i) basis.mean[i] = binio::read_f64(in, "basis mean");
    for (std::uint32_t i = 0; i < m; ++i) basis.eigenvalues[i] = binio::read_f64(in, "basis eigenvalues");
    for (std::uint32_t i = 0; i < m; ++i) {
        for (std::uint32_t j = 0; j < m; ++j) basis.components(i, j) = binio::read_f64(in, "basis vectors");
    }
    binio::expect_eof(in, "basis file");

    const double err = orthonormality_error(basis);
    if (err > 1e-6) {
        throw std::runtime_error("basis file failed orthonormality check (error " + std::to_string(err) + ")");
    }
    if (err > 1e-9) {
        std::cerr << "warning: basis orthonormality error " << err << " exceeds 1e-9\n";
    }
    return basis;
}

}  // namespace pertkit::spectral
