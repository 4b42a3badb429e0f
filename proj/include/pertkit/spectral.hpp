#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pertkit/rng.hpp"

namespace pertkit::spectral {

// Orthonormal basis fitted from clean images, most significant component
// first. Immutable after construction; safe to share across threads.
struct SpectralBasis {
    Eigen::MatrixXd components;   // row i = Phi_i
    Eigen::VectorXd eigenvalues;  // nonincreasing, clamped at 0
    Eigen::VectorXd mean;

    int dim() const { return static_cast<int>(mean.size()); }
};

// Fits the basis from row-per-image data. Requires >= 2 rows, >= 2 columns,
// finite entries. Eigenvalues are sample variances (1/(n-1) normalization)
// of the projections along each component.
SpectralBasis fit_pca(const Eigen::MatrixXd& images);

// Coefficients of x in the basis: c_i = <x - mean, Phi_i>.
Eigen::VectorXd project(const Eigen::VectorXd& image, const SpectralBasis& basis);

// Inverse transform: mean + sum_i c_i Phi_i. Pixel values are not clipped.
Eigen::VectorXd reconstruct(const Eigen::VectorXd& coeffs, const SpectralBasis& basis);

// Adds independent N(0, sigma^2) draws to the `count` least significant
// coefficients; the leading M-count coefficients are untouched.
Eigen::VectorXd perturb_least_significant(const Eigen::VectorXd& coeffs, int count, double sigma,
                                          RandomStream& rng);

struct ExplainedVariance {
    std::vector<double> cumulative;
    bool degenerate = false;  // all eigenvalues zero
};

ExplainedVariance explained_variance(const SpectralBasis& basis);

// Max absolute deviation of components * components^T from identity.
double orthonormality_error(const SpectralBasis& basis);

// Binary basis file, magic "PSB1". Loader validates magic, sizes and
// orthonormality (hard failure above 1e-6; stderr warning above 1e-9).
void save_basis(const SpectralBasis& basis, const std::string& path);
SpectralBasis load_basis(const std::string& path);

}  // namespace pertkit::spectral
