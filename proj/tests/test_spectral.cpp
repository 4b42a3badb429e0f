#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pertkit/spectral.hpp"
#include "test_support.hpp"

using pertkit::RandomStream;
namespace spectral = pertkit::spectral;

namespace {

Eigen::MatrixXd uniform_matrix(int n, int m, std::uint64_t seed) {
    RandomStream rng(seed);
    Eigen::MatrixXd data(n, m);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < m; ++c) data(r, c) = rng.uniform();
    }
    return data;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("all variance on one axis") {
    Eigen::MatrixXd data(100, 2);
    RandomStream rng(7);
    for (int i = 0; i < 100; ++i) {
        data(i, 0) = rng.uniform(-3.0, 3.0);
        data(i, 1) = 0.0;
    }
    const auto basis = spectral::fit_pca(data);
    CHECK(std::abs(std::abs(basis.components(0, 0)) - 1.0) < 1e-12);
    CHECK(std::abs(basis.components(0, 1)) < 1e-12);
    CHECK(std::abs(basis.eigenvalues[1]) < 1e-12);
    CHECK(basis.components(0, 0) > 0.0);  // sign convention
}

TEST_CASE("three points match the closed-form 2x2 eigendecomposition") {
    Eigen::MatrixXd data(3, 2);
    data << 0, 0, 1, 0, 0, 2;
    // Sample covariance [[1/3, -1/3], [-1/3, 4/3]]; closed-form eigenvalues
    // (trace +- sqrt(trace^2 - 4 det)) / 2 computed independently here.
    const double trace = 1.0 / 3.0 + 4.0 / 3.0;
    const double det = (1.0 / 3.0) * (4.0 / 3.0) - (1.0 / 3.0) * (1.0 / 3.0);
    const double disc = std::sqrt(trace * trace - 4.0 * det);
    const double expected_top = 0.5 * (trace + disc);
    const double expected_bottom = 0.5 * (trace - disc);

    const auto basis = spectral::fit_pca(data);
    CHECK(basis.eigenvalues[0] == doctest::Approx(expected_top).epsilon(1e-12));
    CHECK(basis.eigenvalues[1] == doctest::Approx(expected_bottom).epsilon(1e-12));

    // Eigenvalues equal the sample variance of the projections.
    for (int k = 0; k < 2; ++k) {
        double mean = 0.0, var = 0.0;
        Eigen::VectorXd proj(3);
        for (int i = 0; i < 3; ++i) {
            proj[i] = spectral::project(data.row(i).transpose(), basis)[k];
            mean += proj[i];
        }
        mean /= 3.0;
        for (int i = 0; i < 3; ++i) var += (proj[i] - mean) * (proj[i] - mean);
        var /= 2.0;
        CHECK(var == doctest::Approx(basis.eigenvalues[k]).epsilon(1e-10));
    }
}

TEST_CASE("orthonormality, round trip and isometry on random data") {
    const auto data = uniform_matrix(40, 12, 11);
    const auto basis = spectral::fit_pca(data);
    CHECK(spectral::orthonormality_error(basis) < 1e-9);

    RandomStream rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd x(12), y(12);
        for (int i = 0; i < 12; ++i) {
            x[i] = rng.uniform(-2.0, 2.0);
            y[i] = rng.uniform(-2.0, 2.0);
        }
        const Eigen::VectorXd back = spectral::reconstruct(spectral::project(x, basis), basis);
        CHECK((back - x).cwiseAbs().maxCoeff() < 1e-9);
        const double coeff_dist = (spectral::project(x, basis) - spectral::project(y, basis)).norm();
        CHECK(coeff_dist == doctest::Approx((x - y).norm()).epsilon(1e-9));
    }
}

TEST_CASE("eigenvalues match projection variances on the tall-data path") {
    const auto data = uniform_matrix(200, 6, 17);
    const auto basis = spectral::fit_pca(data);
    for (int k = 0; k < 6; ++k) {
        double mean = 0.0;
        std::vector<double> proj(200);
        for (int i = 0; i < 200; ++i) {
            proj[static_cast<std::size_t>(i)] = spectral::project(data.row(i).transpose(), basis)[k];
            mean += proj[static_cast<std::size_t>(i)];
        }
        mean /= 200.0;
        double var = 0.0;
        for (double v : proj) var += (v - mean) * (v - mean);
        var /= 199.0;
        if (basis.eigenvalues[k] > 1e-12) {
            CHECK(std::abs(var - basis.eigenvalues[k]) / basis.eigenvalues[k] < 1e-8);
        }
    }
}

TEST_CASE("wide data falls back to the covariance eigensolver") {
    const auto data = uniform_matrix(4, 9, 23);  // fewer samples than dimensions
    const auto basis = spectral::fit_pca(data);
    CHECK(spectral::orthonormality_error(basis) < 1e-9);
    // Rank is at most n-1; the tail eigenvalues must be (numerically) zero.
    for (int k = 3; k < 9; ++k) CHECK(std::abs(basis.eigenvalues[k]) < 1e-10);
    RandomStream rng(3);
    Eigen::VectorXd x(9);
    for (int i = 0; i < 9; ++i) x[i] = rng.uniform();
    const Eigen::VectorXd back = spectral::reconstruct(spectral::project(x, basis), basis);
    CHECK((back - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("projection centering and unit responses") {
    const auto data = uniform_matrix(30, 8, 5);
    const auto basis = spectral::fit_pca(data);

    const Eigen::VectorXd at_mean = spectral::project(basis.mean, basis);
    CHECK(at_mean.cwiseAbs().maxCoeff() < 1e-12);

    const Eigen::VectorXd shifted = basis.mean + basis.components.row(0).transpose();
    const Eigen::VectorXd coeffs = spectral::project(shifted, basis);
    CHECK(coeffs[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 1; i < 8; ++i) CHECK(std::abs(coeffs[i]) < 1e-10);

    CHECK((spectral::reconstruct(Eigen::VectorXd::Zero(8), basis) - basis.mean).cwiseAbs().maxCoeff() == 0.0);
    Eigen::VectorXd last = Eigen::VectorXd::Zero(8);
    last[7] = 1.0;
    const Eigen::VectorXd image = spectral::reconstruct(last, basis);
    CHECK((image - basis.mean - basis.components.row(7).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("perturbation only touches the trailing coefficients") {
    const auto data = uniform_matrix(30, 10, 29);
    const auto basis = spectral::fit_pca(data);
    Eigen::VectorXd coeffs(10);
    for (int i = 0; i < 10; ++i) coeffs[i] = i * 0.25 - 1.0;

    SUBCASE("degenerate noise") {
        RandomStream rng(1);
        const auto out = spectral::perturb_least_significant(coeffs, 10, 1e-300, rng);
        CHECK((out - coeffs).cwiseAbs().maxCoeff() < 1e-290);
    }
    SUBCASE("count = 1 touches only the last") {
        RandomStream rng(1);
        const auto out = spectral::perturb_least_significant(coeffs, 1, 0.5, rng);
        for (int i = 0; i < 9; ++i) CHECK(out[i] == coeffs[i]);
        CHECK(out[9] != coeffs[9]);
    }
    SUBCASE("locality is bit-for-bit") {
        RandomStream rng(40);
        const auto out = spectral::perturb_least_significant(coeffs, 4, 2.0, rng);
        for (int i = 0; i < 6; ++i) CHECK(out[i] == coeffs[i]);
    }
    SUBCASE("deterministic given the seed") {
        RandomStream a(99), b(99);
        const auto out_a = spectral::perturb_least_significant(coeffs, 5, 0.3, a);
        const auto out_b = spectral::perturb_least_significant(coeffs, 5, 0.3, b);
        CHECK((out_a - out_b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("monte carlo check of the perturbation scale") {
    // 1e5 draws with count = dim; empirical std within 2% of sigma.
    const double sigma = 0.7;
    const int dim = 4;
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(dim);
    RandomStream rng(424242);
    double sum = 0.0, sum_sq = 0.0;
    long n = 0;
    for (int rep = 0; rep < 25000; ++rep) {
        const auto out = spectral::perturb_least_significant(coeffs, dim, sigma, rng);
        for (int i = 0; i < dim; ++i) {
            sum += out[i];
            sum_sq += out[i] * out[i];
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    const double stddev = std::sqrt(sum_sq / static_cast<double>(n) - mean * mean);
    CHECK(std::abs(stddev - sigma) / sigma < 0.02);
}

TEST_CASE("explained variance arithmetic") {
    spectral::SpectralBasis basis;
    basis.mean = Eigen::VectorXd::Zero(3);
    basis.components = Eigen::MatrixXd::Identity(3, 3);

    basis.eigenvalues = Eigen::Vector3d(2.0, 1.0, 1.0);
    auto ev = spectral::explained_variance(basis);
    CHECK(ev.cumulative[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ev.cumulative[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(ev.cumulative[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(ev.degenerate);

    basis.eigenvalues = Eigen::Vector3d(5.0, 0.0, 0.0);
    ev = spectral::explained_variance(basis);
    for (double v : ev.cumulative) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    basis.mean = Eigen::VectorXd::Zero(4);
    basis.components = Eigen::MatrixXd::Identity(4, 4);
    basis.eigenvalues = Eigen::Vector4d::Ones();
    ev = spectral::explained_variance(basis);
    for (int i = 0; i < 4; ++i) CHECK(ev.cumulative[static_cast<std::size_t>(i)] ==
                                      doctest::Approx(0.25 * (i + 1)).epsilon(1e-12));

    basis.eigenvalues = Eigen::Vector4d::Zero();
    ev = spectral::explained_variance(basis);
    CHECK(ev.degenerate);
    for (double v : ev.cumulative) CHECK(v == 0.0);
}

TEST_CASE("desk corpus variance concentrates in the leading components") {
    const auto& f = pertkit::testing::desk();
    const auto ev = spectral::explained_variance(f.basis);
    REQUIRE_FALSE(ev.degenerate);
    const std::size_t m = ev.cumulative.size();
    // concave shape: sorted eigenvalues make the increments nonincreasing
    for (std::size_t i = 1; i < m; ++i) {
        const double previous = i == 1 ? ev.cumulative[0] : ev.cumulative[i - 1] - ev.cumulative[i - 2];
        CHECK(ev.cumulative[i] - ev.cumulative[i - 1] <= previous + 1e-12);
    }
    // concentration: the first quarter of the components carries well more
    // than a quarter of the variance
    CHECK(ev.cumulative[m / 4 - 1] > 1.5 * 0.25);
    CHECK(ev.cumulative[m - 1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("basis file round trip and validation") {
    const auto data = uniform_matrix(25, 7, 31);
    const auto basis = spectral::fit_pca(data);
    const auto path = temp_file("pertkit_test_basis.psb");
    spectral::save_basis(basis, path.string());

    const auto loaded = spectral::load_basis(path.string());
    CHECK((loaded.mean - basis.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.eigenvalues - basis.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.components - basis.components).cwiseAbs().maxCoeff() == 0.0);

    SUBCASE("bad magic") {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE" << std::string(64, '\0');
        out.close();
        CHECK_THROWS(spectral::load_basis(path.string()));
    }
    SUBCASE("truncated") {
        std::error_code ec;
        std::filesystem::resize_file(path, 40, ec);
        CHECK_THROWS(spectral::load_basis(path.string()));
    }
    SUBCASE("orthonormality failure detected") {
        auto broken = basis;
        broken.components(0, 0) += 0.01;
        spectral::save_basis(broken, path.string());
        CHECK_THROWS(spectral::load_basis(path.string()));
    }
    std::filesystem::remove(path);
}

TEST_CASE("precondition failures") {
    CHECK_THROWS_AS(spectral::fit_pca(Eigen::MatrixXd::Zero(1, 4)), std::invalid_argument);
    CHECK_THROWS_AS(spectral::fit_pca(Eigen::MatrixXd::Zero(5, 1)), std::invalid_argument);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 3);
    bad(1, 1) = std::nan("");
    CHECK_THROWS_AS(spectral::fit_pca(bad), std::invalid_argument);

    const auto basis = spectral::fit_pca(uniform_matrix(10, 4, 3));
    CHECK_THROWS_AS(spectral::project(Eigen::VectorXd::Zero(5), basis), std::invalid_argument);
    CHECK_THROWS_AS(spectral::reconstruct(Eigen::VectorXd::Zero(5), basis), std::invalid_argument);
    RandomStream rng(1);
    CHECK_THROWS_AS(spectral::perturb_least_significant(Eigen::VectorXd::Zero(4), 0, 1.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(spectral::perturb_least_significant(Eigen::VectorXd::Zero(4), 5, 1.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(spectral::perturb_least_significant(Eigen::VectorXd::Zero(4), 2, 0.0, rng),
                    std::invalid_argument);
}

}  // TEST_SUITE
