#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "pertkit/attacks.hpp"
#include "test_support.hpp"

using pertkit::RandomStream;
namespace attacks = pertkit::attacks;
namespace classifier = pertkit::classifier;
using pertkit::testing::desk;

namespace {

// Two-class logistic model on one input: logits = (w0 x + b0, w1 x + b1).
classifier::MlpModel logistic_1d(double w0, double w1) {
    classifier::MlpModel model;
    Eigen::MatrixXd w(2, 1);
    w << w0, w1;
    model.layers.push_back({w, Eigen::VectorXd::Zero(2), classifier::Activation::identity});
    return model;
}

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("fgsm with epsilon zero returns the image") {
    const auto& f = desk();
    const Eigen::VectorXd x = f.test.images.row(0).transpose();
    const auto result = attacks::fgsm(f.model, x, f.test.labels[0], 0.0);
    CHECK((result.adversarial - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(result.success);
    CHECK(result.linf_distortion == 0.0);
}

TEST_CASE("fgsm respects the epsilon ball and the pixel range") {
    const auto& f = desk();
    for (int i = 0; i < 40; ++i) {
        const Eigen::VectorXd x = f.test.images.row(i).transpose();
        const auto result = attacks::fgsm(f.model, x, f.test.labels[static_cast<std::size_t>(i)], 0.1);
        CHECK((result.adversarial - x).cwiseAbs().maxCoeff() <= 0.1 + 1e-12);
        CHECK(result.adversarial.minCoeff() >= 0.0);
        CHECK(result.adversarial.maxCoeff() <= 1.0);
        CHECK(result.success == (result.adversarial_label != result.clean_label));
        const double l2 = (result.adversarial - x).norm();
        CHECK(std::abs(l2 - result.l2_distortion) < 1e-12);
    }
}

TEST_CASE("fgsm matches the hand-computed logistic step") {
    // Cross-entropy gradient w.r.t. x is p1 (w1 - w0) for label 0 and
    // p0 (w0 - w1) for label 1; only the sign of (w1 - w0) survives.
    const auto model = logistic_1d(1.5, -0.5);
    Eigen::VectorXd x(1);
    x << 0.5;
    const double eps = 0.125;

    auto res0 = attacks::fgsm(model, x, 0, eps);
    CHECK(res0.adversarial[0] == doctest::Approx(0.5 + eps * (-1.0)).epsilon(1e-15));  // sign(w1-w0) = -1
    auto res1 = attacks::fgsm(model, x, 1, eps);
    CHECK(res1.adversarial[0] == doctest::Approx(0.5 + eps * (+1.0)).epsilon(1e-15));
}

TEST_CASE("fgsm flags a vanishing gradient") {
    classifier::MlpModel model;
    model.layers.push_back({Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(3),
                            classifier::Activation::identity});
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.5);
    const auto result = attacks::fgsm(model, x, 0, 0.1);
    CHECK(result.degenerate_gradient);
    CHECK_FALSE(result.success);
    CHECK((result.adversarial - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bim with one full-size step equals fgsm bit for bit") {
    const auto& f = desk();
    attacks::AttackBudget budget;
    budget.epsilon = 0.1;
    budget.step_size = 0.1;
    budget.iterations = 1;
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd x = f.test.images.row(i).transpose();
        const int label = f.test.labels[static_cast<std::size_t>(i)];
        const auto one = attacks::fgsm(f.model, x, label, 0.1);
        const auto two = attacks::bim(f.model, x, label, budget);
        CHECK((one.adversarial - two.adversarial).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("bim stays inside the ball across iterations") {
    const auto& f = desk();
    attacks::AttackBudget budget;
    budget.epsilon = 0.08;
    budget.step_size = 0.02;
    budget.iterations = 12;
    for (int i = 0; i < 30; ++i) {
        const Eigen::VectorXd x = f.test.images.row(i).transpose();
        const auto result = attacks::bim(f.model, x, f.test.labels[static_cast<std::size_t>(i)], budget);
        CHECK((result.adversarial - x).cwiseAbs().maxCoeff() <= budget.epsilon + 1e-12);
        CHECK(result.adversarial.minCoeff() >= 0.0);
        CHECK(result.adversarial.maxCoeff() <= 1.0);
    }
}

TEST_CASE("iterative attacks dominate the one-step attack") {
    const auto& f = desk();
    attacks::AttackBudget budget;
    budget.epsilon = 0.1;
    budget.step_size = 0.02;
    budget.iterations = 10;
    int n = 0, fgsm_hits = 0, bim_hits = 0;
    for (int i = 0; i < f.test.size() && n < 200; ++i) {
        const Eigen::VectorXd x = f.test.images.row(i).transpose();
        const int label = f.test.labels[static_cast<std::size_t>(i)];
        if (classifier::predict(f.model, x) != label) continue;
        ++n;
        fgsm_hits += attacks::fgsm(f.model, x, label, budget.epsilon).success ? 1 : 0;
        bim_hits += attacks::bim(f.model, x, label, budget).success ? 1 : 0;
    }
    REQUIRE(n >= 100);
    CHECK(bim_hits >= fgsm_hits);
}

TEST_CASE("pgd without a random start is bim") {
    const auto& f = desk();
    attacks::AttackBudget budget;
    budget.epsilon = 0.1;
    budget.step_size = 0.025;
    budget.iterations = 6;
    RandomStream rng(5);
    for (int i = 0; i < 15; ++i) {
        const Eigen::VectorXd x = f.test.images.row(i).transpose();
        const int label = f.test.labels[static_cast<std::size_t>(i)];
        const auto plain = attacks::bim(f.model, x, label, budget);
        const auto proj = attacks::pgd(f.model, x, label, budget, false, rng);
        CHECK((plain.adversarial - proj.adversarial).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("pgd random start stays feasible and is seed-deterministic") {
    const auto& f = desk();
    attacks::AttackBudget budget;
    budget.epsilon = 0.15;
    budget.step_size = 0.05;
    budget.iterations = 4;
    const Eigen::VectorXd x = f.test.images.row(3).transpose();
    const int label = f.test.labels[3];

    RandomStream a(99), b(99);
    const auto first = attacks::pgd(f.model, x, label, budget, true, a);
    const auto second = attacks::pgd(f.model, x, label, budget, true, b);
    CHECK((first.adversarial - second.adversarial).cwiseAbs().maxCoeff() == 0.0);
    CHECK(first.success == second.success);
    CHECK((first.adversarial - x).cwiseAbs().maxCoeff() <= budget.epsilon + 1e-12);
    CHECK(first.adversarial.minCoeff() >= 0.0);
    CHECK(first.adversarial.maxCoeff() <= 1.0);
}

TEST_CASE("pgd success rate is monotone in iterations (statistical)") {
    const auto& f = desk();
    attacks::AttackBudget one;
    one.epsilon = 0.1;
    one.step_size = 0.1;
    one.iterations = 1;
    attacks::AttackBudget ten;
    ten.epsilon = 0.1;
    ten.step_size = 0.02;
    ten.iterations = 10;
    int n = 0, hits_one = 0, hits_ten = 0;
    RandomStream rng(17);
    for (int i = 0; i < f.test.size() && n < 200; ++i) {
        const Eigen::VectorXd x = f.test.images.row(i).transpose();
        const int label = f.test.labels[static_cast<std::size_t>(i)];
        if (classifier::predict(f.model, x) != label) continue;
        ++n;
        RandomStream rng_one = rng.fork();
        RandomStream rng_ten = rng_one;
        hits_one += attacks::pgd(f.model, x, label, one, true, rng_one).success ? 1 : 0;
        hits_ten += attacks::pgd(f.model, x, label, ten, true, rng_ten).success ? 1 : 0;
    }
    REQUIRE(n >= 100);
    // two-point noise allowance on the rate
    CHECK(100.0 * hits_ten / n >= 100.0 * hits_one / n - 2.0);
}

TEST_CASE("cw fails cleanly on a constant classifier") {
    classifier::MlpModel model;
    model.layers.push_back({Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(3),
                            classifier::Activation::identity});
    attacks::CwConfig config;
    config.rounds = 3;
    config.iterations = 20;
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.3);
    const auto result = attacks::cw_l2(model, x, 0, config);
    CHECK_FALSE(result.success);
    CHECK(result.l2_distortion == 0.0);
    CHECK((result.adversarial - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cw returns immediately when the margin is already nonpositive") {
    const auto model = logistic_1d(-2.0, 2.0);  // predicts class 1 for x > 0
    Eigen::VectorXd x(1);
    x << 0.8;
    attacks::CwConfig config;
    config.rounds = 8;
    config.iterations = 50;
    // Attacked label 0 is already losing: the first round at c_min finds the
    // zero-perturbation solution and the search stops there.
    const auto result = attacks::cw_l2(model, x, 0, config);
    CHECK(result.l2_distortion == 0.0);
    CHECK((result.adversarial - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cw finds smaller distortions than fgsm (statistical)") {
    const auto& f = desk();
    attacks::CwConfig config;
    config.rounds = 5;
    config.iterations = 60;
    config.learning_rate = 0.1;

    std::vector<double> cw_l2s, fgsm_l2s;
    int n = 0;
    for (int i = 0; i < f.test.size() && n < 60; ++i) {
        const Eigen::VectorXd x = f.test.images.row(i).transpose();
        const int label = f.test.labels[static_cast<std::size_t>(i)];
        if (classifier::predict(f.model, x) != label) continue;
        ++n;
        const auto cw = attacks::cw_l2(f.model, x, label, config);
        const auto gs = attacks::fgsm(f.model, x, label, 0.1);
        if (cw.success) cw_l2s.push_back(cw.l2_distortion);
        if (gs.success) fgsm_l2s.push_back(gs.l2_distortion);
    }
    REQUIRE(cw_l2s.size() >= 10);
    REQUIRE(fgsm_l2s.size() >= 10);
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    CHECK(median(cw_l2s) <= median(fgsm_l2s));
}

TEST_CASE("budget and config validation") {
    attacks::AttackBudget budget;
    budget.epsilon = 0.1;
    budget.step_size = 0.2;  // step > epsilon
    CHECK_THROWS_AS(budget.validate(), std::invalid_argument);
    budget.step_size = 0.05;
    budget.iterations = 0;
    CHECK_THROWS_AS(budget.validate(), std::invalid_argument);

    attacks::CwConfig cw;
    cw.c_min = -1.0;
    CHECK_THROWS_AS(cw.validate(), std::invalid_argument);
}

}  // TEST_SUITE
