"""Smoke tests for the compiled python module: a miniature end-to-end run
plus the headline invariants of each exposed operation."""

import numpy as np
import pytest

import pertkit


@pytest.fixture(scope="module")
def pipeline():
    images, labels = pertkit.synth_dataset(
        classes=3, per_class=120, height=6, width=6, separation=0.8, noise=0.18,
        seed=1, class_seed=9,
    )
    test_images, test_labels = pertkit.synth_dataset(
        classes=3, per_class=40, height=6, width=6, separation=0.8, noise=0.18,
        seed=2, class_seed=9,
    )
    model, accuracy, _ = pertkit.train_mlp(
        images, labels, num_classes=3, hidden=24, epochs=20, learning_rate=0.1, seed=7
    )
    basis = pertkit.fit_pca(images)
    return {
        "train": (np.asarray(images), list(labels)),
        "test": (np.asarray(test_images), list(test_labels)),
        "model": model,
        "accuracy": accuracy,
        "basis": basis,
    }


def test_training_learns(pipeline):
    assert pipeline["accuracy"] >= 0.9


def test_basis_invariants(pipeline):
    basis = pipeline["basis"]
    components = np.asarray(basis.components)
    gram = components @ components.T
    assert np.abs(gram - np.eye(basis.dim)).max() < 1e-9
    eigenvalues = np.asarray(basis.eigenvalues).ravel()
    assert (np.diff(eigenvalues) <= 1e-12).all()
    assert (eigenvalues >= 0).all()

    cumulative, degenerate = pertkit.explained_variance(basis)
    assert not degenerate
    assert cumulative[-1] == pytest.approx(1.0, abs=1e-12)


def test_round_trip(pipeline):
    basis = pipeline["basis"]
    x = pipeline["test"][0][0]
    coeffs = pertkit.project(x, basis)
    back = pertkit.reconstruct(coeffs, basis)
    assert np.abs(np.asarray(back).ravel() - x).max() < 1e-9


def test_perturbation_locality(pipeline):
    basis = pipeline["basis"]
    coeffs = np.asarray(pertkit.project(pipeline["test"][0][0], basis)).ravel()
    out = np.asarray(
        pertkit.perturb_least_significant(coeffs, count=4, sigma=0.3, seed=11)
    ).ravel()
    assert (out[:-4] == coeffs[:-4]).all()
    assert (out[-4:] != coeffs[-4:]).any()


def test_beliefs_normalized(pipeline):
    model = pipeline["model"]
    x = pipeline["test"][0][0]
    probs = np.asarray(pertkit.forward(model, x)).ravel()
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert pertkit.predict(model, x) == int(probs.argmax())


def test_gradient_matches_finite_differences(pipeline):
    model = pipeline["model"]
    x = pipeline["test"][0][0].copy()
    label = pipeline["test"][1][0]
    grad = np.asarray(pertkit.loss_gradient(model, x, label)).ravel()
    h = 1e-5
    for i in range(0, x.size, 7):
        hi, lo = x.copy(), x.copy()
        hi[i] += h
        lo[i] -= h
        f_hi = -np.log(np.asarray(pertkit.forward(model, hi)).ravel()[label])
        f_lo = -np.log(np.asarray(pertkit.forward(model, lo)).ravel()[label])
        numeric = (f_hi - f_lo) / (2 * h)
        if abs(grad[i]) > 1e-6:
            assert abs(numeric - grad[i]) / abs(grad[i]) < 1e-4


def test_attacks_stay_in_the_ball(pipeline):
    model = pipeline["model"]
    images, labels = pipeline["test"]
    hits = 0
    for i in range(30):
        result = pertkit.fgsm(model, images[i], labels[i], 0.1)
        delta = np.abs(np.asarray(result.adversarial).ravel() - images[i])
        assert delta.max() <= 0.1 + 1e-12
        hits += result.success
    pgd = pertkit.pgd(model, images[0], labels[0], epsilon=0.1, step_size=0.02,
                      iterations=10, random_start=True, seed=3)
    assert np.asarray(pgd.adversarial).min() >= 0.0
    assert np.asarray(pgd.adversarial).max() <= 1.0


def test_detectors_and_schedule(pipeline):
    model, basis = pipeline["model"], pipeline["basis"]
    images, labels = pipeline["test"]

    outcome = pertkit.pert_detect(model, basis, images[0], max_samples=8,
                                  coeff_count=18, sigma=0.4, seed=5)
    assert outcome.samples_used <= 8
    assert len(outcome.q_trace) == outcome.samples_used

    seq = pertkit.srt(model, basis, images[0], lower=0.01, upper=5.0, max_samples=8,
                      coeff_count=18, sigma=0.4, category_switch=True, seed=5)
    assert seq.stop_reason in {"category_change", "below_A", "above_B", "budget_exhausted"}

    assert pertkit.validate_schedule() == []
    violations = pertkit.validate_schedule(exp_delta=0.5)
    assert any("sum_a_sq_over_delta_sq" in v for v in violations)


def test_apert_training_runs(pipeline):
    model, basis = pipeline["model"], pipeline["basis"]
    images, labels = pipeline["test"]
    adversarial = []
    for i in range(len(labels)):
        if pertkit.predict(model, images[i]) != labels[i]:
            continue
        result = pertkit.fgsm(model, images[i], labels[i], 0.1)
        if result.success:
            adversarial.append(np.asarray(result.adversarial).ravel())
        if len(adversarial) >= 20:
            break
    assert len(adversarial) >= 5

    config = pertkit.ApertConfig()
    config.coeff_count = 18
    config.max_samples = 10
    config.sigma = 0.4
    config.n_max = 100
    learned = pertkit.train_apert(model, basis, pipeline["train"][0],
                                  np.vstack(adversarial), config, seed=3)
    assert learned["A"] < learned["B"]
    assert learned["trace_length"] == 100

    outcome = pertkit.apert_test(model, basis, images[0], learned["A"], learned["B"],
                                 config, seed=4)
    assert outcome.samples_used <= 10


def test_q_statistic_bounds():
    y = np.array([1.0, 0.0, 0.0, 0.0])
    z = np.array([0.0, 1.0, 0.0, 0.0])
    assert pertkit.q_statistic(y, z, norm_order=1.0) == pytest.approx(0.5)
    assert pertkit.q_statistic(y, y) == pytest.approx(1e-6)


def test_model_io_round_trip(tmp_path, pipeline):
    path = str(tmp_path / "model.pmlp")
    pertkit.save_model(pipeline["model"], path)
    loaded = pertkit.load_model(path)
    x = pipeline["test"][0][0]
    assert pertkit.predict(loaded, x) == pertkit.predict(pipeline["model"], x)
    assert np.allclose(
        np.asarray(pertkit.forward(loaded, x)), np.asarray(pertkit.forward(pipeline["model"], x))
    )

    basis_path = str(tmp_path / "basis.psb")
    pertkit.save_basis(pipeline["basis"], basis_path)
    loaded_basis = pertkit.load_basis(basis_path)
    assert np.array_equal(np.asarray(loaded_basis.mean), np.asarray(pipeline["basis"].mean))
