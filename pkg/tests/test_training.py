import warnings

import numpy as np
import pytest

from vqda.ansatz import build_model
from vqda.circuit import make_rng
from vqda.data import DomainDataset, SyntheticDomainSpec, gen_synthetic
from vqda.qstate import DomainError
from vqda.training import (
    GradientReversal,
    TrainConfig,
    batch_grads,
    combine,
    cross_entropy_from_expectations,
    evaluate,
    lambda_schedule,
    predict,
    steps_per_epoch,
    train,
    vqda_objective,
)

MODEL = build_model("toy-4q")


@pytest.fixture(scope="module")
def synth():
    return gen_synthetic(SyntheticDomainSpec(n_source=48, n_target=48, n_target_test=40))


# lambda schedule


def test_lambda_values():
    assert lambda_schedule(0.0) == 0.0
    assert lambda_schedule(1.0) == pytest.approx(0.9999092, abs=1e-7)
    assert lambda_schedule(0.1) == pytest.approx(0.4621172, abs=1e-7)


def test_lambda_clamps_with_warning():
    with pytest.warns(UserWarning):
        assert lambda_schedule(1.5) == lambda_schedule(1.0)
    with pytest.warns(UserWarning):
        assert lambda_schedule(-0.2) == 0.0


def test_lambda_monotone():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        vals = [lambda_schedule(p) for p in np.linspace(0, 1, 101)]
    assert np.all(np.diff(vals) > 0)
    assert all(0 <= v < 1 for v in vals)


# loss


def test_cross_entropy_examples():
    loss, _ = cross_entropy_from_expectations([1.0, -1.0], 0)
    assert loss == pytest.approx(0.126928, abs=1e-6)
    loss, _ = cross_entropy_from_expectations([0.3, 0.3], 1)
    assert loss == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_gradient(rng):
    for _ in range(20):
        e = rng.uniform(-1, 1, 3)
        y = int(rng.integers(3))
        _, g = cross_entropy_from_expectations(e, y)
        h = 1e-6
        fd = [
            (cross_entropy_from_expectations(e + h * d, y)[0] - cross_entropy_from_expectations(e - h * d, y)[0]) / (2 * h)
            for d in np.eye(3)
        ]
        assert np.max(np.abs(g - fd)) < 1e-8


def test_cross_entropy_batch_and_bad_label():
    e = np.array([[1.0, -1.0], [0.0, 0.5]])
    loss, g = cross_entropy_from_expectations(e, [0, 1])
    assert loss.shape == (2,) and g.shape == (2, 2)
    assert loss[0] == pytest.approx(cross_entropy_from_expectations(e[0], 0)[0])
    with pytest.raises(DomainError):
        cross_entropy_from_expectations([0.1, 0.2], 2)


# objective and reversal


def test_objective_reduces_to_label_loss(synth, rng):
    params = rng.uniform(0, 2 * np.pi, MODEL.n_params)
    s, t = synth["source"], synth["target"]
    full = vqda_objective((s.samples[:8], s.labels[:8]), t.samples[:8], MODEL, params, 0.0)
    g = batch_grads(MODEL, params, s.samples[:8], s.labels[:8], 0, True, False)
    assert full == pytest.approx(g.label_loss, abs=1e-12)


def test_objective_sign(synth, rng):
    params = rng.uniform(0, 2 * np.pi, MODEL.n_params)
    s, t = synth["source"], synth["target"]
    bs, bt = (s.samples[:8], s.labels[:8]), t.samples[:8]
    l0 = vqda_objective(bs, bt, MODEL, params, 0.0)
    l1 = vqda_objective(bs, bt, MODEL, params, 0.5)
    # domain losses are positive, so raising lambda lowers the objective
    assert l1 < l0
    with pytest.raises(DomainError):
        vqda_objective((s.samples[:0], s.labels[:0]), bt, MODEL, params, 0.5)


def test_gradient_reversal_layer():
    grl = GradientReversal(0.3)
    x = np.array([1.0, -2.0])
    assert grl.forward(x) is x
    assert np.allclose(grl.backward(x), [-0.3, 0.6])


def test_combined_update_sign(synth, rng):
    # theta_cp and theta_QFC1 descend the objective, theta_QFC2 ascends it
    params = rng.uniform(0, 2 * np.pi, MODEL.n_params)
    s, t = synth["source"], synth["target"]
    xs, ys, xt = s.samples[:6], s.labels[:6], t.samples[:6]
    lam = 0.37
    g = combine(
        batch_grads(MODEL, params, xs, ys, 0, True, True),
        batch_grads(MODEL, params, xt, None, 1, False, True),
        lam,
        MODEL,
    )
    h = 1e-6
    fd = np.zeros(MODEL.n_params)
    for k in range(MODEL.n_params):
        p = params.copy()
        p[k] += h
        up = vqda_objective((xs, ys), xt, MODEL, p, lam)
        p[k] -= 2 * h
        fd[k] = (up - vqda_objective((xs, ys), xt, MODEL, p, lam)) / (2 * h)
    q2 = MODEL.head_slice("QFC2")
    n_desc = q2.start
    assert np.max(np.abs(g[:n_desc] - fd[:n_desc])) < 1e-7
    assert np.max(np.abs(g[q2] + fd[q2])) < 1e-7


# training loop


def test_steps_per_epoch():
    assert steps_per_epoch(100, 70, 16) == 4
    assert steps_per_epoch(64, 64, 64) == 1
    assert steps_per_epoch(10, 100, 16) == 0


def test_batch_larger_than_dataset(synth):
    with pytest.raises(DomainError):
        train(synth["source"], synth["target"].unlabeled(), MODEL, TrainConfig(epochs=1, batch_size=64))


def test_config_validation():
    with pytest.raises(DomainError):
        TrainConfig(epochs=0)
    with pytest.raises(DomainError):
        TrainConfig.from_dict({"epochs": 1, "bogus": 2})
    assert TrainConfig.from_dict(TrainConfig(epochs=3).to_dict()) == TrainConfig(epochs=3)


def test_step_count_and_lambda_trace(synth):
    cfg = TrainConfig(epochs=3, batch_size=16, learning_rate=0.01)
    rep = train(synth["source"], synth["target"].unlabeled(), MODEL, cfg)
    assert rep.notes["steps_per_epoch"] == 3 and rep.notes["total_steps"] == 9
    lams = [r["lambda"] for r in rep.epochs]
    # recorded lambda is the one used on the last step of each epoch (p = 2/9, 5/9, 8/9)
    assert lams == pytest.approx([lambda_schedule(p / 9) for p in (2, 5, 8)])


def test_lambda_zero_freezes_qfc2_and_matches_source_only(synth):
    src, tgt = synth["source"], synth["target"].unlabeled()
    cfg = TrainConfig(epochs=2, batch_size=16, learning_rate=0.01, lambda_override=0.0)
    a = train(src, tgt, MODEL, cfg)
    b = train(src, tgt, MODEL, TrainConfig(epochs=2, batch_size=16, learning_rate=0.01, adapt=False))
    q2 = MODEL.head_slice("QFC2")
    assert np.array_equal(np.array(a.final_params)[q2], np.array(a.initial_params)[q2])
    assert a.final_params == b.final_params


def test_deterministic_across_runs_and_threads(synth):
    src, tgt = synth["source"], synth["target"].unlabeled()
    cfg = TrainConfig(epochs=1, batch_size=24, learning_rate=0.01)
    a = train(src, tgt, MODEL, cfg)
    b = train(src, tgt, MODEL, cfg)
    c = train(src, tgt, MODEL, TrainConfig(epochs=1, batch_size=24, learning_rate=0.01, threads=2))
    assert a.final_params == b.final_params == c.final_params
    assert a.summary()["final"] == c.summary()["final"]


def test_sgd_step_is_exact_at_lambda_zero(synth):
    src, tgt = synth["source"], synth["target"].unlabeled()
    mu = 0.05
    cfg = TrainConfig(epochs=1, batch_size=48, learning_rate=mu, optimizer="sgd", lambda_override=0.0)
    rep = train(src, tgt, MODEL, cfg)
    p0 = np.array(rep.initial_params)
    idx = make_rng([0, 1]).permutation(48)
    g = batch_grads(MODEL, p0, src.samples[idx], src.labels[idx], 0, True, False)
    expect = p0.copy()
    expect[: MODEL.extractor.n_params] -= mu * g.cp_label
    expect[MODEL.head_slice("QFC1")] -= mu * g.qfc1
    assert np.array_equal(np.array(rep.final_params), expect)


def test_training_lowers_label_loss(synth):
    cfg = TrainConfig(epochs=4, batch_size=16, learning_rate=0.02)
    rep = train(synth["source"], synth["target"].unlabeled(), MODEL, cfg,
                eval_sets={"source": synth["source"]})
    assert rep.epochs[-1]["label_loss"] < rep.epochs[0]["label_loss"]
    assert "source_accuracy" in rep.epochs[-1]


# evaluation


def test_evaluate_perfect_flipped_chance(synth, rng):
    params = rng.uniform(0, 2 * np.pi, MODEL.n_params)
    ds = synth["target_test"]
    pred, _ = predict(MODEL, params, ds.samples)
    perfect = DomainDataset(ds.samples, pred, "target")
    flipped = DomainDataset(ds.samples, 1 - pred, "target")
    assert evaluate(perfect, MODEL, params)["accuracy"] == 1.0
    assert evaluate(flipped, MODEL, params)["accuracy"] == 0.0
    big = gen_synthetic(SyntheticDomainSpec(n_source=2, n_target=2, n_target_test=400))["target_test"]
    coin = DomainDataset(big.samples, rng.integers(0, 2, len(big)), "target")
    assert abs(evaluate(coin, MODEL, params)["accuracy"] - 0.5) < 0.1
    r = evaluate(perfect, MODEL, params)
    assert np.trace(np.array(r["confusion"])) == r["n"] == len(ds)


def test_evaluate_with_shots(synth, rng):
    params = rng.uniform(0, 2 * np.pi, MODEL.n_params)
    ds = synth["target_test"]
    a = evaluate(ds, MODEL, params, shots=100, seed=3)
    assert a == evaluate(ds, MODEL, params, shots=100, seed=3)
    exact = evaluate(ds, MODEL, params)
    high = evaluate(ds, MODEL, params, shots=10**7)
    assert abs(high["accuracy"] - exact["accuracy"]) <= 0.05


def test_evaluate_rejects_bad_inputs(synth):
    params = np.zeros(MODEL.n_params)
    with pytest.raises(DomainError):
        evaluate(synth["target"].unlabeled(), MODEL, params)
    with pytest.raises(DomainError):
        evaluate(DomainDataset(np.eye(8), np.zeros(8, dtype=int)), MODEL, params)
