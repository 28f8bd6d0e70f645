import numpy as np
import pytest

from oracles import linear_error
from sedid.classifier import (
    ClassifierNet, NnTrainConfig, build_input, build_inputs, classifier_grad_check, load_classifier,
    nn_score, nn_train, save_classifier, softmax, stratified_split,
)
from sedid.core import StepConfig, profile_batch, t_delta_error
from sedid.errors import InvalidArgument
from sedid.foundation import Rng
from sedid.noise_model import ConstantPredictor, LinearPredictor
from sedid.schedule import linear_schedule

S = linear_schedule(100, 1e-3, 0.2)


def separable(n=80, seed=0):
    r = Rng(seed)
    y = np.array([0, 1] * (n // 2))
    X = r.normal((n, 2)) * 0.3
    X[:, 0] += np.where(y == 1, 2.0, -2.0)
    return X, y


def test_build_input_zero_error_profile():
    prof = t_delta_error(ConstantPredictor(0.2), S, Rng(1).normal((2, 2)), StepConfig(10, 5))
    x = build_input(prof)
    assert x.shape == (12,)
    assert np.all(np.abs(x[8:]) <= 1e-20)


def test_build_input_linear_oracle_case():
    s = linear_schedule(10, 1e-4, 0.02)
    prof = t_delta_error(LinearPredictor(0.3), s, np.array([1.0]), StepConfig(4, 2))
    x_tilde, x_recon, err = linear_error(0.3, 1.0, 10, 1e-4, 0.02, 4, 2)
    got = build_input(prof)
    np.testing.assert_allclose(got, [float(x_tilde), float(x_recon), float(err)], rtol=1e-12)
    assert np.array_equal(got, np.array([prof.x_tilde_t[0], prof.x_recon[0], prof.residual[0] ** 2]))


def test_build_inputs_matches_rows():
    X = Rng(2).normal((4, 3))
    batch = profile_batch(LinearPredictor(0.3), S, X, StepConfig(20, 10))
    B = build_inputs(batch)
    assert B.shape == (4, 9)
    for i in range(4):
        assert np.array_equal(B[i], build_input(batch[i]))


def test_zero_net_scores_half():
    net = ClassifierNet.zeros(6)
    assert nn_score(net, np.ones(6)) == 0.5
    with pytest.raises(InvalidArgument):
        nn_score(net, np.ones(5))


def test_scores_in_unit_interval():
    net = ClassifierNet.create(4, hidden=(8, 4), rng=Rng(3))
    p = net.proba(Rng(4).normal((1000, 4)) * 10)
    assert np.all((p >= 0) & (p <= 1))


def test_softmax_stability():
    logits = np.array([[1e3, -1e3], [1e3, 1e3 - 1], [-7.0, 3.0]])
    out = softmax(logits)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    assert out[0, 0] == 1.0


def test_stratified_split_sizes_and_determinism():
    labels = np.array([0] * 37 + [1] * 63)
    tr, ho = stratified_split(labels, 0.1, seed=5)
    assert len(tr) == 10 and len(ho) == 90
    assert set(tr) | set(ho) == set(range(100)) and not set(tr) & set(ho)
    assert sorted(np.bincount(labels[tr]).tolist()) == [4, 6]
    tr2, _ = stratified_split(labels, 0.1, seed=5)
    assert np.array_equal(tr, tr2)
    for f in (0.05, 0.33, 0.5, 1.0):
        assert len(stratified_split(labels, f, 1)[0]) == int(np.floor(f * 100))


def test_separable_toy_reaches_full_accuracy():
    X, y = separable()
    net, losses = nn_train(X, y, NnTrainConfig(hidden=(16, 8), batch_size=8, learning_rate=0.01))
    acc = np.mean((net.proba(X) > 0.5) == y)
    assert acc == 1.0
    assert losses[-1] < losses[0]


def test_zero_learning_rate_keeps_parameters():
    X, y = separable()
    net0 = ClassifierNet.create(2, hidden=(8, 4), rng=Rng(1))
    before = {k: v.copy() for k, v in net0.params.items()}
    net, _ = nn_train(X, y, NnTrainConfig(hidden=(8, 4), learning_rate=0.0, epochs=3), net=net0)
    for k in before:
        assert np.array_equal(before[k], net.params[k])


def test_training_deterministic():
    X, y = separable()
    cfg = NnTrainConfig(hidden=(8, 4), epochs=5, batch_size=16, seed=9)
    a, la = nn_train(X, y, cfg)
    b, lb = nn_train(X, y, cfg)
    assert np.array_equal(la, lb)
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_training_needs_both_classes():
    with pytest.raises(InvalidArgument):
        nn_train(np.zeros((4, 2)), np.zeros(4), NnTrainConfig())


@pytest.mark.parametrize("kw", [{"train_fraction": 0.0}, {"train_fraction": 1.5}, {"batch_size": 0},
                                {"momentum": 1.0}, {"learning_rate": -1.0}])
def test_config_validation(kw):
    with pytest.raises(InvalidArgument):
        NnTrainConfig(**kw)


def test_gradient_check():
    r = Rng(6)
    net = ClassifierNet.create(5, hidden=(7, 4), rng=r)
    net.params["input.mean"][...] = r.normal(5)
    net.params["input.std"][...] = 1 + r.uniform(5)
    X = r.normal((6, 5))
    y = np.array([0, 1, 1, 0, 1, 0])
    assert classifier_grad_check(net, X, y) <= 1e-4


def test_checkpoint_round_trip(tmp_path):
    X, y = separable()
    net, _ = nn_train(X, y, NnTrainConfig(hidden=(8, 4), epochs=2))
    save_classifier(tmp_path / "c.sedd", net)
    back = load_classifier(tmp_path / "c.sedd")
    assert np.array_equal(net.proba(X), back.proba(X))
