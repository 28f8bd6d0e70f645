import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import linear_error
from sedid.core import (
    AvgPoolEncoder, IdentityEncoder, LinearEncoder, StepConfig, f_theta, latent_t_error, phi,
    profile_batch, psi, reverse_chain, t_delta_error,
)
from sedid.errors import InvalidArgument, UndefinedTimestep
from sedid.foundation import Rng
from sedid.noise_model import ConstantPredictor, LinearPredictor, MlpPredictor, PointMassPredictor
from sedid.schedule import linear_schedule

S100 = linear_schedule(100, 1e-3, 0.2)


def test_f_theta_examples():
    s = linear_schedule(1, 0.5, 0.5)
    got = f_theta(LinearPredictor(0.5), s, [1.0], 1)[0]
    assert got == pytest.approx((1 - math.sqrt(0.5) * 0.5) / math.sqrt(0.5), rel=1e-15)
    assert got == pytest.approx(0.91421356, abs=1e-8)
    x = Rng(1).normal(4)
    np.testing.assert_allclose(f_theta(ConstantPredictor(0), S100, x, 30), x / math.sqrt(S100.alpha_bar[30]),
                               rtol=1e-15)
    x_star = Rng(2).normal(4)
    np.testing.assert_allclose(f_theta(PointMassPredictor(x_star, S100), S100, x, 30), x_star, atol=1e-12)
    with pytest.raises(InvalidArgument):
        f_theta(ConstantPredictor(0), S100, x, 0)


def test_psi_examples():
    x = Rng(1).normal(3)
    x_star = Rng(2).normal(3)
    got = psi(PointMassPredictor(x_star, S100), S100, x, 20, 20)
    np.testing.assert_allclose(got, x_star, atol=1e-12)
    ab = S100.alpha_bar
    np.testing.assert_allclose(psi(ConstantPredictor(0), S100, x, 40, 15),
                               math.sqrt(ab[25] / ab[40]) * x, rtol=1e-14)
    with pytest.raises(InvalidArgument):
        psi(ConstantPredictor(0), S100, x, 5, 10)


def test_phi_examples():
    x = Rng(1).normal(3)
    ab = S100.alpha_bar
    np.testing.assert_allclose(phi(ConstantPredictor(0), S100, x, 40, 15),
                               math.sqrt(ab[55] / ab[40]) * x, rtol=1e-14)
    with pytest.raises(InvalidArgument):
        phi(ConstantPredictor(0), S100, x, 90, 11)


def test_phi_point_mass_at_zero_uses_t1_fallback():
    x = Rng(1).normal(2)
    p = PointMassPredictor(np.zeros(2), S100)
    with pytest.raises(UndefinedTimestep):
        p.eval(x, 0)
    out = phi(p, S100, x, 0, 5)
    ab = S100.alpha_bar
    np.testing.assert_allclose(out, math.sqrt(ab[5]) * x + math.sqrt(1 - ab[5]) * p.eval(x, 1), rtol=1e-14)


def test_reverse_chain_examples():
    x = Rng(3).normal(5)
    assert np.array_equal(reverse_chain(ConstantPredictor(0), S100, x, 0, 5), x)
    np.testing.assert_allclose(reverse_chain(ConstantPredictor(0), S100, x, 60, 10),
                               math.sqrt(S100.alpha_bar[60]) * x, rtol=1e-13)
    p = LinearPredictor(0.3)
    assert np.array_equal(reverse_chain(p, S100, x, 10, 10), phi(p, S100, x, 0, 10))


@pytest.mark.parametrize("t_se,delta,msg", [(3, 2, "multiple"), (98, 5, "t_se \\+ delta"), (0, 0, "delta")])
def test_step_config_validation(t_se, delta, msg):
    with pytest.raises(InvalidArgument, match="invalid StepConfig") as exc:
        StepConfig(t_se, delta).validate(100)
    assert exc.match(msg)


def test_linear_numeric_case_matches_oracle():
    s = linear_schedule(10, 1e-4, 0.02)
    prof = t_delta_error(LinearPredictor(0.3), s, np.array([1.0]), StepConfig(4, 2))
    x_tilde, x_recon, err = linear_error(0.3, 1.0, 10, 1e-4, 0.02, 4, 2)
    assert prof.error > 0
    assert prof.error == pytest.approx(float(err), rel=1e-12)
    assert prof.x_tilde_t[0] == pytest.approx(float(x_tilde), rel=1e-14)
    assert prof.x_recon[0] == pytest.approx(float(x_recon), rel=1e-14)


@pytest.mark.parametrize("c", [0.0, 0.7, -2.5])
def test_constant_predictor_error_is_zero(c):
    x0 = Rng(4).normal(6)
    for t_se, delta in [(0, 5), (10, 5), (40, 20), (75, 25), (95, 5)]:
        prof = t_delta_error(ConstantPredictor(c), S100, x0, StepConfig(t_se, delta))
        assert np.max(np.abs(prof.residual)) <= 1e-10
        assert prof.error <= 1e-20


def test_point_mass_error_is_zero():
    x_star = Rng(5).normal(4)
    p = PointMassPredictor(x_star, S100)
    x0 = Rng(6).normal(4)
    for t_se, delta in [(5, 5), (40, 10), (50, 25), (80, 20)]:
        prof = t_delta_error(p, S100, x0, StepConfig(t_se, delta))
        assert np.max(np.abs(prof.residual)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**40), st.integers(1, 99), st.integers(1, 99), st.floats(-2, 2))
def test_round_trip_property(seed, t, delta, c):
    if t + delta > 100:
        return
    x = Rng(seed).normal(3) * 3
    for p in (ConstantPredictor(c), PointMassPredictor(Rng(seed + 1).normal(3), S100)):
        back = psi(p, S100, phi(p, S100, x, t, delta), t + delta, delta)
        assert np.max(np.abs(back - x)) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**40), st.floats(0.05, 1.5), st.sampled_from([1, 2, 5, 10]), st.integers(0, 8))
def test_error_nonnegative_and_shapes(seed, k, delta, m):
    t_se = m * delta
    if t_se + delta > 100:
        return
    x0 = Rng(seed).normal((2, 3))
    prof = t_delta_error(LinearPredictor(k), S100, x0, StepConfig(t_se, delta))
    assert prof.error >= 0
    for arr in (prof.x_tilde_t, prof.x_up, prof.x_recon, prof.residual):
        assert arr.shape == (2, 3)
    assert prof.error == pytest.approx(float(np.sum(prof.residual ** 2)), rel=1e-14, abs=1e-300)


def test_scaling_covariance_zero_predictor():
    x0 = Rng(7).normal(5)
    cfg = StepConfig(30, 10)
    a = t_delta_error(ConstantPredictor(0), S100, x0, cfg)
    b = t_delta_error(ConstantPredictor(0), S100, 3.0 * x0, cfg)
    np.testing.assert_allclose(b.x_tilde_t, 3.0 * a.x_tilde_t, rtol=1e-10)
    np.testing.assert_allclose(b.x_recon, 3.0 * a.x_recon, rtol=1e-10)


def test_scaling_covariance_linear_predictor():
    # linear predictors make every stage linear in x0, so the error scales by c**2
    x0 = Rng(7).normal(5)
    cfg = StepConfig(30, 10)
    a = t_delta_error(LinearPredictor(0.4), S100, x0, cfg)
    b = t_delta_error(LinearPredictor(0.4), S100, 2.5 * x0, cfg)
    assert b.error == pytest.approx(6.25 * a.error, rel=1e-10)


def test_profile_batch_matches_single():
    p = LinearPredictor(0.35)
    X = Rng(8).normal((6, 2, 2))
    cfg = StepConfig(20, 10)
    batch = profile_batch(p, S100, X, cfg)
    assert len(batch) == 6
    for i in range(6):
        single = t_delta_error(p, S100, X[i], cfg)
        assert batch[i].error == pytest.approx(single.error, rel=1e-14)
        np.testing.assert_array_equal(batch.x_recon[i], single.x_recon)


def test_mlp_profile_batch_matches_single():
    p = MlpPredictor.create((2,), 100, hidden=(8, 8), rng=Rng(1))
    X = Rng(9).normal((5, 2))
    cfg = StepConfig(10, 5)
    batch = profile_batch(p, S100, X, cfg)
    for i in range(5):
        np.testing.assert_allclose(batch.x_recon[i], t_delta_error(p, S100, X[i], cfg).x_recon, rtol=1e-12)


# -- latent variant ---------------------------------------------------------------

def test_latent_identity_is_bitwise_equal():
    r = Rng(10)
    for i in range(20):
        x0 = r.normal(4)
        cfg = StepConfig(10 * (i % 5), 10)
        a = latent_t_error(LinearPredictor(0.3), IdentityEncoder(), S100, x0, cfg)
        b = t_delta_error(LinearPredictor(0.3), S100, x0, cfg)
        assert a.error == b.error
        assert a.x_recon.tobytes() == b.x_recon.tobytes()


def test_latent_linear_encoder_constant_predictor_zero():
    W = Rng(11).normal((3, 8))
    prof = latent_t_error(ConstantPredictor(0.4), LinearEncoder(W), S100, Rng(12).normal((2, 4)),
                          StepConfig(20, 10))
    assert prof.x_tilde_t.shape == (3,)
    assert np.max(np.abs(prof.residual)) <= 1e-10


def test_latent_avgpool_matches_scalar_oracle():
    x0 = Rng(13).normal((4, 4))
    prof = latent_t_error(LinearPredictor(0.3), AvgPoolEncoder(2), S100, x0, StepConfig(20, 10))
    pooled = x0.reshape(2, 2, 2, 2).mean(axis=(1, 3))
    total = 0.0
    for v in pooled.ravel():
        total += float(linear_error(0.3, v, 100, 1e-3, 0.2, 20, 10)[2])
    assert prof.error == pytest.approx(total, rel=1e-12)


def test_latent_shape_mismatch():
    p = MlpPredictor.create((3,), 100, hidden=(4, 4), rng=Rng(1))
    with pytest.raises(InvalidArgument):
        latent_t_error(p, IdentityEncoder(), S100, np.zeros(4), StepConfig(10, 5))
    with pytest.raises(InvalidArgument):
        latent_t_error(p, AvgPoolEncoder(2), S100, np.zeros((3, 3)), StepConfig(10, 5))


def test_latent_condition_threaded():
    p = MlpPredictor.create((2,), 100, hidden=(6, 6), cond_dim=2, rng=Rng(1))
    x0 = Rng(2).normal(2)
    a = latent_t_error(p, IdentityEncoder(), S100, x0, StepConfig(10, 5), cond=np.array([1.0, 0.0]))
    b = latent_t_error(p, IdentityEncoder(), S100, x0, StepConfig(10, 5), cond=np.array([0.0, 1.0]))
    assert a.error != b.error


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**40), st.sampled_from([1, 2, 5, 10, 25]), st.integers(0, 20))
def test_residual_agrees_with_plain_difference(seed, delta, m):
    t_se = m * delta
    if t_se + delta > 100:
        return
    p = MlpPredictor.create((3,), 100, hidden=(8, 8), rng=Rng(seed))
    prof = t_delta_error(p, S100, Rng(seed + 1).normal(3), StepConfig(t_se, delta))
    scale = np.max(np.abs(prof.x_recon)) + np.max(np.abs(prof.x_tilde_t))
    np.testing.assert_allclose(prof.residual, prof.x_recon - prof.x_tilde_t, rtol=0, atol=1e-13 * scale)
    assert prof.error == pytest.approx(float(np.sum(prof.residual ** 2)), rel=1e-14)
