import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wganlab import autodiff as ad
from wganlab import nets
from wganlab.data import Rng
from wganlab.penalty import (
    PenaltyConfig,
    gradient_norms,
    penalty_gp,
    penalty_lp,
    sample_interpolates,
    sample_local_perturbation,
    sample_penalty_points,
)

import oracle
from conftest import linear_critic, off_axis_points, random_tanh_critic


def _value(fn, critic, z, lam):
    return float(fn(critic, z, lam, ad.Tape()).value)


def test_interpolates_boundaries():
    real = np.array([[0.0, 0.0], [1.0, 1.0]])
    fake = np.array([[2.0, 2.0], [3.0, -1.0]])
    assert np.array_equal(sample_interpolates(None, real, fake, alpha=1.0), real)
    assert np.array_equal(sample_interpolates(None, real, fake, alpha=0.0), fake)
    z = sample_interpolates(None, real[:1], fake[:1], alpha=0.25)
    np.testing.assert_array_equal(z, [[1.5, 1.5]])
    with pytest.raises(ValueError):
        sample_interpolates(Rng(0), real, fake[:1])


def test_interpolates_lie_on_segments():
    rng = np.random.default_rng(0)
    real, fake = rng.normal(size=(100, 2)), rng.normal(size=(100, 2))
    z = sample_interpolates(Rng(1), real, fake)
    # z - fake is a nonnegative multiple (<= 1) of real - fake
    d = real - fake
    t = np.sum((z - fake) * d, axis=1) / np.sum(d * d, axis=1)
    assert np.all((t >= 0) & (t <= 1))
    np.testing.assert_allclose(fake + t[:, None] * d, z, atol=1e-12)


def test_perturbation_of_constant_batch_is_identity():
    batch = np.tile([[0.3, -0.7]], (5, 1))
    assert np.array_equal(sample_local_perturbation(Rng(0), batch, 0.5), batch)


def test_perturbation_bound_and_determinism():
    rng = np.random.default_rng(2)
    for seed in range(50):
        batch = rng.normal(size=(16, 2)) * rng.uniform(0.1, 3)
        z = sample_local_perturbation(Rng(seed), batch, 0.5)
        s = np.sqrt(np.mean(np.var(batch, axis=0)))
        assert np.all(z - batch >= 0)
        assert np.all(np.abs(z - batch) <= 0.5 * s + 1e-15)
        assert z.tobytes() == sample_local_perturbation(Rng(seed), batch, 0.5).tobytes()
    with pytest.raises(ValueError):
        sample_local_perturbation(Rng(0), np.ones((1, 2)), 0.5)


def test_perturb_both_concatenates():
    rng = np.random.default_rng(3)
    real, fake = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    pts = sample_penalty_points(Rng(0), PenaltyConfig("gp", sampling="perturb_both"), real, fake)
    assert pts.shape == (16, 2)
    r = Rng(0)
    np.testing.assert_array_equal(pts[:8], sample_local_perturbation(r, real, 0.5))
    np.testing.assert_array_equal(pts[8:], sample_local_perturbation(r, fake, 0.5))


def test_gp_closed_forms():
    z = off_axis_points(np.random.default_rng(0), 32)
    unit = linear_critic(0.6, 0.8)
    assert _value(penalty_gp, unit, z, 10.0) < 1e-20
    assert _value(penalty_gp, linear_critic(2.0, 0.0), z, 5.0) == pytest.approx(5.0, abs=1e-10)
    assert _value(penalty_gp, linear_critic(0.5, 0.0), z, 10.0) == pytest.approx(2.5, abs=1e-10)


def test_lp_closed_forms():
    z = off_axis_points(np.random.default_rng(1), 32)
    assert _value(penalty_lp, linear_critic(0.5, 0.0), z, 10.0) == 0.0
    assert _value(penalty_lp, linear_critic(2.0, 0.0), z, 5.0) == pytest.approx(5.0, abs=1e-10)


def test_lp_at_unit_norm_has_zero_value_and_gradient():
    z = off_axis_points(np.random.default_rng(2), 16)
    critic = linear_critic(1.0, 0.0)
    tape = ad.Tape()
    bound = nets.bind(critic, tape)
    pen = penalty_lp(critic, z, 7.0, tape, bound)
    # the row norm is smoothed by 1e-12 inside the sqrt, so "exactly 1" is 1 + 5e-13
    assert pen.value < 1e-20
    grads = ad.grad(tape, pen, bound)
    assert max(np.abs(g.value).max() for g in grads) < 1e-10


def test_gradient_norms_match_per_row_backward():
    rng = np.random.default_rng(4)
    critic = random_tanh_critic(rng)
    z = rng.normal(size=(6, 2))
    batched = gradient_norms(critic, z, ad.Tape()).value
    for i in range(6):
        t = ad.Tape()
        zi = ad.input(t, z[i : i + 1])
        (g,) = ad.grad(t, ad.sum(nets.forward(critic, zi, t)), [zi])
        assert batched[i] == pytest.approx(np.sqrt(np.sum(g.value**2) + ad.NORM_EPS), rel=1e-12)
    ref = oracle.input_gradient(critic.arrays(), z)
    np.testing.assert_allclose(batched, np.sqrt(np.sum(ref**2, axis=1) + oracle.NORM_EPS), rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 100.0), st.integers(0, 2**31))
def test_lp_never_exceeds_gp(a, b, lam, seed):
    critic = linear_critic(a, b)
    z = off_axis_points(np.random.default_rng(seed), 8)
    gp = _value(penalty_gp, critic, z, lam)
    lp = _value(penalty_lp, critic, z, lam)
    assert lp <= gp + 1e-12
    if np.hypot(a, b) >= 1:
        assert lp == pytest.approx(gp, abs=1e-12)
    elif np.hypot(a, b) < 1 - 1e-9:
        assert lp == 0.0


def test_lp_le_gp_on_nonlinear_critics():
    rng = np.random.default_rng(5)
    for _ in range(50):
        critic = random_tanh_critic(rng)
        critic = critic.with_arrays([a * rng.uniform(0.5, 3) for a in critic.arrays()])
        z = rng.normal(size=(10, 2))
        assert _value(penalty_lp, critic, z, 3.0) <= _value(penalty_gp, critic, z, 3.0)


def test_zero_lambda_is_neutral():
    rng = np.random.default_rng(6)
    critic = random_tanh_critic(rng)
    z = rng.normal(size=(5, 2))
    for fn in (penalty_gp, penalty_lp):
        tape = ad.Tape()
        bound = nets.bind(critic, tape)
        pen = fn(critic, z, 0.0, tape, bound)
        assert pen.value == 0.0
        assert all(np.all(g.value == 0) for g in ad.grad(tape, pen, bound))
    with pytest.raises(ValueError):
        penalty_gp(critic, z, -1.0, ad.Tape())


def _hinge_safe(critic, z):
    norms = np.linalg.norm(oracle.input_gradient(critic.arrays(), z), axis=1)
    return np.all(np.abs(norms - 1) > 1e-3)


@pytest.mark.parametrize("kind", ["gp", "lp"])
def test_penalty_parameter_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(10 if kind == "gp" else 11)
    fn = penalty_gp if kind == "gp" else penalty_lp
    worst = 0.0
    for _ in range(20):
        critic = random_tanh_critic(rng, max_width=8)
        critic = critic.with_arrays([a * 2.0 for a in critic.arrays()])
        z = rng.normal(size=(4, 2))
        if not _hinge_safe(critic, z):
            continue
        tape = ad.Tape()
        bound = nets.bind(critic, tape)
        pen = fn(critic, z, 5.0, tape, bound)
        analytic = np.concatenate([g.value.ravel() for g in ad.grad(tape, pen, bound)])
        shapes = [a.shape for a in critic.arrays()]
        flat = np.concatenate([a.ravel() for a in critic.arrays()])

        def loss(v):
            return oracle.penalty_value(oracle.unpack(v, shapes), z, kind, 5.0)

        numeric = oracle.finite_difference(loss, flat)
        worst = max(worst, oracle.relative_error(analytic, numeric))
    assert worst < 1e-4


def test_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(kind="w2")
    with pytest.raises(ValueError):
        PenaltyConfig(lam=-1)
    with pytest.raises(ValueError):
        PenaltyConfig(sampling="grid")
    assert PenaltyConfig("gp").uses_points and not PenaltyConfig("clip").uses_points
