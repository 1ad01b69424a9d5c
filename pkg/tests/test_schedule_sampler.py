import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from visinstruct.diffusion import (
    ConditionEmbedding,
    LatentGrid,
    NoiseSchedule,
    TokenTrace,
    build_schedule,
    cfg_eps,
    ddim_invert_step,
    ddim_step,
    generate,
    invert,
    visited_timesteps,
)
from visinstruct.errors import CalibrationMismatchError, ConfigurationError, ContractError, OutOfRangeError
from visinstruct.runtime import DiffusionRuntime


def two_point_schedule(a0, a1):
    alpha = np.array([a0, a1], dtype=float)
    return NoiseSchedule(1, alpha, np.sqrt(1 / alpha - 1))


def cosine(a, b):
    a, b = a.ravel(), b.ravel()
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# -- schedules --------------------------------------------------------------


def test_default_schedule_has_51_strictly_decreasing_alphas():
    s = build_schedule(50, "linear")
    assert s.T == 50 and s.alpha.shape == (51,)
    assert np.all(np.diff(s.alpha) < 0)
    assert 0.99 <= s.alpha[0] <= 1.0 and np.all(s.alpha > 0)


def test_single_step_schedule():
    s = build_schedule(1)
    assert s.alpha[0] == pytest.approx(1.0, abs=1e-3)
    assert s.alpha[1] < s.alpha[0] and s.beta[1] > s.beta[0]


@pytest.mark.parametrize("kind", ["linear", "cosine"])
@pytest.mark.parametrize("T", [1, 2, 7, 50, 100])
def test_schedule_monotone_and_beta_identity(kind, T):
    s = build_schedule(T, kind)
    assert np.all(np.diff(s.alpha) < 0)
    assert np.all(np.diff(s.beta) > 0)
    np.testing.assert_allclose(s.beta - np.sqrt(1 / s.alpha - 1), 0, atol=1e-12)


@pytest.mark.parametrize("T,kind", [(0, "linear"), (-3, "linear"), (10, "sigmoid"), (2.5, "linear")])
def test_bad_schedules_rejected(T, kind):
    with pytest.raises(ConfigurationError):
        build_schedule(T, kind)


def test_schedule_arrays_read_only():
    s = build_schedule(5)
    with pytest.raises(ValueError):
        s.alpha[0] = 0.5


# -- DDIM steps -------------------------------------------------------------


def test_invert_step_hand_value():
    # coefficients sqrt(0.25/1) = 0.5 and sqrt(0.25) * (sqrt(3) - 0) = sqrt(3)/2
    s = two_point_schedule(1.0, 0.25)
    expected = 0.5 * 1.0 + 0.5 * (math.sqrt(3.0) - 0.0) * 1.0
    assert expected == pytest.approx(1.3660254037844386, abs=1e-15)
    x = LatentGrid(np.array([[1.0]]), 1, 1)
    out = ddim_invert_step(x, np.array([[1.0]]), 0, s)
    assert out.tokens[0, 0] == pytest.approx(expected, rel=1e-15)
    back = ddim_step(out, np.array([[1.0]]), 1, s)
    assert back.tokens[0, 0] == pytest.approx(1.0, rel=1e-14)


def test_zero_noise_steps_scale_only(rng):
    s = build_schedule(50)
    x = rng.standard_normal((64, 16))
    z = np.zeros_like(x)
    np.testing.assert_array_equal(ddim_invert_step(x, z, 10, s), np.sqrt(s.alpha[11] / s.alpha[10]) * x)
    np.testing.assert_array_equal(ddim_step(x, z, 11, s), np.sqrt(s.alpha[10] / s.alpha[11]) * x)


def test_equal_alpha_is_identity(rng):
    s = two_point_schedule(0.7, 0.7)
    x, eps = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    np.testing.assert_array_equal(ddim_invert_step(x, eps, 0, s), x)


def test_step_range_and_shape_errors(rng):
    s = build_schedule(10)
    x = rng.standard_normal((4, 2))
    with pytest.raises(OutOfRangeError):
        ddim_invert_step(x, x, 10, s)
    with pytest.raises(OutOfRangeError):
        ddim_step(x, x, 0, s)
    with pytest.raises(ContractError):
        ddim_invert_step(x, x[:2], 3, s)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@settings(max_examples=300, deadline=None)
@given(
    x=arrays(np.float64, (6, 4), elements=finite),
    eps=arrays(np.float64, (6, 4), elements=finite),
    t=st.integers(0, 49),
)
def test_inverse_pair_property(x, eps, t):
    s = build_schedule(50)
    y = ddim_invert_step(x, eps, t, s)
    back = ddim_step(y, eps, t + 1, s)
    scale = max(np.linalg.norm(x), np.linalg.norm(eps), 1e-300)
    assert np.linalg.norm(back - x) <= 1e-9 * scale


# -- guidance ---------------------------------------------------------------


def test_cfg_special_cases(rng):
    c, u = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    np.testing.assert_array_equal(cfg_eps(c, u, 1.0), c)
    np.testing.assert_array_equal(cfg_eps(c, u, 0.0), u)
    np.testing.assert_array_equal(cfg_eps(c, c, 7.5), c)
    np.testing.assert_allclose(cfg_eps(c, u), u + 5.0 * (c - u))


@settings(max_examples=100, deadline=None)
@given(g1=st.floats(-10, 10), g2=st.floats(-10, 10), seed=st.integers(0, 2**32 - 1))
def test_cfg_affine_in_scale(g1, g2, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((4, 3)), r.standard_normal((4, 3))
    np.testing.assert_allclose(cfg_eps(a, b, g1 + g2) - cfg_eps(a, b, g1), g2 * (a - b), atol=1e-9)


def test_cfg_shape_mismatch():
    with pytest.raises(ContractError):
        cfg_eps(np.zeros((2, 2)), np.zeros((2, 3)))


# -- loops ------------------------------------------------------------------


@pytest.fixture(scope="module")
def rt10():
    return DiffusionRuntime.create(timesteps=10)


def test_generate_is_deterministic_and_traces_every_step(rt10):
    c = rt10.condition("Crack the egg into the pan.")
    a, ta = generate(c, None, 5, rt10.sched, rt10.predictor)
    b, tb = generate(c, None, 5, rt10.sched, rt10.predictor)
    np.testing.assert_array_equal(a.tokens, b.tokens)
    assert ta.timesteps == list(range(1, 11)) == visited_timesteps(rt10.sched)
    assert all(ta[t].shape == (32, 16) for t in ta.timesteps)
    assert all(np.array_equal(ta[t], tb[t]) for t in ta.timesteps)


def test_invert_keys_match_generate(rt10):
    c = rt10.condition("Crack the egg into the pan.")
    img, tg = generate(c, None, 5, rt10.sched, rt10.predictor)
    ti = invert(img, c, rt10.sched, rt10.predictor)
    assert ti.timesteps == tg.timesteps
    assert ti.rows == tg.rows == 32


def test_inversion_trajectory_is_an_inverse_pair(rt10):
    c = rt10.condition("Boil the wontons until they float.")
    img, _ = generate(c, None, 9, rt10.sched, rt10.predictor)
    _, traj = invert(img, c, rt10.sched, rt10.predictor, return_trajectory=True)
    for k, t in enumerate(traj.timesteps):
        prev = ddim_step(traj.latents[k + 1], traj.eps[k], t + 1, rt10.sched)
        assert np.linalg.norm(prev.tokens - traj.latents[k].tokens) <= 1e-9 * np.linalg.norm(traj.latents[k].tokens)


def test_memory_missing_timestep_rejected(rt10):
    c = rt10.condition("x")
    _, trace = generate(c, None, 1, rt10.sched, rt10.predictor)
    partial = TokenTrace({t: trace[t] for t in trace.timesteps if t != 4}, 1)
    with pytest.raises(CalibrationMismatchError):
        generate(c, partial, 2, rt10.sched, rt10.predictor)


MEMORY_PAIRS = [
    ("Place the seasoned wings on a rack over a baking tray.", "Pump the inner tube and listen for the leak."),
    ("Crack the egg into the pan.", "Repot the seedling into a larger pot."),
    ("Whisk flour and milk into a smooth batter.", "Slice the potatoes very thinly with a mandoline."),
]


@pytest.mark.parametrize("text,unrelated", MEMORY_PAIRS)
@pytest.mark.parametrize("seed", [77, 3])
def test_memory_changes_output_and_prefers_related_memory(runtime, text, unrelated, seed):
    sched, pred = runtime.sched, runtime.predictor
    c, other = runtime.condition(text), runtime.condition(unrelated)
    base, _ = generate(c, None, seed, sched, pred)
    _, same_mem = generate(c, None, seed + 1, sched, pred)
    _, other_mem = generate(other, None, seed + 1, sched, pred)
    with_same, _ = generate(c, same_mem, seed, sched, pred)
    with_other, _ = generate(c, other_mem, seed, sched, pred)
    assert not np.array_equal(with_same.tokens, base.tokens)
    assert cosine(with_same.tokens, base.tokens) > cosine(with_other.tokens, base.tokens)


# Relative L2 error of invert -> regenerate on a fixed prompt/seed, recorded
# when the toy model was fixed. Any change to the predictor moves these.
RECONSTRUCTION_PINS = {10: 0.06449831144031384, 25: 0.03375685943226206, 50: 0.020372770835403224}


def reconstruction_error(T, kernel=None):
    rt = DiffusionRuntime.create(timesteps=T, kernel=kernel)
    c = rt.condition("Slice the potatoes very thinly with a mandoline.")
    x0, _ = generate(c, None, 1234, rt.sched, rt.predictor)
    _, traj = invert(x0, c, rt.sched, rt.predictor, return_trajectory=True)
    again, _ = generate(c, None, 1234, rt.sched, rt.predictor, x_T=traj.latents[-1])
    return float(np.linalg.norm(again.tokens - x0.tokens) / np.linalg.norm(x0.tokens))


@pytest.mark.parametrize("kernel", ["python", "compiled"])
def test_reconstruction_pins(kernel):
    from visinstruct.diffusion import AVAILABLE_KERNELS

    if kernel not in AVAILABLE_KERNELS:
        pytest.skip("compiled kernel not built")
    errs = {T: reconstruction_error(T, kernel) for T in RECONSTRUCTION_PINS}
    for T, pin in RECONSTRUCTION_PINS.items():
        assert errs[T] == pytest.approx(pin, rel=1e-6)
    assert errs[10] > errs[25] > errs[50]


def test_latent_grid_contract():
    with pytest.raises(ContractError):
        LatentGrid(np.zeros((5, 2)), 2, 2)
    with pytest.raises(ContractError):
        LatentGrid(np.array([[np.nan]]), 1, 1)
    assert ConditionEmbedding.null(8).vector.tolist() == [0.0] * 8
