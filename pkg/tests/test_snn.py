import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikegrasp.snn import (
    LayerState,
    LIFParams,
    NLIFParams,
    NumericalDivergence,
    SurrogateSpec,
    lif_step,
    nlif_step,
    surrogate_grad,
    unroll_backward,
    unroll_forward,
)

HALF = LIFParams(lam=0.5)


def one(v):
    return LayerState(v=np.array([float(v)]), s=np.zeros(1))


# -- lif_step ---------------------------------------------------------------------


def test_lif_zero_input_zero_state():
    state, s = lif_step(one(0.0), [0.0], HALF)
    assert state.v[0] == 0.0 and s[0] == 0.0


def test_lif_leak_halves():
    state, s = lif_step(one(0.8), [0.0], HALF)
    assert state.v[0] == pytest.approx(0.4) and s[0] == 0.0


def test_lif_threshold_crossing_resets():
    state, s = lif_step(one(0.0), [2.0], HALF)
    assert s[0] == 1.0 and state.v[0] == 0.0


def test_lif_rejects_shape_mismatch_and_nan():
    with pytest.raises(ValueError):
        lif_step(one(0.0), [1.0, 2.0])
    with pytest.raises(NumericalDivergence):
        lif_step(one(0.0), [np.nan])


def test_param_validation():
    with pytest.raises(ValueError):
        LIFParams(lam=1.5)
    with pytest.raises(ValueError):
        LIFParams(threshold=0.0)
    with pytest.raises(ValueError):
        NLIFParams(v_clip=0.0)
    with pytest.raises(ValueError):
        SurrogateSpec(kind="triangle")


# -- nlif_step --------------------------------------------------------------------


def test_nlif_examples():
    p = NLIFParams(lam=0.5, v_clip=1.0)
    assert nlif_step(LayerState(np.zeros(1)), [0.0], p).v[0] == 0.0
    assert nlif_step(LayerState(np.zeros(1)), [4.0], p).v[0] == 1.0
    assert nlif_step(LayerState(np.array([0.6])), [0.0], p).v[0] == pytest.approx(0.3)


# -- surrogate ----------------------------------------------------------------------


def test_surrogate_examples():
    rect = SurrogateSpec("rectangular", 0.5)
    assert surrogate_grad([0.0], rect)[0] == 1.0
    assert surrogate_grad([10.0], rect)[0] == 0.0
    fs = SurrogateSpec("fast-sigmoid", 2.0)
    xs = np.linspace(-3, 3, 601)
    g = surrogate_grad(xs, fs)
    assert np.argmax(g) == 300


@given(st.floats(-50, 50), st.sampled_from(["rectangular", "fast-sigmoid"]), st.floats(0.05, 5.0))
def test_surrogate_nonnegative_and_symmetric(x, kind, w):
    spec = SurrogateSpec(kind, w)
    a, b = surrogate_grad([x], spec)[0], surrogate_grad([-x], spec)[0]
    assert a >= 0.0 and a == b


# -- unroll_forward -------------------------------------------------------------------


def test_zero_weights_are_silent(rng):
    x = rng.uniform(0, 1, (8, 5, 4))
    res = unroll_forward(np.zeros((4, 6)), np.zeros((6, 3)), x)
    assert not res.spikes.any()
    assert np.all(res.membranes == 0.0)


def test_single_step_chain_by_hand():
    lif, nlif = LIFParams(lam=0.5), NLIFParams(lam=0.5)
    # drive 3.0 -> u = 1.5 >= 1 -> spike; output gets 0.5 * 2.0 = 1.0
    res = unroll_forward([[3.0]], [[2.0]], [[1.0]], lif, nlif)
    assert res.spikes[0, 0, 0]
    assert res.membranes[0, 0, 0] == pytest.approx(1.0)
    # sub-threshold: u = 0.5 * 1.0 = 0.5, no spike, output stays 0
    res = unroll_forward([[1.0]], [[2.0]], [[1.0]], lif, nlif)
    assert not res.spikes.any() and res.membranes[0, 0, 0] == 0.0


def test_two_step_trace():
    lif, nlif = LIFParams(lam=0.5), NLIFParams(lam=0.5)
    # input present at t=0 only: u0 = 0.5 * 4 = 2 -> spike, reset; t=1: no drive, no spike
    res = unroll_forward([[4.0]], [[1.0]], [[1.0], [0.0]], lif, nlif)
    assert res.spikes[:, 0, 0].tolist() == [True, False]
    v = res.membranes[:, 0, 0]
    assert v[0] == pytest.approx(0.5) and v[1] == pytest.approx(0.25)


def test_matches_step_composition(rng):
    w_in, w_out = rng.normal(0, 1.5, (4, 9)), rng.normal(0, 1, (9, 3))
    x = rng.uniform(0, 1, (6, 5, 4))
    res = unroll_forward(w_in, w_out, x)
    h, o = LayerState.zeros((5, 9)), LayerState.zeros((5, 3), spiking=False)
    for t in range(6):
        h, s = lif_step(h, x[t] @ w_in)
        o = nlif_step(o, s @ w_out)
        np.testing.assert_array_equal(res.spikes[t], s.astype(bool))
        np.testing.assert_allclose(res.membranes[t], o.v, rtol=0, atol=1e-12)


def test_constant_input_shortcut_matches_full(rng):
    w_in, w_out = rng.normal(0, 2, (3, 7)), rng.normal(0, 1, (7, 2))
    x = np.repeat(rng.uniform(0, 1, (1, 4, 3)), 5, axis=0)
    fast = unroll_forward(w_in, w_out, x)
    assert fast.cache.inputs.shape[0] == 1
    h, o = LayerState.zeros((4, 7)), LayerState.zeros((4, 2), spiking=False)
    for t in range(5):
        h, _ = lif_step(h, x[t] @ w_in)
        o = nlif_step(o, h.s @ w_out)
    np.testing.assert_allclose(fast.membranes[-1], o.v, atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        unroll_forward(np.zeros((3, 4)), np.zeros((4, 2)), np.zeros((2, 5)))
    with pytest.raises(ValueError):
        unroll_forward(np.zeros((3, 4)), np.zeros((5, 2)), np.zeros((2, 3)))


def test_forward_is_deterministic(rng):
    w_in, w_out = rng.normal(0, 2, (4, 16)), rng.normal(0, 1, (16, 3))
    x = rng.uniform(0, 1, (8, 6, 4))
    a, b = unroll_forward(w_in, w_out, x), unroll_forward(w_in, w_out, x)
    assert a.membranes.tobytes() == b.membranes.tobytes()
    assert a.spikes.tobytes() == b.spikes.tobytes()


# -- unroll_backward ------------------------------------------------------------------


def _readout_loss(w_in, w_out, x, g, k=None):
    return float((unroll_forward(w_in, w_out, x, smooth_steepness=k).membranes[-1] * g).sum())


def _fd(f, w, eps=1e-6):
    out = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        d = np.zeros_like(w)
        d[idx] = eps
        out[idx] = (f(w + d) - f(w - d)) / (2 * eps)
    return out


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def test_zero_upstream_gives_zero_grads(rng):
    res = unroll_forward(rng.normal(size=(3, 5)), rng.normal(size=(5, 2)), rng.uniform(0, 1, (4, 2, 3)))
    gi, go = unroll_backward(res.cache, np.zeros((2, 2)))
    assert not gi.any() and not go.any()


def test_upstream_shape_checked(rng):
    res = unroll_forward(rng.normal(size=(3, 5)), rng.normal(size=(5, 2)), rng.uniform(0, 1, (4, 2, 3)))
    with pytest.raises(ValueError):
        unroll_backward(res.cache, np.zeros((3, 2)))


def test_output_weight_grad_matches_fd(rng):
    w_in, w_out = rng.normal(0, 1.5, (4, 8)), rng.normal(0, 1, (8, 3))
    x = rng.uniform(0, 1, (6, 3, 4))
    g = rng.normal(size=(3, 3))
    res = unroll_forward(w_in, w_out, x)
    assert res.spikes.any()
    _, go = unroll_backward(res.cache, g)
    num = _fd(lambda w: _readout_loss(w_in, w, x, g), w_out)
    assert _rel(go, num) < 1e-4


@pytest.mark.parametrize("k", [2.0, 5.0])
def test_smooth_twin_full_gradient(rng, k):
    w_in, w_out = rng.normal(0, 1.5, (3, 6)), rng.normal(0, 1, (6, 2))
    x = rng.uniform(0, 1, (5, 2, 3))
    g = rng.normal(size=(2, 2))
    res = unroll_forward(w_in, w_out, x, smooth_steepness=k)
    gi, go = unroll_backward(res.cache, g)
    assert _rel(gi, _fd(lambda w: _readout_loss(w, w_out, x, g, k), w_in)) < 1e-4
    assert _rel(go, _fd(lambda w: _readout_loss(w_in, w, x, g, k), w_out)) < 1e-4


def test_clamped_output_blocks_gradient():
    # output saturates at v_clip so the readout no longer depends on W_out
    nlif = NLIFParams(lam=1.0, v_clip=1.0)
    res = unroll_forward([[5.0]], [[10.0]], [[1.0]], LIFParams(lam=1.0), nlif)
    _, go = unroll_backward(res.cache, np.ones((1, 1)))
    assert go[0, 0] == 0.0


# -- properties -----------------------------------------------------------------------


@given(
    v0=st.floats(-2.0, 0.999),
    current=st.floats(-20, 20),
    lam=st.floats(0.01, 1.0),
    theta=st.floats(0.1, 5.0),
)
def test_lif_never_above_threshold(v0, current, lam, theta):
    p = LIFParams(lam=lam, threshold=theta)
    v0 = min(v0, theta * 0.999)
    state, s = lif_step(LayerState(np.array([v0]), np.zeros(1)), [current], p)
    assert state.v[0] < theta
    assert s[0] in (0.0, 1.0)


@given(v0=st.floats(1e-3, 0.999), lam=st.floats(0.01, 0.99))
def test_leak_strictly_decays(v0, lam):
    state, _ = lif_step(LayerState(np.array([v0]), np.zeros(1)), [0.0], LIFParams(lam=lam))
    assert 0.0 <= state.v[0] < v0


@given(v0=st.floats(-10, 10), current=st.floats(-1e3, 1e3), lam=st.floats(0.01, 1.0))
def test_nlif_bounded(v0, current, lam):
    state = nlif_step(LayerState(np.array([v0])), [current], NLIFParams(lam=lam, v_clip=10.0))
    assert abs(state.v[0]) <= 10.0
