"""Sparse delay-selection solver and the decision stage."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scma_uplink.channel import draw_channel, transmit
from scma_uplink.core import build_factor_graph
from scma_uplink.delayest import (
    FbOptions,
    SelectionEstimate,
    delay_mae,
    diagnostics_csv,
    estimate_delays,
    extract_delays,
    fb_lasso,
    ls_estimate,
    shift_matrix,
    soft_threshold,
    stack_shift_matrices,
)
from scma_uplink.seeding import spawn_rng
from scma_uplink.txchain import DelayProfile, generate_pilot


def lasso_objective(design, observed, coeffs, weight):
    residual = design @ coeffs - observed
    return 0.5 * np.sum(np.abs(residual) ** 2) + weight * np.sum(np.abs(coeffs))


def test_soft_threshold_real_values():
    assert soft_threshold(np.array([3.0]), 1.0)[0] == pytest.approx(2.0)
    assert soft_threshold(np.array([-3.0]), 1.0)[0] == pytest.approx(-2.0)
    assert soft_threshold(np.array([0.5]), 1.0)[0] == 0.0


def test_soft_threshold_keeps_phase():
    value = 4.0 * np.exp(1j * np.pi / 3)
    out = soft_threshold(np.array([value]), 1.0)[0]
    assert out == pytest.approx(3.0 * np.exp(1j * np.pi / 3))


complex_values = st.complex_numbers(
    min_magnitude=0, max_magnitude=1e6, allow_nan=False, allow_infinity=False
)


@settings(deadline=None)
@given(st.lists(complex_values, min_size=1, max_size=8), st.floats(0, 1e6, allow_nan=False))
def test_soft_threshold_shrinks_magnitude(values, threshold):
    arr = np.array(values)
    out = soft_threshold(arr, threshold)
    mags = np.abs(arr)
    expected = np.maximum(mags - threshold, 0.0)
    assert np.allclose(np.abs(out), expected, atol=1e-9 * max(1.0, mags.max()))
    keep = np.abs(out) > 0
    if keep.any():
        # phases survive shrinkage
        assert np.allclose(np.angle(out[keep]), np.angle(arr[keep]))


def test_shift_matrix_columns_are_shifted_heads():
    head = np.arange(1, 5, dtype=complex)
    mat = shift_matrix(head, 3)
    assert mat.shape == (7, 4)
    for d in range(4):
        col = np.zeros(7, dtype=complex)
        col[d : d + 4] = head
        assert np.array_equal(mat[:, d], col)


def test_stack_orders_users_and_checks_shapes():
    head = np.ones(4, dtype=complex)
    stacked = stack_shift_matrices({3: shift_matrix(head, 2), 1: shift_matrix(head, 2)})
    assert stacked.users == (1, 3)
    assert stacked.matrix.shape == (6, 6)
    assert stacked.block_slice(3) == slice(3, 6)
    with pytest.raises(ValueError):
        stack_shift_matrices({0: np.ones((6, 3)), 1: np.ones((5, 3))})


def test_identity_design_soft_threshold():
    # orthonormal design: the solution is the thresholded projection
    estimate = fb_lasso(np.eye(2), np.array([3.0, 0.1]), FbOptions(lam=1.0, sigma=1.0))
    assert np.allclose(estimate.coeffs, [2.0, 0.0], atol=1e-6)


def test_orthonormal_design_closed_form():
    rng = spawn_rng(10)
    for _ in range(10):
        raw = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
        design, _ = np.linalg.qr(raw)
        observed = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        estimate = fb_lasso(design, observed, FbOptions(lam=0.6, sigma=1.0, stop_tol=1e-10))
        closed = soft_threshold(design.conj().T @ observed, 0.6)
        assert np.allclose(estimate.coeffs, closed, atol=1e-6)


def test_zero_observation_converges_immediately():
    estimate = fb_lasso(np.eye(3), np.zeros(3), FbOptions(lam=1.0, sigma=1.0))
    assert np.abs(estimate.coeffs).max() == 0
    assert estimate.iterations == 1
    assert estimate.converged


def test_objective_monotone_descent():
    rng = spawn_rng(11)
    design = (rng.standard_normal((16, 40)) + 1j * rng.standard_normal((16, 40))) / 4.0
    observed = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    opts = FbOptions(lam=0.5, sigma=1.0, stop_tol=1e-9, keep_objective_path=True)
    estimate = fb_lasso(design, observed, opts)
    path = np.asarray(estimate.objective_path)
    assert path.size == estimate.iterations
    assert np.diff(path).max(initial=0.0) <= 1e-10


def test_fb_never_loses_to_least_squares_reference():
    rng = spawn_rng(12)
    design = (rng.standard_normal((20, 33)) + 1j * rng.standard_normal((20, 33))) / 4.0
    observed = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    weight = 0.4
    fb = fb_lasso(design, observed, FbOptions(lam=weight, sigma=1.0, stop_tol=1e-9))
    ls = ls_estimate(design, observed)
    assert lasso_objective(design, observed, fb.coeffs, weight) <= (
        lasso_objective(design, observed, ls.coeffs, weight) + 1e-9
    )


def test_relaxed_step_still_converges():
    rng = spawn_rng(13)
    design = (rng.standard_normal((10, 25)) + 1j * rng.standard_normal((10, 25))) / 3.0
    observed = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    plain = fb_lasso(design, observed, FbOptions(lam=0.5, sigma=1.0, stop_tol=1e-10))
    relaxed = fb_lasso(design, observed, FbOptions(lam=0.5, sigma=1.0, stop_tol=1e-10, step_scale=1.3))
    assert np.allclose(plain.coeffs, relaxed.coeffs, atol=1e-6)


def test_fb_options_validation():
    with pytest.raises(ValueError):
        FbOptions(lam=-0.1, sigma=1.0)
    with pytest.raises(ValueError):
        FbOptions(lam=1.0, sigma=1.0, step_scale=1.6)
    with pytest.raises(ValueError):
        FbOptions(lam=1.0, sigma=1.0, stop_tol=0.0)


def test_ls_estimate_exact_on_square_system():
    rng = spawn_rng(14)
    design = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    truth = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    estimate = ls_estimate(design, design @ truth)
    assert np.allclose(estimate.coeffs, truth, atol=1e-8)
    assert estimate.iterations == 0 and estimate.converged


def _manual_estimate(users, block_len, magnitudes):
    coeffs = np.concatenate([np.asarray(m, dtype=complex) for m in magnitudes])
    return SelectionEstimate(
        coeffs=coeffs,
        users=tuple(users),
        block_len=block_len,
        iterations=1,
        final_objective=0.0,
        final_step=0.0,
        converged=True,
    )


def test_extract_delays_averages_and_breaks_ties_low():
    graph = build_factor_graph(4, 6)
    block = 3
    estimates = []
    for k in range(graph.n_res):
        users = graph.re_users(k)
        mags = []
        for j in users:
            row = np.zeros(block)
            if j == 0:
                row[:] = [0.5, 0.5, 0.0]  # tie between delays 0 and 1
            else:
                row[2] = 1.0
            mags.append(row)
        estimates.append(_manual_estimate(users, block, mags))
    profile = extract_delays(estimates, graph, max_delay=2)
    assert profile[0] == 0  # first maximum wins
    assert all(profile[j] == 2 for j in range(1, 6))


def test_extract_delays_requires_full_coverage():
    graph = build_factor_graph(4, 6)
    est = _manual_estimate((0,), 3, [np.ones(3)])
    with pytest.raises(ValueError):
        extract_delays([est] * 4, graph, max_delay=2)


def test_delay_mae():
    a = DelayProfile((0, 2, 4), 5)
    b = DelayProfile((1, 2, 1), 5)
    assert delay_mae(a, b) == pytest.approx(4.0 / 3.0)
    with pytest.raises(ValueError):
        delay_mae(a, DelayProfile((0, 1), 5))


def _noiseless_scene(seed, head_len=10, max_delay=6):
    graph = build_factor_graph(4, 6)
    rng = spawn_rng(seed)
    truth = DelayProfile(
        tuple(int(v) for v in rng.integers(0, max_delay + 1, 6)), max_delay
    )
    pilots = np.stack([generate_pilot(head_len, max_delay, 1.0, rng) for _ in range(6)])
    frames = [{k: pilots[j] for k in graph.user_res(j)} for j in range(6)]
    channel = draw_channel("awgn", graph, 0.0, rng)
    received = transmit(frames, truth, channel, rng)
    return graph, truth, pilots[:, :head_len], received


def test_estimate_delays_noiseless_exact():
    graph, truth, heads, received = _noiseless_scene(20)
    opts = FbOptions(lam=1e-3, sigma=1.0)
    profile, estimates = estimate_delays(received, heads, graph, truth.max_delay, opts)
    assert np.array_equal(profile.delays, truth.delays)
    assert len(estimates) == graph.n_res
    assert all(e.converged for e in estimates)


def test_estimate_delays_least_squares_path():
    graph, truth, heads, received = _noiseless_scene(21)
    profile, estimates = estimate_delays(
        received, heads, graph, truth.max_delay, method="least_squares"
    )
    assert profile.n_users == 6
    assert all(e.iterations == 0 for e in estimates)


def test_estimate_delays_rejects_short_frames():
    graph, truth, heads, received = _noiseless_scene(22)
    clipped = received.samples[:, : heads.shape[1] + truth.max_delay - 1]
    from scma_uplink.channel import ReceivedFrame

    with pytest.raises(ValueError):
        estimate_delays(ReceivedFrame(clipped), heads, graph, truth.max_delay)


def test_diagnostics_csv_layout():
    _, truth, heads, received = _noiseless_scene(23)
    graph = build_factor_graph(4, 6)
    _, estimates = estimate_delays(received, heads, graph, truth.max_delay)
    text = diagnostics_csv(estimates)
    lines = text.strip().splitlines()
    assert lines[0] == "re_index,iterations,final_objective,converged"
    assert len(lines) == graph.n_res + 1
    assert lines[1].startswith("0,")
