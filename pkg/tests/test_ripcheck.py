"""Gram spectra, Gershgorin discs, isometry constants and tail bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scma_uplink.ripcheck import (
    gershgorin_check,
    gram,
    rip_delta_exhaustive,
    rip_failure_bound,
    rip_failure_mc,
    tail_bound_mc,
)
from scma_uplink.seeding import spawn_rng


def test_gram_of_orthonormal_columns():
    report = gram(np.eye(5))
    assert report.diag_deviation == pytest.approx(0.0, abs=1e-12)
    assert report.max_offdiag == pytest.approx(0.0, abs=1e-12)
    assert report.eig_min == pytest.approx(1.0)
    assert report.eig_max == pytest.approx(1.0)


def test_gram_is_hermitian_and_ordered():
    rng = spawn_rng(0)
    mat = rng.standard_normal((20, 8)) + 1j * rng.standard_normal((20, 8))
    report = gram(mat)
    assert np.allclose(report.matrix, report.matrix.conj().T)
    assert report.eig_min <= report.eig_max


def test_gershgorin_two_by_two():
    report = gershgorin_check(np.array([[1.0, 0.3], [0.3, 1.0]]))
    assert report.contained
    assert np.allclose(sorted(report.eigenvalues), [0.7, 1.3])
    assert np.allclose(report.radii, [0.3, 0.3])


@settings(deadline=None, max_examples=50)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_gershgorin_holds_for_random_hermitian(size, seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    hermitian = (raw + raw.conj().T) / 2
    assert gershgorin_check(hermitian).contained


def test_rip_delta_zero_for_orthonormal():
    estimate = rip_delta_exhaustive(np.eye(6), sparsity=2)
    assert estimate.delta_hat == pytest.approx(0.0, abs=1e-12)
    assert estimate.n_subsets == 15


def test_rip_delta_detects_duplicate_column():
    col = np.ones(4) / 2.0
    dictionary = np.stack([col, col, np.array([1.0, 0, 0, 0])], axis=1)
    estimate = rip_delta_exhaustive(dictionary, sparsity=2)
    # duplicated unit columns give submatrix eigenvalues {0, 2}
    assert estimate.delta_hat == pytest.approx(1.0)


def test_rip_delta_target_flag():
    assert rip_delta_exhaustive(np.eye(4), 2, target=0.5).passed
    dup = np.stack([np.ones(3) / math.sqrt(3)] * 2, axis=1)
    assert not rip_delta_exhaustive(dup, 2, target=0.5).passed


def test_rip_failure_bound_values():
    # coefficient 4*eta*(eta+1)*(P-1) + 2*eta^2, decay exp(-P*delta^2/45)
    raw = rip_failure_bound(1000, 3, 2, 0.5, clamp=False)
    assert raw == pytest.approx(47970 * math.exp(-1000 * 0.25 / 45.0), rel=1e-12)
    assert rip_failure_bound(1000, 3, 2, 0.5) == 1.0  # clamped probability
    tiny = rip_failure_bound(10_000, 3, 2, 0.5)
    assert tiny == pytest.approx(479970 * math.exp(-10_000 * 0.25 / 45.0), rel=1e-9)
    assert tiny < 1e-18


def test_rip_failure_bound_preconditions():
    with pytest.raises(ValueError):
        rip_failure_bound(1, 3, 2, 0.5)
    with pytest.raises(ValueError):
        rip_failure_bound(1000, 0, 2, 0.5)
    with pytest.raises(ValueError):
        rip_failure_bound(1000, 3, 1, 0.5)
    with pytest.raises(ValueError):
        rip_failure_bound(1000, 3, 2, 1.0)


def test_norm_tail_bound_holds():
    report = tail_bound_mc("norm", 400, 4.0, 20_000, spawn_rng(1))
    assert report.bound == pytest.approx(2 * math.exp(-4.0))
    assert report.empirical <= report.bound + report.margin
    assert not report.violated


def test_cross_tail_bound_holds():
    report = tail_bound_mc("cross", 400, 0.5, 20_000, spawn_rng(2))
    assert report.empirical <= report.bound + report.margin
    assert not report.violated


def test_tail_bound_rejects_small_runs():
    with pytest.raises(ValueError):
        tail_bound_mc("norm", 400, 4.0, 5_000, spawn_rng(3))
    with pytest.raises(ValueError):
        tail_bound_mc("median", 400, 4.0, 20_000, spawn_rng(4))


def test_rip_failure_mc_modes():
    rng = spawn_rng(5)
    report = rip_failure_mc(1500, 3, 3, 2, 0.6, draws=20, rng=rng)
    assert report.verdict in ("pass", "fail")
    assert report.bound < 1.0
    vacuous = rip_failure_mc(60, 3, 3, 2, 0.3, draws=5, rng=spawn_rng(6))
    assert vacuous.verdict == "vacuous"
