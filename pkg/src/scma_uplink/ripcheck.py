"""Empirical checks of the sparse-recovery guarantees.

The delay dictionary of one RE stacks Toeplitz shift blocks of the
colliding users' pilot heads.  Recovery guarantees for the LASSO step
rest on that dictionary acting as a near-isometry on sparse vectors.
This module verifies the supporting machinery numerically: Gram-matrix
structure, Gershgorin eigenvalue containment, concentration tails of
pilot norms and cross-correlations, a closed-form bound on the
probability that the restricted-isometry constant exceeds a target, and
a direct exhaustive estimate of that constant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .delayest import ShiftMatrix, shift_matrix, stack_shift_matrices

__all__ = [
    "GramReport",
    "GershgorinReport",
    "RipEstimate",
    "TailReport",
    "RipFailureReport",
    "gram",
    "gershgorin_check",
    "rip_delta_exhaustive",
    "rip_failure_bound",
    "tail_bound_mc",
    "rip_failure_mc",
]

SUBSET_LIMIT = 1_000_000
GERSHGORIN_TOL = 1e-9


def _as_array(dictionary) -> np.ndarray:
    if isinstance(dictionary, ShiftMatrix):
        return dictionary.matrix
    arr = np.asarray(dictionary, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError("dictionary must be 2-D")
    return arr


@dataclass(frozen=True)
class GramReport:
    """Gram matrix of a dictionary plus summary structure numbers."""

    matrix: np.ndarray
    diag_deviation: float
    max_offdiag: float
    eig_min: float
    eig_max: float


def gram(dictionary) -> GramReport:
    """Hermitian Gram matrix ``T^H T`` with diagonal/off-diagonal summary."""
    arr = _as_array(dictionary)
    g = arr.conj().T @ arr
    skew = np.abs(g - g.conj().T).max(initial=0.0)
    if skew > 1e-12 * max(1.0, np.abs(g).max(initial=0.0)):
        raise AssertionError("Gram matrix lost Hermitian symmetry")
    g = (g + g.conj().T) / 2.0
    off = g - np.diag(np.diag(g))
    eigs = np.linalg.eigvalsh(g)
    g.setflags(write=False)
    return GramReport(
        matrix=g,
        diag_deviation=float(np.abs(np.diag(g).real - 1.0).max(initial=0.0)),
        max_offdiag=float(np.abs(off).max(initial=0.0)),
        eig_min=float(eigs.min()),
        eig_max=float(eigs.max()),
    )


@dataclass(frozen=True)
class GershgorinReport:
    """Eigenvalues of a Hermitian matrix against its Gershgorin discs."""

    contained: bool
    max_violation: float
    eigenvalues: np.ndarray
    centers: np.ndarray
    radii: np.ndarray


def gershgorin_check(matrix) -> GershgorinReport:
    """Check that every eigenvalue lies inside some Gershgorin disc.

    Discs are centered at the diagonal entries with radii equal to the
    off-diagonal absolute row sums.  ``max_violation`` is the largest
    distance from an eigenvalue to its nearest disc (0 when contained);
    containment allows ``GERSHGORIN_TOL`` of numerical slack.
    """
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    centers = np.diag(m)
    radii = np.abs(m).sum(axis=1) - np.abs(centers)
    eigs = np.linalg.eigvals(m)
    dist = np.abs(eigs[:, None] - centers[None, :]) - radii[None, :]
    worst = float(np.maximum(dist.min(axis=1), 0.0).max(initial=0.0))
    return GershgorinReport(
        contained=worst <= GERSHGORIN_TOL,
        max_violation=worst,
        eigenvalues=eigs,
        centers=centers,
        radii=radii,
    )


@dataclass(frozen=True)
class RipEstimate:
    """Exhaustive restricted-isometry constant over fixed-size supports."""

    sparsity: int
    delta_hat: float
    n_subsets: int
    target: float | None = None
    passed: bool | None = None


def rip_delta_exhaustive(dictionary, sparsity: int, target: float | None = None) -> RipEstimate:
    """Largest spectral deviation of any ``sparsity``-column Gram from identity.

    Enumerates every column subset of the given size; for each, the
    eigenvalues of the subset Gram are compared to 1 and the worst
    deviation across all subsets is returned.  Refuses instances with more
    than ``SUBSET_LIMIT`` subsets.
    """
    arr = _as_array(dictionary)
    n_cols = arr.shape[1]
    if not 1 <= sparsity <= n_cols:
        raise ValueError(f"sparsity must lie in [1, {n_cols}]")
    count = math.comb(n_cols, sparsity)
    if count > SUBSET_LIMIT:
        raise ValueError(f"{count} subsets exceed the exhaustive limit {SUBSET_LIMIT}")
    g = arr.conj().T @ arr
    delta_hat = 0.0
    for idx in itertools.combinations(range(n_cols), sparsity):
        sub = g[np.ix_(idx, idx)]
        eigs = np.linalg.eigvalsh(sub)
        delta_hat = max(delta_hat, float(np.abs(eigs - 1.0).max()))
    passed = None if target is None else delta_hat <= target
    return RipEstimate(
        sparsity=sparsity,
        delta_hat=delta_hat,
        n_subsets=count,
        target=target,
        passed=passed,
    )


def rip_failure_bound(
    n_pilot: int,
    re_degree: int,
    sparsity: int,
    delta: float,
    clamp: bool = True,
) -> float:
    """Closed-form bound on ``Pr[restricted-isometry constant > delta]``.

    For a dictionary stacking ``re_degree`` shift blocks of independent
    zero-tailed Gaussian pilots with ``n_pilot`` nonzero entries, the
    failure probability at sparsity ``sparsity`` is at most::

        (4*eta*(eta+1)*(n_pilot-1) + 2*eta**2)
            * exp(-n_pilot * delta**2 / (45 * (sparsity-1)**2))

    with ``eta = re_degree``.  The bound exceeds 1 (vacuous) unless
    ``n_pilot`` is large; ``clamp`` caps the return value at 1.
    """
    if n_pilot < 2:
        raise ValueError("n_pilot must be >= 2")
    if re_degree < 1:
        raise ValueError("re_degree must be >= 1")
    if sparsity < 2:
        raise ValueError("sparsity must be >= 2")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    eta = re_degree
    coeff = 4.0 * eta * (eta + 1) * (n_pilot - 1) + 2.0 * eta * eta
    value = coeff * math.exp(-n_pilot * delta ** 2 / (45.0 * (sparsity - 1) ** 2))
    return min(1.0, value) if clamp else value


@dataclass(frozen=True)
class TailReport:
    """Monte-Carlo tail frequency against its closed-form bound."""

    kind: str
    empirical: float
    bound: float
    margin: float
    violated: bool
    trials: int
    threshold: float


def tail_bound_mc(
    kind: str,
    n_terms: int,
    t: float,
    trials: int,
    rng: np.random.Generator,
    component_variance: float | None = None,
) -> TailReport:
    """Estimate a concentration-tail probability and compare to its bound.

    ``kind="norm"`` checks the squared-norm tail of a circular Gaussian
    vector: the event ``|sum |z_i|^2 - 2*P*var| >= 4*var*sqrt(2*P*t)``
    with bound ``2*exp(-t)`` (``t`` is the exponent parameter).

    ``kind="cross"`` checks the cross-correlation tail of two independent
    circular Gaussian vectors: the event ``|sum conj(z_i)*w_i| >= t`` with
    bound ``4*exp(-t^2 / (16*var*(2*P*var + t/4)))`` (``t`` is the
    threshold itself).

    ``var`` is the per-component variance; it defaults to
    ``1/(2*n_terms)``, the pilot model at unit energy.  Requires at least
    10_000 trials; the violation flag allows a three-sigma binomial margin
    above the bound.
    """
    if kind not in ("norm", "cross"):
        raise ValueError(f"unknown kind {kind!r}")
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if trials < 10_000:
        raise ValueError("need at least 10_000 trials for a stable tail estimate")
    if not t > 0:
        raise ValueError("t must be positive")
    var = 1.0 / (2.0 * n_terms) if component_variance is None else component_variance
    if not var > 0:
        raise ValueError("component_variance must be positive")
    scale = math.sqrt(var)
    if kind == "norm":
        threshold = 4.0 * var * math.sqrt(2.0 * n_terms * t)
        center = 2.0 * n_terms * var
        bound = 2.0 * math.exp(-t)
    else:
        threshold = t
        bound = 4.0 * math.exp(-t * t / (16.0 * var * (2.0 * n_terms * var + t / 4.0)))
    hits = 0
    chunk = 20_000
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        z = scale * (
            rng.standard_normal((size, n_terms)) + 1j * rng.standard_normal((size, n_terms))
        )
        if kind == "norm":
            stat = np.abs((np.abs(z) ** 2).sum(axis=1) - center)
        else:
            w = scale * (
                rng.standard_normal((size, n_terms))
                + 1j * rng.standard_normal((size, n_terms))
            )
            stat = np.abs((z.conj() * w).sum(axis=1))
        hits += int((stat >= threshold).sum())
        done += size
    empirical = hits / trials
    capped = min(bound, 1.0)
    margin = 3.0 * math.sqrt(capped * (1.0 - capped) / trials)
    return TailReport(
        kind=kind,
        empirical=empirical,
        bound=bound,
        margin=margin,
        violated=empirical > capped + margin,
        trials=trials,
        threshold=threshold,
    )


@dataclass(frozen=True)
class RipFailureReport:
    """Observed isometry-failure rate against the closed-form bound."""

    failure_rate: float
    bound: float
    raw_bound: float
    verdict: str
    draws: int
    delta: float
    sparsity: int


def rip_failure_mc(
    n_pilot: int,
    max_delay: int,
    re_degree: int,
    sparsity: int,
    delta: float,
    draws: int,
    rng: np.random.Generator,
) -> RipFailureReport:
    """Sample dictionaries and count restricted-isometry failures.

    Each draw builds the stacked shift dictionary of ``re_degree`` fresh
    unit-energy pilots, estimates the isometry constant exhaustively and
    counts a failure when it exceeds ``delta``.  The verdict is
    ``"vacuous"`` when the unclamped bound is >= 1, otherwise ``"pass"``
    or ``"fail"`` with a three-sigma binomial margin.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    if max_delay < 0:
        raise ValueError("max_delay must be >= 0")
    failures = 0
    var = 1.0 / (2.0 * n_pilot)
    scale = math.sqrt(var)
    for _ in range(draws):
        blocks = {}
        for u in range(re_degree):
            head = scale * (
                rng.standard_normal(n_pilot) + 1j * rng.standard_normal(n_pilot)
            )
            blocks[u] = shift_matrix(head, max_delay)
        stacked = stack_shift_matrices(blocks)
        estimate = rip_delta_exhaustive(stacked, sparsity)
        if estimate.delta_hat > delta:
            failures += 1
    rate = failures / draws
    raw = rip_failure_bound(n_pilot, re_degree, sparsity, delta, clamp=False)
    bound = min(1.0, raw)
    if raw >= 1.0:
        verdict = "vacuous"
    else:
        margin = 3.0 * math.sqrt(bound * (1.0 - bound) / draws)
        verdict = "pass" if rate <= bound + margin else "fail"
    return RipFailureReport(
        failure_rate=rate,
        bound=bound,
        raw_bound=raw,
        verdict=verdict,
        draws=draws,
        delta=delta,
        sparsity=sparsity,
    )
