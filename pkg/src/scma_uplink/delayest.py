"""Sparse delay estimation from zero-tailed pilots.

During the pilot phase, the samples an RE observes are a superposition of
channel-weighted, integer-shifted copies of the colliding users' pilot
heads.  Collecting every admissible shift of every colliding user's pilot
as columns of a dictionary turns delay estimation into recovery of a
sparse selection vector: one active column per user, at the column index
equal to that user's delay.  The selection vector is recovered per RE with
an l1-regularized least-squares solve, then per-user delay decisions are
made by averaging block magnitudes across the REs the user occupies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .channel import ReceivedFrame
from .core import FactorGraph
from .txchain import DelayProfile

__all__ = [
    "ShiftMatrix",
    "SelectionEstimate",
    "FbOptions",
    "shift_matrix",
    "stack_shift_matrices",
    "soft_threshold",
    "fb_lasso",
    "ls_estimate",
    "extract_delays",
    "delay_mae",
    "estimate_delays",
    "diagnostics_csv",
]

# Relaxation steps this close to the stability endpoints {0, 1.5} are rejected.
STEP_MARGIN = 0.01


@dataclass(frozen=True)
class ShiftMatrix:
    """Stacked per-user shift dictionaries for one resource element.

    ``matrix`` has shape ``(obs_len, n_blocks * block_len)``; the columns
    of block ``i`` are the ``block_len`` admissible integer shifts of user
    ``users[i]``'s pilot head, zero-padded to the observation window.
    """

    matrix: np.ndarray
    users: tuple[int, ...]
    block_len: int

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-D")
        users = tuple(int(u) for u in self.users)
        if any(b <= a for a, b in zip(users, users[1:])):
            raise ValueError("users must be strictly ascending")
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")
        if matrix.shape[1] != len(users) * self.block_len:
            raise ValueError(
                f"matrix has {matrix.shape[1]} columns, expected "
                f"{len(users)} blocks of {self.block_len}"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "users", users)

    @property
    def obs_len(self) -> int:
        return self.matrix.shape[0]

    def block_slice(self, user: int) -> slice:
        """Column slice owned by ``user``."""
        i = self.users.index(user)
        return slice(i * self.block_len, (i + 1) * self.block_len)

    def block(self, user: int) -> np.ndarray:
        return self.matrix[:, self.block_slice(user)]


@dataclass(frozen=True)
class SelectionEstimate:
    """Recovered selection vector for one RE plus solver diagnostics.

    ``coeffs`` holds one complex weight per (user, candidate shift); the
    layout mirrors the ShiftMatrix columns it was solved against.
    """

    coeffs: np.ndarray
    users: tuple[int, ...]
    block_len: int
    iterations: int
    final_objective: float
    final_step: float
    converged: bool
    objective_path: np.ndarray | None = None

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        users = tuple(int(u) for u in self.users)
        if coeffs.shape != (len(users) * self.block_len,):
            raise ValueError("coeffs length must equal n_blocks * block_len")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "users", users)

    def block(self, user: int) -> np.ndarray:
        i = self.users.index(user)
        return self.coeffs[i * self.block_len:(i + 1) * self.block_len]

    def block_magnitudes(self, user: int) -> np.ndarray:
        return np.abs(self.block(user))


@dataclass(frozen=True)
class FbOptions:
    """Forward-backward solver settings.

    ``lam * sigma`` is the weight on the l1 term, matching a noise level
    ``sigma``; ``step_scale`` is the relaxation factor, stable on
    ``(0, 1.5)`` and kept away from the endpoints by ``STEP_MARGIN``.
    """

    lam: float = 1.5
    sigma: float = 1.0
    step_scale: float = 1.0
    stop_tol: float = 1e-6
    max_iters: int = 10_000
    keep_objective_path: bool = False

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if not STEP_MARGIN <= self.step_scale <= 1.5 - STEP_MARGIN:
            raise ValueError(
                f"step_scale must lie in [{STEP_MARGIN}, {1.5 - STEP_MARGIN}]"
            )
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def shift_matrix(pilot_head: np.ndarray, max_delay: int) -> np.ndarray:
    """Dictionary of all integer shifts of one pilot head.

    Column ``d`` of the result is the pilot head prefixed by ``d`` zeros
    and suffixed by ``max_delay - d`` zeros, so the output has shape
    ``(len(pilot_head) + max_delay, max_delay + 1)`` and is Toeplitz.
    """
    head = np.asarray(pilot_head, dtype=np.complex128)
    if head.ndim != 1 or head.size == 0:
        raise ValueError("pilot_head must be a nonempty 1-D array")
    if max_delay < 0:
        raise ValueError("max_delay must be >= 0")
    p = head.size
    out = np.zeros((p + max_delay, max_delay + 1), dtype=np.complex128)
    for d in range(max_delay + 1):
        out[d:d + p, d] = head
    return out


def stack_shift_matrices(blocks: Mapping[int, np.ndarray]) -> ShiftMatrix:
    """Stack per-user shift dictionaries side by side, users ascending."""
    if not blocks:
        raise ValueError("need at least one block")
    users = tuple(sorted(int(u) for u in blocks))
    mats = [np.asarray(blocks[u], dtype=np.complex128) for u in users]
    shapes = {m.shape for m in mats}
    if len(shapes) > 1:
        raise ValueError(f"all blocks must share one shape, got {sorted(shapes)}")
    rows, cols = shapes.pop()
    return ShiftMatrix(np.hstack(mats), users, cols)


def soft_threshold(values, threshold: float):
    """Complex soft-thresholding: shrink magnitudes by ``threshold``.

    Entries with magnitude below the threshold become zero; all others
    keep their phase (or sign, for real input) with the magnitude reduced
    by ``threshold``.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    v = np.asarray(values)
    mag = np.abs(v)
    keep = np.maximum(mag - threshold, 0.0)
    safe = np.where(mag > 0, mag, 1.0)
    return v * (keep / safe)


def _dominant_eig(gram_mat: np.ndarray, tol: float = 1e-10, max_iters: int = 500) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix via power iteration."""
    cols = gram_mat.shape[1]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(cols) + 1j * rng.standard_normal(cols)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iters):
        u = gram_mat @ v
        new_estimate = float(np.vdot(v, u).real)
        norm = np.linalg.norm(u)
        if norm == 0:
            return 0.0
        v = u / norm
        if abs(new_estimate - estimate) <= tol * max(abs(new_estimate), 1.0):
            return new_estimate
        estimate = new_estimate
    return estimate


def _as_matrix(dictionary) -> tuple[np.ndarray, tuple[int, ...], int]:
    if isinstance(dictionary, ShiftMatrix):
        return dictionary.matrix, dictionary.users, dictionary.block_len
    matrix = np.asarray(dictionary, dtype=np.complex128)
    if matrix.ndim != 2:
        raise ValueError("dictionary must be 2-D")
    return matrix, (0,), matrix.shape[1]


def fb_lasso(dictionary, observed, opts: FbOptions | None = None) -> SelectionEstimate:
    """Solve ``min 0.5*||T q - w||^2 + lam*sigma*||q||_1`` by relaxed ISTA.

    The step is the constant ``1/beta`` with ``beta`` the largest squared
    singular value of the dictionary; each iteration applies the gradient
    step, complex soft-thresholding with threshold ``lam*sigma/beta``, and
    the relaxation ``q + step_scale * (prox - q)``.  Iterations stop when
    the update norm drops to ``stop_tol`` or ``max_iters`` is reached.

    Parameters
    ----------
    dictionary : ShiftMatrix or np.ndarray
        Measurement matrix ``T``.
    observed : np.ndarray
        Observation window ``w`` (length = dictionary rows).
    opts : FbOptions
        Solver settings; defaults are suitable for unit-energy pilots.

    Returns
    -------
    SelectionEstimate
        Final iterate with iteration count, final objective value, final
        update norm and the convergence flag.
    """
    opts = opts or FbOptions()
    matrix, users, block_len = _as_matrix(dictionary)
    w = np.asarray(observed, dtype=np.complex128).ravel()
    if w.size != matrix.shape[0]:
        raise ValueError(
            f"observation length {w.size} does not match dictionary rows {matrix.shape[0]}"
        )
    if not np.isfinite(matrix).all() or not np.isfinite(w).all():
        raise ValueError("dictionary and observation must be finite")
    # Work with the normal equations: one Hermitian matvec per iteration.
    gram_mat = matrix.conj().T @ matrix
    proj = matrix.conj().T @ w
    w_energy = float(np.vdot(w, w).real)
    beta = _dominant_eig(gram_mat)
    if beta <= 0:
        raise ValueError("dictionary has zero gain; cannot form a step size")
    weight = opts.lam * opts.sigma
    thresh = weight / beta
    q = np.zeros(matrix.shape[1], dtype=np.complex128)
    gram_q = np.zeros_like(q)
    objective = 0.5 * w_energy
    path: list[float] = []
    iterations = 0
    step_norm = np.inf
    converged = False
    for iterations in range(1, opts.max_iters + 1):
        gradient = gram_q - proj
        proposal = soft_threshold(q - gradient / beta, thresh)
        update = opts.step_scale * (proposal - q)
        q = q + update
        step_norm = float(np.linalg.norm(update))
        gram_q = gram_mat @ q
        fit = 0.5 * (np.vdot(q, gram_q).real - 2.0 * np.vdot(proj, q).real + w_energy)
        objective = float(fit) + weight * float(np.abs(q).sum())
        if opts.keep_objective_path:
            path.append(objective)
        if step_norm <= opts.stop_tol:
            converged = True
            break
    return SelectionEstimate(
        coeffs=q,
        users=users,
        block_len=block_len,
        iterations=iterations,
        final_objective=objective,
        final_step=step_norm,
        converged=converged,
        objective_path=np.asarray(path) if opts.keep_objective_path else None,
    )


def ls_estimate(dictionary, observed) -> SelectionEstimate:
    """Minimum-norm least-squares baseline via the pseudo-inverse."""
    matrix, users, block_len = _as_matrix(dictionary)
    w = np.asarray(observed, dtype=np.complex128).ravel()
    if w.size != matrix.shape[0]:
        raise ValueError(
            f"observation length {w.size} does not match dictionary rows {matrix.shape[0]}"
        )
    if not np.isfinite(matrix).all() or not np.isfinite(w).all():
        raise ValueError("dictionary and observation must be finite")
    q, *_ = np.linalg.lstsq(matrix, w, rcond=None)
    residual = matrix @ q - w
    return SelectionEstimate(
        coeffs=q,
        users=users,
        block_len=block_len,
        iterations=0,
        final_objective=0.5 * float(np.vdot(residual, residual).real),
        final_step=0.0,
        converged=True,
    )


def extract_delays(
    estimates: Sequence[SelectionEstimate],
    graph: FactorGraph,
    max_delay: int,
) -> DelayProfile:
    """Decide each user's delay from its selection blocks across REs.

    For every user the block magnitudes from all occupied REs are
    averaged entrywise and the delay is the argmax; ties resolve to the
    smallest delay.  All-zero blocks therefore yield delay 0.
    """
    if len(estimates) != graph.n_res:
        raise ValueError(f"expected one estimate per RE ({graph.n_res})")
    block_len = max_delay + 1
    delays = np.zeros(graph.n_users, dtype=np.int64)
    for j in range(graph.n_users):
        acc = np.zeros(block_len)
        for k in graph.user_res(j):
            est = estimates[k]
            if j not in est.users:
                raise ValueError(f"RE {k} estimate does not cover user {j}")
            if est.block_len != block_len:
                raise ValueError(
                    f"RE {k} block length {est.block_len} != max_delay+1 ({block_len})"
                )
            acc += est.block_magnitudes(j)
        delays[j] = int(np.argmax(acc))
    return DelayProfile(delays, max_delay)


def delay_mae(estimated: DelayProfile, truth: DelayProfile) -> float:
    """Mean absolute delay error across users."""
    if estimated.n_users != truth.n_users:
        raise ValueError("profiles must cover the same users")
    if estimated.n_users == 0:
        raise ValueError("profiles must be nonempty")
    return float(np.mean(np.abs(estimated.delays - truth.delays)))


def estimate_delays(
    received: ReceivedFrame,
    pilot_heads: np.ndarray,
    graph: FactorGraph,
    max_delay: int,
    opts: FbOptions | None = None,
    method: str = "lasso",
) -> tuple[DelayProfile, list[SelectionEstimate]]:
    """Full pilot-phase pipeline: per-RE solves, then delay decisions.

    Parameters
    ----------
    received : ReceivedFrame
        Superimposed frame; only the first ``P + max_delay`` samples per
        RE (the pilot observation window) are used.
    pilot_heads : np.ndarray
        Nonzero pilot portions, shape ``(n_users, P)``.
    graph : FactorGraph
        Occupancy structure.
    max_delay : int
        Largest admissible delay.
    opts : FbOptions
        Solver settings (``method="lasso"`` only).
    method : str
        ``"lasso"`` for the sparse solver, ``"least_squares"`` for the
        pseudo-inverse baseline.
    """
    if method not in ("lasso", "least_squares"):
        raise ValueError(f"unknown method {method!r}")
    heads = np.asarray(pilot_heads, dtype=np.complex128)
    if heads.ndim != 2 or heads.shape[0] != graph.n_users:
        raise ValueError(f"pilot_heads must have shape ({graph.n_users}, P)")
    window = heads.shape[1] + max_delay
    if received.n_res != graph.n_res:
        raise ValueError("received frame RE count disagrees with graph")
    if received.n_samples < window:
        raise ValueError(
            f"received frame too short: need {window} samples, got {received.n_samples}"
        )
    blocks = {j: shift_matrix(heads[j], max_delay) for j in range(graph.n_users)}
    estimates: list[SelectionEstimate] = []
    for k in range(graph.n_res):
        stacked = stack_shift_matrices({j: blocks[j] for j in graph.re_users(k)})
        w = received.samples[k, :window]
        if method == "lasso":
            estimates.append(fb_lasso(stacked, w, opts))
        else:
            estimates.append(ls_estimate(stacked, w))
    return extract_delays(estimates, graph, max_delay), estimates


def diagnostics_csv(estimates: Sequence[SelectionEstimate]) -> str:
    """Render per-RE solver diagnostics as CSV."""
    lines = ["re_index,iterations,final_objective,converged"]
    for k, est in enumerate(estimates):
        lines.append(
            f"{k},{est.iterations},{est.final_objective!r},{str(est.converged).lower()}"
        )
    return "\n".join(lines) + "\n"
