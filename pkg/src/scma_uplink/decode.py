"""Multiuser detection for delay-aligned frames.

Once delays are known (estimated or genie), every received sample is a
superposition of at most one symbol per user.  Samples overlapping the
pilot phase of some users treat those users' contributions as known and
subtract them; the remaining active users' symbols are detected jointly.
Three detectors share one interface: max-log message passing on the
per-sample factor graph, a parallel sampling decoder, and an exhaustive
max-log oracle for verification at small sizes.

All detectors accept a single sample vector ``(n_res,)`` or a batch
``(batch, n_res)`` of samples that share the same active-user structure,
and return per-user, per-bit log-likelihood ratios with the convention
``llr >= 0  <=>  bit 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelRealization, ReceivedFrame
from .core import CodebookSet, FactorGraph, index_to_bits
from .seeding import derive_seed
from .txchain import DelayProfile

__all__ = [
    "AlignmentSchedule",
    "SampleContext",
    "DetectionResult",
    "McmcParams",
    "LlrTable",
    "align",
    "active_context",
    "full_context",
    "log_mpa",
    "map_oracle",
    "mcmc_decode",
    "decode_frame",
    "llrs_to_bits",
    "llr_csv",
    "indices_to_bits",
]

ORACLE_COMBO_LIMIT = 2 ** 20


@dataclass(frozen=True)
class AlignmentSchedule:
    """Which (user, frame position) pairs hit each received sample.

    ``entries[n]`` lists ``(user, position)`` pairs, user-ascending, where
    ``position`` indexes the user's concatenated frame: positions below
    ``pilot_len`` are pilot samples, the rest are data symbols.
    """

    pilot_len: int
    data_len: int
    max_delay: int
    delays: tuple[int, ...]
    entries: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def n_samples(self) -> int:
        return len(self.entries)

    def data_entries(self, n: int) -> tuple[tuple[int, int], ...]:
        """Active ``(user, data_symbol)`` pairs at sample ``n``."""
        return tuple(
            (j, t - self.pilot_len) for j, t in self.entries[n] if t >= self.pilot_len
        )

    def pilot_entries(self, n: int) -> tuple[tuple[int, int], ...]:
        """Active ``(user, pilot_position)`` pairs at sample ``n``."""
        return tuple((j, t) for j, t in self.entries[n] if t < self.pilot_len)


def align(
    delays: DelayProfile,
    pilot_len: int,
    data_len: int,
    graph: FactorGraph,
) -> AlignmentSchedule:
    """Build the sample-by-sample activity schedule for given delays.

    User ``j`` is active at sample ``n`` iff ``delay_j <= n <
    delay_j + pilot_len + data_len``; its frame position there is
    ``n - delay_j``.
    """
    if delays.n_users != graph.n_users:
        raise ValueError("delay profile size disagrees with graph")
    if pilot_len < 1 or data_len < 0:
        raise ValueError("need pilot_len >= 1 and data_len >= 0")
    frame_len = pilot_len + data_len
    total = frame_len + delays.max_delay
    entries = []
    for n in range(total):
        active = tuple(
            (j, n - delays[j])
            for j in range(delays.n_users)
            if delays[j] <= n < delays[j] + frame_len
        )
        entries.append(active)
    return AlignmentSchedule(
        pilot_len=pilot_len,
        data_len=data_len,
        max_delay=delays.max_delay,
        delays=tuple(int(d) for d in delays.delays),
        entries=tuple(entries),
    )


@dataclass(frozen=True)
class SampleContext:
    """Detection context shared by a batch of samples.

    Attributes
    ----------
    users : tuple of int
        Users whose symbols are unknown, ascending.
    effective : np.ndarray
        Channel-weighted candidate codewords, shape
        ``(n_active, size, n_res)``.
    known : np.ndarray
        Already-known contribution (e.g. pilot overlap) to subtract,
        shape ``(n_res,)`` or ``(batch, n_res)``.
    supports : np.ndarray
        Boolean occupancy rows of the active users,
        shape ``(n_active, n_res)``.
    """

    users: tuple[int, ...]
    effective: np.ndarray
    known: np.ndarray
    supports: np.ndarray


def active_context(
    users: Sequence[int],
    known: np.ndarray,
    codebooks: CodebookSet,
    channel: ChannelRealization,
) -> SampleContext:
    """Context for an explicit unknown-user set and known contribution."""
    users = tuple(sorted(int(u) for u in users))
    sel = list(users)
    effective = codebooks.codewords[sel] * channel.coefficients.T[sel][:, None, :]
    supports = codebooks.graph.occupancy.T[sel].astype(bool)
    return SampleContext(
        users=users,
        effective=effective,
        known=np.asarray(known, dtype=np.complex128),
        supports=supports,
    )


def full_context(codebooks: CodebookSet, channel: ChannelRealization) -> SampleContext:
    """Synchronous context: every user unknown, nothing known."""
    return active_context(
        range(codebooks.n_users),
        np.zeros(codebooks.n_res, dtype=np.complex128),
        codebooks,
        channel,
    )


@dataclass(frozen=True)
class DetectionResult:
    """Per-user bit LLRs (and max-log symbol scores when available)."""

    users: tuple[int, ...]
    llrs: np.ndarray
    symbol_scores: np.ndarray | None = None


@dataclass(frozen=True)
class McmcParams:
    """Sampling-decoder settings: sweeps per chain, parallel chains,
    mixing temperature, and the chain seed."""

    sweeps: int = 15
    chains: int = 4
    mixing: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not self.mixing > 0:
            raise ValueError("mixing must be positive")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def _bit_splits(size: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Codeword indices with bit i equal to 0 resp. 1, MSB first."""
    width = size.bit_length() - 1
    m = np.arange(size)
    out = []
    for i in range(width):
        shift = width - 1 - i
        bit = (m >> shift) & 1
        out.append((np.flatnonzero(bit == 0), np.flatnonzero(bit == 1)))
    return out


def _as_batch(y) -> tuple[np.ndarray, bool]:
    arr = np.asarray(y, dtype=np.complex128)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError("y must be (n_res,) or (batch, n_res)")


def _scores_to_llrs(scores: np.ndarray) -> np.ndarray:
    """Max-log bit LLRs from per-user symbol scores ``(batch, U, size)``."""
    size = scores.shape[-1]
    splits = _bit_splits(size)
    out = np.empty(scores.shape[:-1] + (len(splits),))
    for i, (zeros, ones) in enumerate(splits):
        out[..., i] = scores[..., zeros].max(-1) - scores[..., ones].max(-1)
    return out


def _empty_result(batch: int, single: bool) -> DetectionResult:
    llrs = np.zeros((batch, 0, 0))
    scores = np.zeros((batch, 0, 0))
    if single:
        llrs, scores = llrs[0], scores[0]
    return DetectionResult(users=(), llrs=llrs, symbol_scores=scores)


def _metric_scale(noise_variance: float) -> float:
    # Max-log decisions are invariant to the 1/sigma^2 factor; substitute
    # 1 at zero noise instead of dividing by zero.
    if noise_variance < 0:
        raise ValueError("noise_variance must be >= 0")
    return 1.0 / noise_variance if noise_variance > 0 else 1.0


def log_mpa(
    y,
    context: SampleContext,
    noise_variance: float,
    iterations: int = 6,
) -> DetectionResult:
    """Max-log message passing on the per-sample factor graph.

    RE nodes send each active user the best-case metric of every symbol,
    maximizing over the other colliding users' symbols; user nodes reply
    with the sum of their other REs' messages.  A flooding schedule runs
    ``iterations`` rounds, after which per-user scores sum all incoming RE
    messages.  Exact on cycle-free per-sample graphs once ``iterations``
    reaches the graph diameter.

    Parameters
    ----------
    y : np.ndarray
        ``(n_res,)`` or ``(batch, n_res)`` received samples.
    context : SampleContext
        Active users, channel-weighted candidates and known part.
    noise_variance : float
        Total complex noise variance; 0 selects a fixed metric scale.
    iterations : int
        Message-passing rounds, >= 1.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    batch, single = _as_batch(y)
    n_active = len(context.users)
    if n_active == 0:
        return _empty_result(batch.shape[0], single)
    scale = _metric_scale(noise_variance)
    resid = batch - np.atleast_2d(context.known)
    n_batch, n_res = resid.shape
    size = context.effective.shape[1]
    eff = context.effective
    re_members = [np.flatnonzero(context.supports[:, k]) for k in range(n_res)]
    user_res = [np.flatnonzero(context.supports[u]) for u in range(n_active)]

    # Pre-enumerate, per (RE, target user), the joint symbol choices of the
    # other users on that RE together with their summed contribution.
    plans: dict[tuple[int, int], tuple[list[int], np.ndarray, np.ndarray]] = {}
    for k in range(n_res):
        for u in re_members[k]:
            others = [int(o) for o in re_members[k] if o != u]
            if others:
                grids = np.meshgrid(*([np.arange(size)] * len(others)), indexing="ij")
                midx = np.stack([g.ravel() for g in grids], axis=1)
                contrib = np.zeros(midx.shape[0], dtype=np.complex128)
                for i, o in enumerate(others):
                    contrib += eff[o, midx[:, i], k]
            else:
                midx = np.zeros((1, 0), dtype=np.int64)
                contrib = np.zeros(1, dtype=np.complex128)
            plans[(k, int(u))] = (others, midx, contrib)

    re_msgs = {key: np.zeros((n_batch, size)) for key in plans}
    user_msgs = {key[::-1]: np.zeros((n_batch, size)) for key in plans}
    for _ in range(iterations):
        new_re_msgs = {}
        for (k, u), (others, midx, contrib) in plans.items():
            gap = resid[:, None, k] - eff[u, :, k][None, :]
            delta = gap[:, :, None] - contrib[None, None, :]
            metric = -scale * (delta.real ** 2 + delta.imag ** 2)
            if others:
                incoming = user_msgs[(others[0], k)][:, midx[:, 0]]
                for i, o in enumerate(others[1:], start=1):
                    incoming = incoming + user_msgs[(o, k)][:, midx[:, i]]
                metric = metric + incoming[:, None, :]
            new_re_msgs[(k, u)] = metric.max(axis=2)
        re_msgs = new_re_msgs
        for u in range(n_active):
            for k in user_res[u]:
                total = np.zeros((n_batch, size))
                for k2 in user_res[u]:
                    if k2 != k:
                        total = total + re_msgs[(int(k2), u)]
                total = total - total.max(axis=1, keepdims=True)
                user_msgs[(u, int(k))] = total

    scores = np.zeros((n_batch, n_active, size))
    for u in range(n_active):
        for k in user_res[u]:
            scores[:, u, :] += re_msgs[(int(k), u)]
    llrs = _scores_to_llrs(scores)
    if single:
        llrs, scores = llrs[0], scores[0]
    return DetectionResult(users=context.users, llrs=llrs, symbol_scores=scores)


def map_oracle(y, context: SampleContext, noise_variance: float) -> DetectionResult:
    """Exhaustive max-log detector (ground truth at small sizes).

    Enumerates every joint symbol combination, scores each against the
    received sample and maximizes per bit value.  Refuses instances with
    more than ``ORACLE_COMBO_LIMIT`` combinations.
    """
    batch, single = _as_batch(y)
    n_active = len(context.users)
    if n_active == 0:
        return _empty_result(batch.shape[0], single)
    scale = _metric_scale(noise_variance)
    resid = batch - np.atleast_2d(context.known)
    n_batch, n_res = resid.shape
    size = context.effective.shape[1]
    total = size ** n_active
    if total > ORACLE_COMBO_LIMIT:
        raise ValueError(
            f"{total} joint combinations exceed the oracle limit {ORACLE_COMBO_LIMIT}"
        )
    combo_idx = np.indices((size,) * n_active).reshape(n_active, -1).T
    contrib = np.zeros((total, n_res), dtype=np.complex128)
    for u in range(n_active):
        contrib += context.effective[u, combo_idx[:, u], :]
    joint = np.empty((n_batch, total))
    chunk = max(1, min(total, (1 << 22) // max(1, n_batch * n_res)))
    for c0 in range(0, total, chunk):
        delta = resid[:, None, :] - contrib[None, c0:c0 + chunk, :]
        joint[:, c0:c0 + chunk] = -scale * (delta.real ** 2 + delta.imag ** 2).sum(axis=2)
    scores = np.empty((n_batch, n_active, size))
    for u in range(n_active):
        for m in range(size):
            scores[:, u, m] = joint[:, combo_idx[:, u] == m].max(axis=1)
    llrs = _scores_to_llrs(scores)
    if single:
        llrs, scores = llrs[0], scores[0]
    return DetectionResult(users=context.users, llrs=llrs, symbol_scores=scores)


def mcmc_decode(
    y,
    context: SampleContext,
    noise_variance: float,
    params: McmcParams | None = None,
) -> DetectionResult:
    """Parallel Gibbs-sampling detector with forced-bit score tracking.

    Runs ``params.chains`` independent chains for ``params.sweeps`` sweeps.
    Each sweep revisits every active user: conditioned on the others'
    current symbols, per-candidate metrics are computed, the next symbol is
    drawn from the tempered softmax (temperature ``params.mixing``), and
    for every bit of the drawn symbol the metrics of the bit forced to 0
    and to 1 update running maxima.  Bit LLRs are the differences of those
    maxima across all chains and sweeps.

    Requires ``noise_variance > 0`` (the sampling temperature is otherwise
    undefined).
    """
    params = params or McmcParams()
    if not noise_variance > 0:
        raise ValueError("mcmc_decode requires noise_variance > 0")
    batch, single = _as_batch(y)
    n_active = len(context.users)
    if n_active == 0:
        return _empty_result(batch.shape[0], single)
    resid = batch - np.atleast_2d(context.known)
    n_batch, n_res = resid.shape
    size = context.effective.shape[1]
    width = size.bit_length() - 1
    scale = 1.0 / noise_variance
    eff = context.effective
    rows = np.arange(n_batch)
    best_zero = np.full((n_batch, n_active, width), -np.inf)
    best_one = np.full((n_batch, n_active, width), -np.inf)
    shifts = [width - 1 - i for i in range(width)]
    for chain in range(params.chains):
        rng = np.random.default_rng(np.random.SeedSequence((params.seed, chain)))
        state = rng.integers(0, size, size=(n_batch, n_active))
        signal = np.zeros((n_batch, n_res), dtype=np.complex128)
        for u in range(n_active):
            signal += eff[u][state[:, u], :]
        for _ in range(params.sweeps):
            for u in range(n_active):
                signal -= eff[u][state[:, u], :]
                gap = resid - signal
                delta = gap[:, None, :] - eff[u][None, :, :]
                gamma = -scale * (delta.real ** 2 + delta.imag ** 2).sum(axis=2)
                gumbel = rng.gumbel(size=(n_batch, size))
                drawn = np.argmax(gamma / params.mixing + gumbel, axis=1)
                for i, shift in enumerate(shifts):
                    mask = 1 << shift
                    forced_zero = drawn & ~mask
                    forced_one = drawn | mask
                    np.maximum(
                        best_zero[:, u, i], gamma[rows, forced_zero],
                        out=best_zero[:, u, i],
                    )
                    np.maximum(
                        best_one[:, u, i], gamma[rows, forced_one],
                        out=best_one[:, u, i],
                    )
                state[:, u] = drawn
                signal += eff[u][drawn, :]
    llrs = best_zero - best_one
    if single:
        llrs = llrs[0]
    return DetectionResult(users=context.users, llrs=llrs)


@dataclass(frozen=True)
class LlrTable:
    """Bit LLRs for a whole frame, shape ``(n_users, data_len, bits)``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError("values must be 3-D (n_users, data_len, bits)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_users(self) -> int:
        return self.values.shape[0]

    @property
    def data_len(self) -> int:
        return self.values.shape[1]

    @property
    def bits_per_symbol(self) -> int:
        return self.values.shape[2]


def decode_frame(
    received: ReceivedFrame,
    delays: DelayProfile,
    pilots: np.ndarray,
    data_len: int,
    graph: FactorGraph,
    codebooks: CodebookSet,
    channel: ChannelRealization,
    detector: str = "log_mpa",
    *,
    mpa_iterations: int = 6,
    mcmc: McmcParams | None = None,
) -> LlrTable:
    """Detect all data symbols of a frame under a delay hypothesis.

    Samples are grouped by their set of data-active users and each group
    is detected in one batched call.  Users still in their pilot phase at
    a sample contribute a known term that is subtracted before detection.
    Pilot-phase samples with no data-active user produce no LLRs.

    Parameters
    ----------
    received : ReceivedFrame
        ``(n_res, pilot_len + data_len + max_delay)`` samples.
    delays : DelayProfile
        Delay hypothesis used for alignment (estimated or true).
    pilots : np.ndarray
        Full per-user pilots including zero tails, shape
        ``(n_users, pilot_len)``.
    data_len : int
        Number of data symbols per user.
    detector : str
        ``"log_mpa"``, ``"mcmc"`` or ``"map_oracle"``.
    """
    if detector not in ("log_mpa", "mcmc", "map_oracle"):
        raise ValueError(f"unknown detector {detector!r}")
    pilots = np.asarray(pilots, dtype=np.complex128)
    if pilots.ndim != 2 or pilots.shape[0] != graph.n_users:
        raise ValueError(f"pilots must have shape ({graph.n_users}, pilot_len)")
    pilot_len = pilots.shape[1]
    schedule = align(delays, pilot_len, data_len, graph)
    total = schedule.n_samples
    if received.n_samples != total:
        raise ValueError(
            f"received frame has {received.n_samples} samples, schedule expects {total}"
        )
    # Known pilot field: every user's pilot, delayed and channel-weighted.
    known_field = np.zeros((graph.n_res, total), dtype=np.complex128)
    for j in range(graph.n_users):
        shifted = np.zeros(total, dtype=np.complex128)
        shifted[delays[j]:delays[j] + pilot_len] = pilots[j]
        known_field += channel.coefficients[:, j][:, None] * shifted[None, :]

    groups: dict[tuple[int, ...], list[int]] = {}
    for n in range(total):
        data_users = tuple(j for j, _ in schedule.data_entries(n))
        if data_users:
            groups.setdefault(data_users, []).append(n)

    width = codebooks.bits_per_symbol
    table = np.full((graph.n_users, data_len, width), np.nan)
    base_mcmc = mcmc or McmcParams()
    for group_index, users in enumerate(sorted(groups)):
        samples = groups[users]
        y = received.samples[:, samples].T
        context = active_context(users, known_field[:, samples].T, codebooks, channel)
        if detector == "log_mpa":
            result = log_mpa(y, context, channel.noise_variance, iterations=mpa_iterations)
        elif detector == "map_oracle":
            result = map_oracle(y, context, channel.noise_variance)
        else:
            group_params = McmcParams(
                sweeps=base_mcmc.sweeps,
                chains=base_mcmc.chains,
                mixing=base_mcmc.mixing,
                seed=derive_seed(base_mcmc.seed, group_index),
            )
            result = mcmc_decode(y, context, channel.noise_variance, group_params)
        for pos, j in enumerate(users):
            symbols = np.array(samples) - delays[j] - pilot_len
            table[j, symbols, :] = result.llrs[:, pos, :]
    if not np.isfinite(table).all():
        raise AssertionError("decoder left unfilled or non-finite LLR entries")
    return LlrTable(table)


def llrs_to_bits(table: LlrTable) -> np.ndarray:
    """Hard decisions, ``llr >= 0 -> bit 0``; shape ``(n_users, data_len*bits)``."""
    bits = np.where(table.values >= 0, 0, 1)
    return bits.reshape(table.n_users, table.data_len * table.bits_per_symbol)


def indices_to_bits(indices: np.ndarray, width: int) -> np.ndarray:
    """Expand codeword indices ``(n_users, data_len)`` to bit rows."""
    indices = np.asarray(indices)
    out = np.empty((indices.shape[0], indices.shape[1] * width), dtype=np.int64)
    for j in range(indices.shape[0]):
        row = [index_to_bits(int(m), width) for m in indices[j]]
        out[j] = np.concatenate(row) if row else np.empty(0, dtype=np.int64)
    return out


def llr_csv(table: LlrTable) -> str:
    """Render a frame's LLRs as ``user,symbol,bit,llr`` CSV."""
    lines = ["user,symbol,bit,llr"]
    for j in range(table.n_users):
        for t in range(table.data_len):
            for b in range(table.bits_per_symbol):
                lines.append(f"{j},{t},{b},{table.values[j, t, b]!r}")
    return "\n".join(lines) + "\n"
