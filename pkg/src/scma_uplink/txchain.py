"""Per-user frame construction: zero-tailed pilots, data symbols, delays.

A frame is a pilot sequence followed by data codewords.  The pilot has
total length ``pilot_len`` whose last ``max_delay`` entries are zero, so
that any integer delay up to ``max_delay`` keeps the pilot portions of
different users inside a common observation window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CodebookSet, FactorGraph, complex_to_pairs, pairs_to_complex

__all__ = [
    "DelayProfile",
    "UserFrame",
    "generate_pilot",
    "delay_pad",
    "assemble_frame",
    "make_user_frame",
    "frame_to_json",
    "frame_from_json",
    "frames_for_transmission",
    "codebook_frames",
]


@dataclass(frozen=True)
class DelayProfile:
    """Integer symbol delays of all users, each in ``[0, max_delay]``."""

    delays: np.ndarray
    max_delay: int
    symbol_period: float = 1.0

    def __post_init__(self) -> None:
        delays = np.asarray(self.delays)
        if delays.ndim != 1:
            raise ValueError("delays must be a 1-D integer array")
        if delays.size and not np.issubdtype(delays.dtype, np.integer):
            if not np.array_equal(delays, delays.astype(np.int64)):
                raise ValueError("delays must be integers")
        delays = delays.astype(np.int64)
        if self.max_delay < 0:
            raise ValueError("max_delay must be >= 0")
        if delays.size and (delays.min() < 0 or delays.max() > self.max_delay):
            raise ValueError(f"delays must lie in [0, {self.max_delay}]")
        if self.symbol_period <= 0:
            raise ValueError("symbol_period must be positive")
        delays.setflags(write=False)
        object.__setattr__(self, "delays", delays)

    @property
    def n_users(self) -> int:
        return self.delays.size

    def __getitem__(self, user: int) -> int:
        return int(self.delays[user])


@dataclass(frozen=True)
class UserFrame:
    """One user's transmitted frame before channel effects.

    Attributes
    ----------
    pilot : np.ndarray
        Length ``pilot_len`` complex sequence whose last
        ``pilot_len - nonzero_pilot_len`` entries are exactly zero.
    data : np.ndarray
        Data codewords, shape ``(data_len, n_res)``.
    data_indices : np.ndarray
        Codeword index per data symbol, shape ``(data_len,)``.
    nonzero_pilot_len : int
        Number of leading pilot entries that may be nonzero.
    """

    pilot: np.ndarray
    data: np.ndarray
    data_indices: np.ndarray
    nonzero_pilot_len: int

    def __post_init__(self) -> None:
        pilot = np.asarray(self.pilot, dtype=np.complex128)
        data = np.asarray(self.data, dtype=np.complex128)
        idx = np.asarray(self.data_indices, dtype=np.int64)
        if pilot.ndim != 1:
            raise ValueError("pilot must be 1-D")
        if not 1 <= self.nonzero_pilot_len <= pilot.size:
            raise ValueError("nonzero_pilot_len must be in [1, pilot_len]")
        tail = pilot[self.nonzero_pilot_len:]
        if tail.size and np.abs(tail).max() > 0:
            raise ValueError("pilot tail (guard region) must be exactly zero")
        if data.ndim != 2:
            raise ValueError("data must have shape (data_len, n_res)")
        if idx.shape != (data.shape[0],):
            raise ValueError("data_indices length must match data_len")
        for arr in (pilot, data, idx):
            arr.setflags(write=False)
        object.__setattr__(self, "pilot", pilot)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "data_indices", idx)

    @property
    def pilot_len(self) -> int:
        return self.pilot.size

    @property
    def data_len(self) -> int:
        return self.data.shape[0]

    @property
    def max_delay(self) -> int:
        """Guard length the pilot was built for."""
        return self.pilot_len - self.nonzero_pilot_len


def generate_pilot(
    nonzero_len: int,
    max_delay: int,
    energy: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw a zero-tailed complex Gaussian pilot.

    The ``nonzero_len`` head entries are i.i.d. circular Gaussian with
    per-entry variance ``energy / nonzero_len`` so the expected pilot
    energy equals ``energy``; the ``max_delay`` tail entries are zero.
    """
    if nonzero_len < 1:
        raise ValueError("nonzero_len must be >= 1")
    if max_delay < 0:
        raise ValueError("max_delay must be >= 0")
    if energy <= 0:
        raise ValueError("energy must be positive")
    scale = np.sqrt(energy / (2.0 * nonzero_len))
    head = scale * (rng.standard_normal(nonzero_len) + 1j * rng.standard_normal(nonzero_len))
    return np.concatenate([head, np.zeros(max_delay, dtype=np.complex128)])


def delay_pad(sequence: np.ndarray, delay: int, max_delay: int) -> np.ndarray:
    """Prefix ``delay`` zeros and suffix ``max_delay - delay`` zeros.

    Output length is ``len(sequence) + max_delay`` regardless of delay, so
    delayed frames of different users stay length-aligned.
    """
    if not 0 <= delay <= max_delay:
        raise ValueError(f"delay must lie in [0, {max_delay}], got {delay}")
    sequence = np.asarray(sequence, dtype=np.complex128)
    if sequence.ndim != 1:
        raise ValueError("sequence must be 1-D")
    return np.concatenate([
        np.zeros(delay, dtype=np.complex128),
        sequence,
        np.zeros(max_delay - delay, dtype=np.complex128),
    ])


def assemble_frame(
    pilot: np.ndarray,
    data: np.ndarray,
    graph: FactorGraph,
    user: int,
) -> dict[int, np.ndarray]:
    """Concatenate pilot and one RE's data stream per occupied RE.

    Returns ``{re_index: sequence}`` with each sequence of length
    ``pilot_len + data_len``.  The pilot is repeated on every occupied RE;
    data entries come from the codeword column for that RE.
    """
    pilot = np.asarray(pilot, dtype=np.complex128)
    data = np.asarray(data, dtype=np.complex128)
    if data.ndim != 2 or data.shape[1] != graph.n_res:
        raise ValueError(f"data must have shape (data_len, {graph.n_res})")
    if not 0 <= user < graph.n_users:
        raise ValueError(f"user {user} out of range")
    support = graph.user_res(user)
    off = [k for k in range(graph.n_res) if k not in support]
    if data.size and off and np.abs(data[:, off]).max() > 0:
        raise ValueError(f"user {user} data is nonzero off its occupancy support")
    return {k: np.concatenate([pilot, data[:, k]]) for k in support}


def make_user_frame(
    pilot: np.ndarray,
    nonzero_pilot_len: int,
    data_indices,
    user_codebook: np.ndarray,
) -> UserFrame:
    """Bundle a pilot and codeword-indexed data symbols into a frame."""
    user_codebook = np.asarray(user_codebook)
    idx = np.asarray(data_indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("data_indices must be 1-D")
    if idx.size and not (0 <= idx.min() and idx.max() < user_codebook.shape[0]):
        raise ValueError("data index out of codebook range")
    data = user_codebook[idx] if idx.size else np.zeros((0, user_codebook.shape[1]))
    return UserFrame(pilot, data, idx, nonzero_pilot_len)


def frame_to_json(frame: UserFrame) -> dict:
    """Serialize a frame as ``{"pilot": [[re, im], ...], "data_indices": [...]}``."""
    return {
        "pilot": complex_to_pairs(frame.pilot),
        "data_indices": frame.data_indices.tolist(),
    }


def frame_from_json(
    doc: dict,
    user_codebook: np.ndarray,
    nonzero_pilot_len: int,
) -> UserFrame:
    """Rebuild a frame from :func:`frame_to_json` output.

    The codeword table and nonzero pilot length are not part of the wire
    format and must be supplied by the caller.
    """
    if not isinstance(doc, dict) or doc.keys() != {"pilot", "data_indices"}:
        raise ValueError("frame document must contain exactly 'pilot' and 'data_indices'")
    pilot = pairs_to_complex(doc["pilot"])
    return make_user_frame(pilot, nonzero_pilot_len, doc["data_indices"], user_codebook)


def frames_for_transmission(
    frames: list[UserFrame],
    graph: FactorGraph,
) -> list[dict[int, np.ndarray]]:
    """Assemble every user's per-RE sequences in user order."""
    if len(frames) != graph.n_users:
        raise ValueError(f"expected {graph.n_users} frames, got {len(frames)}")
    return [assemble_frame(f.pilot, f.data, graph, j) for j, f in enumerate(frames)]


def codebook_frames(
    codebooks: CodebookSet,
    pilots: np.ndarray,
    nonzero_pilot_len: int,
    data_indices: np.ndarray,
) -> list[UserFrame]:
    """Build one frame per user from stacked pilots and index rows."""
    pilots = np.asarray(pilots)
    data_indices = np.asarray(data_indices)
    if pilots.shape[0] != codebooks.n_users or data_indices.shape[0] != codebooks.n_users:
        raise ValueError("pilots and data_indices must have one row per user")
    return [
        make_user_frame(pilots[j], nonzero_pilot_len, data_indices[j], codebooks.user(j))
        for j in range(codebooks.n_users)
    ]
