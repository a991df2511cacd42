"""Sparse multiple-access structure: factor graph, codebooks, bit mapping.

The system serves `n_users` single-antenna uplink users on `n_res`
orthogonal resource elements with `n_users > n_res` (overloading).  Each
user spreads every modulation symbol over a small fixed subset of resource
elements; the Boolean occupancy matrix of those subsets is the factor
graph.  Codebooks assign each user a set of sparse complex codewords whose
support matches the user's column of the factor graph.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FactorGraph",
    "CodebookSet",
    "build_factor_graph",
    "default_codebook_set",
    "bits_to_index",
    "index_to_bits",
    "map_bits",
    "demap_codeword",
    "codebook_to_json",
    "codebook_from_json",
    "complex_to_pairs",
    "pairs_to_complex",
]

# Occupied resource elements per user of the 4-RE / 6-user base layout:
# the six 2-element subsets of {0,1,2,3} in lexicographic order.  Every RE
# hosts exactly 3 users and any two users share at most one RE.
_BASE_SUPPORTS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


@dataclass(frozen=True)
class FactorGraph:
    """Occupancy structure of an overloaded multiple-access system.

    Parameters
    ----------
    occupancy : np.ndarray
        Binary matrix of shape ``(n_res, n_users)``; entry ``[k, j]`` is 1
        iff user ``j`` transmits on resource element ``k``.  Rows and
        columns must have uniform sums (regular graph) and the system must
        be overloaded (``n_users > n_res``).
    """

    occupancy: np.ndarray

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupancy)
        if occ.ndim != 2:
            raise ValueError(f"occupancy must be 2-D, got shape {occ.shape}")
        if not np.isin(occ, (0, 1)).all():
            raise ValueError("occupancy entries must be 0 or 1")
        occ = occ.astype(np.uint8)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        n_res, n_users = occ.shape
        if n_users <= n_res:
            raise ValueError(
                f"system must be overloaded: {n_users} users on {n_res} resource elements"
            )
        col = occ.sum(axis=0)
        row = occ.sum(axis=1)
        if col.min() != col.max() or col[0] == 0:
            raise ValueError("every user must occupy the same nonzero number of REs")
        if row.min() != row.max() or row[0] == 0:
            raise ValueError("every RE must host the same nonzero number of users")

    @property
    def n_res(self) -> int:
        return self.occupancy.shape[0]

    @property
    def n_users(self) -> int:
        return self.occupancy.shape[1]

    @property
    def user_degree(self) -> int:
        """Number of REs each user occupies."""
        return int(self.occupancy[:, 0].sum())

    @property
    def re_degree(self) -> int:
        """Number of users sharing each RE."""
        return int(self.occupancy[0, :].sum())

    def re_users(self, re_index: int) -> tuple[int, ...]:
        """Users occupying resource element ``re_index``, ascending."""
        return tuple(int(j) for j in np.flatnonzero(self.occupancy[re_index]))

    def user_res(self, user: int) -> tuple[int, ...]:
        """Resource elements occupied by ``user``, ascending."""
        return tuple(int(k) for k in np.flatnonzero(self.occupancy[:, user]))


@dataclass(frozen=True)
class CodebookSet:
    """Per-user codeword tables tied to a factor graph.

    ``codewords[j, m]`` is the length-``n_res`` complex codeword user ``j``
    transmits for modulation index ``m``.  Codewords are zero exactly off
    the user's occupancy support, average unit energy per user, and are
    pairwise distinct within each user's table.
    """

    codewords: np.ndarray
    graph: FactorGraph = field(repr=False)

    def __post_init__(self) -> None:
        cw = np.asarray(self.codewords, dtype=np.complex128)
        if cw.ndim != 3:
            raise ValueError(f"codewords must be 3-D, got shape {cw.shape}")
        n_users, size, n_res = cw.shape
        if n_users != self.graph.n_users or n_res != self.graph.n_res:
            raise ValueError(
                f"codeword table {cw.shape} does not match graph "
                f"({self.graph.n_res} REs, {self.graph.n_users} users)"
            )
        if size < 2 or size & (size - 1):
            raise ValueError(f"codebook size must be a power of two >= 2, got {size}")
        support = self.graph.occupancy.T.astype(bool)  # (n_users, n_res)
        if (np.abs(cw) * ~support[:, None, :]).max(initial=0.0) > 0:
            raise ValueError("codewords must be zero off the user's occupancy support")
        energy = np.mean(np.sum(np.abs(cw) ** 2, axis=2), axis=1)
        if not np.allclose(energy, 1.0, atol=1e-9):
            raise ValueError("each user's codebook must have unit average energy")
        for j in range(n_users):
            for a, b in itertools.combinations(range(size), 2):
                if np.array_equal(cw[j, a], cw[j, b]):
                    raise ValueError(f"user {j} has duplicate codewords {a} and {b}")
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    @property
    def size(self) -> int:
        """Number of codewords per user."""
        return self.codewords.shape[1]

    @property
    def bits_per_symbol(self) -> int:
        return int(self.size).bit_length() - 1

    @property
    def n_users(self) -> int:
        return self.codewords.shape[0]

    @property
    def n_res(self) -> int:
        return self.codewords.shape[2]

    def user(self, user: int) -> np.ndarray:
        """Codeword table of one user, shape ``(size, n_res)``."""
        return self.codewords[user]


def build_factor_graph(n_res: int, n_users: int, user_degree: int = 2) -> FactorGraph:
    """Construct a regular factor graph for the supported system sizes.

    Supported sizes are block replications ``(4m, 6m, 2)`` of the 4-RE /
    6-user base layout, which keeps every RE at degree 3 and guarantees
    that two users collide on at most one RE.

    Parameters
    ----------
    n_res, n_users : int
        Resource-element and user counts, with ``n_users > n_res``.
    user_degree : int
        REs occupied per user; only 2 is supported.

    Returns
    -------
    FactorGraph
    """
    if n_res <= 0 or n_users <= 0 or user_degree <= 0:
        raise ValueError("n_res, n_users and user_degree must be positive")
    if n_users <= n_res:
        raise ValueError(f"need more users than REs, got {n_users} <= {n_res}")
    if (n_users * user_degree) % n_res:
        raise ValueError(
            f"{n_users} users of degree {user_degree} cannot evenly load {n_res} REs"
        )
    if user_degree != 2 or n_res % 4 or n_users != 6 * (n_res // 4):
        raise ValueError(
            "unsupported size: expected user_degree=2 with (n_res, n_users) = (4m, 6m), "
            f"got ({n_res}, {n_users}, degree {user_degree})"
        )
    blocks = n_res // 4
    occ = np.zeros((n_res, n_users), dtype=np.uint8)
    for b in range(blocks):
        for j, rows in enumerate(_BASE_SUPPORTS):
            for k in rows:
                occ[4 * b + k, 6 * b + j] = 1
    return FactorGraph(occ)


def default_codebook_set(graph: FactorGraph, size: int = 4) -> CodebookSet:
    """Build phase-rotated constellations matched to ``graph``.

    Every user repeats one BPSK (``size=2``) or Gray-indexed QPSK
    (``size=4``) symbol on its occupied REs, scaled to unit average
    codeword energy.  User ``j`` additionally rotates its constellation by
    ``2*pi*j / (size * n_users)``, which keeps the rotated sets pairwise
    distinct for every pair of colliding users.
    """
    if size == 2:
        base = np.array([1.0, -1.0], dtype=np.complex128)
    elif size == 4:
        # index m carries bits (b0, b1), b0 first; bit 0 -> +1 on its axis
        signs = 1.0 - 2.0 * np.array([[m >> 1, m & 1] for m in range(4)])
        base = (signs[:, 0] + 1j * signs[:, 1]) / np.sqrt(2.0)
    else:
        raise ValueError(f"codebook size must be 2 or 4, got {size}")
    n_users = graph.n_users
    amp = 1.0 / np.sqrt(graph.user_degree)
    cw = np.zeros((n_users, size, graph.n_res), dtype=np.complex128)
    for j in range(n_users):
        rotated = amp * base * np.exp(2j * np.pi * j / (size * n_users))
        for k in graph.user_res(j):
            cw[j, :, k] = rotated
    return CodebookSet(cw, graph)


def bits_to_index(bits) -> int:
    """Map a bit sequence to its codeword index, first bit most significant."""
    index = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bits must be 0 or 1, got {b!r}")
        index = (index << 1) | int(b)
    return index


def index_to_bits(index: int, width: int) -> np.ndarray:
    """Inverse of :func:`bits_to_index`; returns ``width`` bits, MSB first."""
    if not 0 <= index < (1 << width):
        raise ValueError(f"index {index} out of range for {width} bits")
    return np.array([(index >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.int64)


def map_bits(codebook: np.ndarray, bits) -> np.ndarray:
    """Select the codeword addressed by ``bits`` from one user's table."""
    codebook = np.asarray(codebook)
    size = codebook.shape[0]
    width = size.bit_length() - 1
    bits = list(bits)
    if len(bits) != width:
        raise ValueError(f"expected {width} bits for a size-{size} codebook, got {len(bits)}")
    return codebook[bits_to_index(bits)].copy()


def demap_codeword(codebook: np.ndarray, codeword: np.ndarray) -> np.ndarray:
    """Recover the bit sequence of an exact codeword match."""
    codebook = np.asarray(codebook)
    matches = np.flatnonzero((codebook == np.asarray(codeword)).all(axis=1))
    if matches.size == 0:
        raise ValueError("codeword does not appear in the codebook")
    width = codebook.shape[0].bit_length() - 1
    return index_to_bits(int(matches[0]), width)


def complex_to_pairs(values: np.ndarray) -> list:
    """Rewrite a complex array as nested [re, im] pairs (JSON-friendly)."""
    values = np.asarray(values, dtype=np.complex128)
    stacked = np.stack([values.real, values.imag], axis=-1)
    return stacked.tolist()


def pairs_to_complex(pairs) -> np.ndarray:
    """Inverse of :func:`complex_to_pairs`."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise ValueError("expected nested [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def codebook_to_json(codebooks: CodebookSet) -> dict:
    """Serialize a codebook set (with its graph) to a JSON document."""
    graph = codebooks.graph
    return {
        "K": graph.n_res,
        "J": graph.n_users,
        "M": codebooks.size,
        "occupancy": graph.occupancy.astype(int).tolist(),
        "codebooks": complex_to_pairs(codebooks.codewords),
    }


def codebook_from_json(doc: dict) -> CodebookSet:
    """Rebuild a codebook set from :func:`codebook_to_json` output.

    All structural invariants are re-validated; malformed documents raise
    ``ValueError``.
    """
    required = {"K", "J", "M", "occupancy", "codebooks"}
    if not isinstance(doc, dict):
        raise ValueError("codebook document must be a JSON object")
    missing = required - doc.keys()
    if missing:
        raise ValueError(f"codebook document missing keys: {sorted(missing)}")
    extra = doc.keys() - required
    if extra:
        raise ValueError(f"codebook document has unknown keys: {sorted(extra)}")
    graph = FactorGraph(np.asarray(doc["occupancy"]))
    if graph.n_res != doc["K"] or graph.n_users != doc["J"]:
        raise ValueError("occupancy shape disagrees with K/J fields")
    codewords = pairs_to_complex(doc["codebooks"])
    if codewords.ndim != 3 or codewords.shape[1] != doc["M"]:
        raise ValueError("codebooks field disagrees with M")
    return CodebookSet(codewords, graph)
