"""Flat per-RE channel draws and the superimposed received signal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FactorGraph
from .txchain import DelayProfile, delay_pad

__all__ = [
    "ChannelRealization",
    "ReceivedFrame",
    "draw_channel",
    "transmit",
    "snr_db_to_noise_variance",
]

CHANNEL_MODELS = ("awgn", "rayleigh")


@dataclass(frozen=True)
class ChannelRealization:
    """Per-(RE, user) flat fading coefficients plus the noise level.

    ``coefficients[k, j]`` multiplies user ``j``'s samples on RE ``k`` and
    is zero wherever the factor graph has no edge.  ``noise_variance`` is
    the total variance of the circular complex noise added per sample.
    """

    coefficients: np.ndarray
    model: str
    noise_variance: float

    def __post_init__(self) -> None:
        coeff = np.asarray(self.coefficients, dtype=np.complex128)
        if coeff.ndim != 2:
            raise ValueError("coefficients must be 2-D (n_res, n_users)")
        if self.model not in CHANNEL_MODELS:
            raise ValueError(f"unknown channel model {self.model!r}")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be >= 0")
        coeff.setflags(write=False)
        object.__setattr__(self, "coefficients", coeff)

    @property
    def n_res(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_users(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class ReceivedFrame:
    """Per-RE received sample vectors, shape ``(n_res, n_samples)``."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 2:
            raise ValueError("samples must be 2-D (n_res, n_samples)")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n_res(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


def draw_channel(
    model: str,
    graph: FactorGraph,
    noise_variance: float,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw fading coefficients on the graph's support.

    ``"awgn"`` uses unit coefficients; ``"rayleigh"`` draws i.i.d. circular
    complex Gaussians with unit mean-square magnitude per edge.
    """
    support = graph.occupancy.astype(np.complex128)
    if model == "awgn":
        coeff = support
    elif model == "rayleigh":
        shape = support.shape
        gains = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        coeff = gains * support
    else:
        raise ValueError(f"unknown channel model {model!r}")
    return ChannelRealization(coeff, model, noise_variance)


def transmit(
    frames: list[dict[int, np.ndarray]],
    delays: DelayProfile,
    channel: ChannelRealization,
    rng: np.random.Generator,
) -> ReceivedFrame:
    """Superimpose delayed user frames through the channel and add noise.

    Parameters
    ----------
    frames : list of dict
        Per-user mapping ``{re_index: sequence}``; all sequences must share
        one length ``L``.  Users absent from an RE simply do not contribute
        there.
    delays : DelayProfile
        Integer delay per user; output length becomes ``L + max_delay``.
    channel : ChannelRealization
        Coefficients and noise variance.
    rng : np.random.Generator
        Source for the additive noise (untouched when noise_variance is 0).
    """
    n_users = channel.n_users
    if len(frames) != n_users:
        raise ValueError(f"expected {n_users} frames, got {len(frames)}")
    if delays.n_users != n_users:
        raise ValueError("delay profile size disagrees with channel")
    lengths = {seq.shape[0] for frame in frames for seq in frame.values()}
    if len(lengths) > 1:
        raise ValueError(f"all per-RE sequences must share one length, got {sorted(lengths)}")
    base_len = lengths.pop() if lengths else 0
    total = base_len + delays.max_delay
    out = np.zeros((channel.n_res, total), dtype=np.complex128)
    for j, frame in enumerate(frames):
        for k, seq in frame.items():
            if not 0 <= k < channel.n_res:
                raise ValueError(f"RE index {k} out of range")
            gain = channel.coefficients[k, j]
            if gain != 0:
                out[k] += gain * delay_pad(seq, delays[j], delays.max_delay)
    if channel.noise_variance > 0:
        scale = np.sqrt(channel.noise_variance / 2.0)
        out = out + scale * (
            rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape)
        )
    return ReceivedFrame(out)


def snr_db_to_noise_variance(snr_db: float) -> float:
    """Total complex noise variance for unit average symbol energy."""
    return float(10.0 ** (-snr_db / 10.0))
