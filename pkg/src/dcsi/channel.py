"""I.i.d. Rayleigh block-fading channels with counter-based seeding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError
from .numerics import align_rows

# Sub-stream tags appended to the spawn key so that independent quantities
# drawn for one trial never share a generator.
TAG_CHANNEL = 0
TAG_STAT_NOISE = 1
TAG_CODEBOOK = 2
TAG_HIER = 3
TAG_QUANTCHECK = 4

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    """(master_seed, stream_id) pair; fully determines every derived draw."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) <= _U64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer")

    def rng(self, *subkey: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.master_seed), spawn_key=(int(self.stream_id), *map(int, subkey))
        )
        return np.random.Generator(np.random.PCG64(ss))

    def with_stream(self, stream_id: int) -> "RngSeed":
        return RngSeed(self.master_seed, stream_id)


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, real/imag each of variance/2."""
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class ChannelRealization:
    """One channel draw.

    Row ``i`` of ``H`` is the channel vector ``h_i`` of receiver ``i`` (the
    received sample is ``h_i^H x``).  ``Hnorm`` holds the unit-norm,
    phase-aligned rows that feedback quantizes.
    """

    H: np.ndarray
    row_norms: np.ndarray
    Hnorm: np.ndarray

    @property
    def k(self) -> int:
        return self.H.shape[0]

    @classmethod
    def from_matrix(cls, H) -> "ChannelRealization":
        H = np.array(H, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] < 2:
            raise InvalidDimensionError(f"channel must be KxK with K >= 2, got {H.shape}")
        norms = np.linalg.norm(H, axis=1)
        if np.any(norms <= 0):
            raise InvalidDimensionError("channel rows must be non-zero")
        Hn = align_rows(H / norms[:, None])
        return cls(H=H, row_norms=norms, Hnorm=Hn)


def sample_channel(k: int, seed: RngSeed) -> ChannelRealization:
    """Draw a KxK matrix of i.i.d. CN(0, 1) entries."""
    if k < 2:
        raise InvalidDimensionError(f"k must be >= 2, got {k}")
    H = complex_gaussian(seed.rng(TAG_CHANNEL), (k, k))
    return ChannelRealization.from_matrix(H)
