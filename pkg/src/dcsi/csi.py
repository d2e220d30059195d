"""Per-TX channel estimates: statistical perturbation, flat RVQ and
hierarchical RVQ, plus closed-form random-codebook distortion bounds.

Row ``i`` of an estimate matrix is TX ``j``'s estimate of the normalized,
phase-aligned channel of receiver ``i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import (
    TAG_CODEBOOK,
    TAG_HIER,
    TAG_STAT_NOISE,
    ChannelRealization,
    RngSeed,
    complex_gaussian,
)
from .errors import ContractError, InvalidDimensionError, ResourceCapError
from .numerics import (
    UNIT_NORM_CONTRACT_TOL,
    align_rows,
    as_cvec,
    phase_align,
    real_embedding,
)

DEFAULT_MAX_BITS = 20
MODELS = ("statistical", "rvq", "hier-rvq", "hier-statistical")
PERFECT = math.inf


def effective_alpha(alpha):
    """Clip CSI scaling exponents to [0, 1]; the only place clipping happens."""
    a = np.asarray(alpha, dtype=float)
    if np.any(np.isnan(a)) or np.any(a < 0):
        raise ContractError("CSI scaling coefficients must be >= 0")
    out = np.minimum(a, 1.0)
    return float(out) if out.ndim == 0 else out


def error_variance(alpha, P: float):
    """Row-total estimation error energy ``P^-min(alpha, 1)``; 0 for perfect."""
    a = np.asarray(alpha, dtype=float)
    v = np.where(np.isinf(a), 0.0, float(P) ** (-effective_alpha(np.where(np.isinf(a), 1.0, a))))
    return float(v) if v.ndim == 0 else v


def _check_snr(P: float) -> None:
    if not P > 0.0 or math.isinf(P):
        raise ContractError(f"linear SNR must be positive and finite, got {P}")


@dataclass(frozen=True)
class CsiScalingMatrix:
    """``alpha[i, j]``: feedback-scaling exponent for RX ``i``'s channel at TX ``j``.

    ``math.inf`` marks perfect CSI.  Downstream code reads :attr:`effective`.
    """

    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
            raise InvalidDimensionError(f"alpha must be KxK with K >= 2, got {a.shape}")
        effective_alpha(a)  # validates sign / NaN
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @property
    def k(self) -> int:
        return self.alpha.shape[0]

    @property
    def effective(self) -> np.ndarray:
        return effective_alpha(self.alpha)

    @classmethod
    def uniform(cls, k: int, value: float) -> "CsiScalingMatrix":
        return cls(np.full((k, k), float(value)))

    def bits(self, P: float) -> np.ndarray:
        """Bit rule ``B = round(alpha (K-1) log2 P)`` (minimum 0; -1 marks perfect)."""
        _check_snr(P)
        if P < 1.0:
            raise ContractError("the bit rule needs P >= 1")
        eff = np.where(np.isinf(self.alpha), 0.0, self.effective)
        b = np.rint(eff * (self.k - 1) * math.log2(P)).astype(int)
        return np.where(np.isinf(self.alpha), -1, np.maximum(b, 0))


@dataclass(frozen=True)
class BitMatrix:
    """``bits[i, j]``: feedback bits for RX ``i``'s channel delivered to TX ``j``."""

    bits: np.ndarray
    max_bits: int = DEFAULT_MAX_BITS

    def __post_init__(self):
        b = np.array(self.bits)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 2:
            raise InvalidDimensionError(f"bit matrix must be KxK with K >= 2, got {b.shape}")
        if not np.issubdtype(b.dtype, np.integer):
            if not np.all(b == np.round(b)):
                raise ContractError("bit counts must be integers")
            b = b.astype(int)
        if np.any(b < 0):
            raise ContractError("bit counts must be >= 0")
        if np.any(b > self.max_bits):
            raise ResourceCapError(f"bit count {int(b.max())} exceeds cap {self.max_bits}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def k(self) -> int:
        return self.bits.shape[0]

    def equivalent_alpha(self, P: float) -> CsiScalingMatrix:
        """Exponents giving the same bit counts at ``P``: ``B / ((K-1) log2 P)``.

        ``log2 P`` is floored at 1 so low-SNR points keep the ranking of the
        bit counts; only that ranking and the implied error level are used.
        """
        _check_snr(P)
        return CsiScalingMatrix(self.bits / ((self.k - 1) * max(math.log2(P), 1.0)))


# --------------------------------------------------------------------------
# Statistical model
# --------------------------------------------------------------------------

def statistical_estimate(hnorm_row, alpha_ij: float, P: float, seed: RngSeed,
                         subkey: Sequence[int] = ()) -> np.ndarray:
    """Perturb a normalized channel row with Gaussian error of energy P^-alpha.

    The perturbed vector is renormalized and phase-aligned again.
    Requires ``P > 1``.
    """
    _check_snr(P)
    if not P > 1.0:
        raise ContractError(f"linear SNR must exceed 1, got {P}")
    h = as_cvec(hnorm_row)
    if math.isinf(alpha_ij):
        return h.copy()
    noise = complex_gaussian(seed.rng(TAG_STAT_NOISE, *subkey), h.shape, 1.0 / h.size)
    return _perturb(h, noise, error_variance(alpha_ij, P))


def _perturb(h: np.ndarray, unit_noise: np.ndarray, variance: float) -> np.ndarray:
    v = h + math.sqrt(variance) * unit_noise
    return phase_align(v / np.linalg.norm(v))


# --------------------------------------------------------------------------
# Random codebooks
# --------------------------------------------------------------------------

def random_unit_vectors(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """``n`` isotropic unit vectors in C^k, phase-aligned, as rows."""
    v = complex_gaussian(rng, (n, k))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return align_rows(v)


@dataclass(frozen=True)
class Codebook:
    vectors: np.ndarray
    bits: int
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        if v.ndim != 2 or v.shape[0] != 2 ** self.bits:
            raise ContractError("codebook must hold exactly 2^bits vectors")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "_embedded", real_embedding(v))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @property
    def embedded(self) -> np.ndarray:
        return self._embedded

    def to_dict(self) -> dict:
        return {
            "format": "dcsi-codebook/1",
            "k": self.k,
            "bits": self.bits,
            "provenance": self.provenance,
            "vectors": [[[z.real, z.imag] for z in row] for row in self.vectors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        if d.get("format") != "dcsi-codebook/1":
            raise ContractError("not a dcsi codebook document")
        vec = np.array(d["vectors"], dtype=float)
        vectors = vec[..., 0] + 1j * vec[..., 1]
        cb = cls(vectors=vectors, bits=int(d["bits"]), provenance=dict(d.get("provenance", {})))
        if cb.k != int(d["k"]):
            raise ContractError("codebook dimension does not match header")
        return cb

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        return cls.from_dict(json.loads(text))


def _check_bits(bits: int, max_bits: int) -> None:
    if bits < 0:
        raise ContractError("bits must be >= 0")
    if bits > max_bits:
        raise ResourceCapError(f"2^{bits} codewords exceeds cap 2^{max_bits}")


def make_codebook(k: int, bits: int, seed: RngSeed, subkey: Sequence[int] = (),
                  max_bits: int = DEFAULT_MAX_BITS) -> Codebook:
    """Random codebook of 2^bits aligned unit vectors in C^k."""
    if k < 2:
        raise InvalidDimensionError("k must be >= 2")
    _check_bits(bits, max_bits)
    key = (TAG_CODEBOOK, *subkey)
    vectors = random_unit_vectors(seed.rng(*key), 2 ** bits, k)
    prov = {"master_seed": seed.master_seed, "stream_id": seed.stream_id, "subkey": list(key)}
    return Codebook(vectors=vectors, bits=bits, provenance=prov)


def _check_aligned_unit(h: np.ndarray) -> None:
    if abs(np.linalg.norm(h) - 1.0) > UNIT_NORM_CONTRACT_TOL:
        raise ContractError("channel row must be unit-norm")


def _select(h: np.ndarray, cb: Codebook):
    if len(cb) == 0:
        raise ContractError("empty codebook")
    if cb.k != h.size:
        raise ContractError("codebook dimension does not match channel")
    ip = cb.embedded @ real_embedding(h)
    idx = int(np.argmax(np.abs(ip)))
    return idx, float(ip[idx])


def quantize_l2(hnorm_row, cb: Codebook):
    """Chordal-distance quantization in the aligned real embedding.

    Returns ``(estimate, index, sin2)``.  The estimate is the selected codeword
    multiplied by the sign of its real inner product with the input (the
    half-space bit), which is the Euclidean-closest of the two.
    """
    h = as_cvec(hnorm_row)
    _check_aligned_unit(h)
    idx, ip = _select(h, cb)
    sign = -1.0 if ip < 0 else 1.0
    return sign * cb.vectors[idx], idx, min(1.0, max(0.0, 1.0 - ip * ip))


# --------------------------------------------------------------------------
# Hierarchical codebooks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HierCodebook:
    """Nested binary partition of a base codebook.

    ``order`` lists base indices so that bin ``b`` at level ``l`` is the slice
    ``order[b * 2^(L-l) : (b+1) * 2^(L-l)]`` with ``L = max_bits``.  Splitting
    a uniformly random permutation this way halves every bin at random.
    ``representatives[l][b]`` is the base index standing for that bin.
    """

    base: Codebook
    order: np.ndarray
    representatives: tuple

    @property
    def max_bits(self) -> int:
        return self.base.bits

    @property
    def position(self) -> np.ndarray:
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(self.order.size)
        return pos

    def bin_of(self, index: int, level: int) -> int:
        self._check_level(level)
        return int(self.position[index]) >> (self.max_bits - level)

    def members(self, level: int, b: int) -> np.ndarray:
        self._check_level(level)
        w = 1 << (self.max_bits - level)
        return self.order[b * w:(b + 1) * w]

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= self.max_bits:
            raise ContractError(f"level {level} outside 0..{self.max_bits}")


def make_hier_codebook(k: int, max_bits: int, seed: RngSeed, subkey: Sequence[int] = (),
                       cap: int = DEFAULT_MAX_BITS) -> HierCodebook:
    _check_bits(max_bits, cap)
    base = make_codebook(k, max_bits, seed, subkey=(TAG_HIER, *subkey), max_bits=cap)
    rng = seed.rng(TAG_HIER, *subkey)
    n = 2 ** max_bits
    order = rng.permutation(n)
    reps = []
    for level in range(max_bits + 1):
        w = 1 << (max_bits - level)
        picks = rng.integers(0, w, size=1 << level)
        reps.append(order[np.arange(1 << level) * w + picks])
    order.setflags(write=False)
    for r in reps:
        r.setflags(write=False)
    return HierCodebook(base=base, order=order, representatives=tuple(reps))


def hier_quantize(hnorm_row, hcb: HierCodebook, decode_bits: int):
    """Decode ``decode_bits`` levels of a hierarchical description.

    The encoder picks the full-resolution codeword (and its half-space sign,
    sent as one extra bit).  A decoder at level ``l`` returns the sign times
    the representative of the level-``l`` bin holding that codeword.

    Returns ``(estimate, (leaf_bin, sign))``; the leaf path plus sign is all
    a better-informed TX needs to rebuild any coarser estimate.
    """
    if not 0 <= decode_bits <= hcb.max_bits:
        raise ContractError(f"decode level {decode_bits} outside 0..{hcb.max_bits}")
    h = as_cvec(hnorm_row)
    _check_aligned_unit(h)
    idx, ip = _select(h, hcb.base)
    sign = -1 if ip < 0 else 1
    leaf = int(hcb.position[idx])
    return hier_decode(hcb, leaf, sign, decode_bits), (leaf, sign)


def hier_decode(hcb: HierCodebook, leaf: int, sign: int, level: int) -> np.ndarray:
    """Estimate seen at ``level`` given the full-resolution leaf and sign."""
    hcb._check_level(level)
    b = leaf >> (hcb.max_bits - level)
    return sign * hcb.base.vectors[hcb.representatives[level][b]]


# --------------------------------------------------------------------------
# Per-TX CSI assembly
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TxCsi:
    """TX ``tx``'s estimate of the whole normalized channel (one row per RX)."""

    estimates: np.ndarray
    model_tag: str
    tx: int = 0
    bits: Optional[np.ndarray] = None
    indices: Optional[tuple] = None

    @property
    def k(self) -> int:
        return self.estimates.shape[0]

    def replace_rows(self, rows: dict) -> "TxCsi":
        est = self.estimates.copy()
        for i, v in rows.items():
            est[i] = v
        return TxCsi(est, self.model_tag, self.tx, self.bits, self.indices)


def _bits_for(alpha: CsiScalingMatrix, P: float, bit_rule) -> np.ndarray:
    if bit_rule is None:
        return alpha.bits(P)
    bm = bit_rule if isinstance(bit_rule, BitMatrix) else BitMatrix(np.asarray(bit_rule))
    if bm.k != alpha.k:
        raise InvalidDimensionError("bit matrix and alpha differ in size")
    return np.array(bm.bits)


def build_tx_csi(ch: ChannelRealization, alpha: CsiScalingMatrix, P: float, model: str,
                 seed: RngSeed, bit_rule=None, max_bits: int = DEFAULT_MAX_BITS) -> list:
    """Build every TX's estimate of ``ch`` under the chosen CSI model.

    ``bit_rule`` (RVQ models) is a :class:`BitMatrix` or array; when omitted
    the bits follow ``round(alpha (K-1) log2 P)``.  For ``statistical`` and
    ``rvq`` the errors are independent across TXs.  For the hierarchical
    models every row uses one shared description decoded at each TX's
    resolution, so estimates are nested.
    """
    if model not in MODELS:
        raise ContractError(f"unknown CSI model {model!r}; expected one of {MODELS}")
    k = ch.k
    if alpha.k != k:
        raise InvalidDimensionError("alpha and channel differ in size")
    if model in ("statistical", "hier-statistical"):
        return statistical_csi(ch, alpha, P, draw_statistical_noise(k, seed),
                               nested=model == "hier-statistical")
    bits = _bits_for(alpha, P, bit_rule)
    if model == "rvq":
        return _rvq(ch, bits, seed, max_bits)
    return _hier_rvq(ch, bits, seed, max_bits)


def draw_statistical_noise(k: int, seed: RngSeed) -> tuple:
    """Unit-energy error directions for one trial: independent ``[i, j]`` and nested ``[i, rank]``.

    Drawing them once and rescaling per SNR gives common random numbers
    across an SNR grid.
    """
    indep = np.empty((k, k, k), dtype=complex)
    nested = np.empty((k, k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            indep[i, j] = complex_gaussian(seed.rng(TAG_STAT_NOISE, i, j), k, 1.0 / k)
            nested[i, j] = complex_gaussian(seed.rng(TAG_HIER, i, j), k, 1.0 / k)
    return indep, nested


def statistical_csi(ch: ChannelRealization, alpha: CsiScalingMatrix, P: float, noise: tuple,
                    nested: bool = False) -> list:
    """Statistical-model TX estimates from pre-drawn noise (see :func:`draw_statistical_noise`)."""
    _check_snr(P)
    est = _statistical_rows(ch, alpha, P, noise, nested)
    tag = "hier-statistical" if nested else "statistical"
    return [TxCsi(est[j], tag, j) for j in range(ch.k)]


def _statistical_rows(ch, alpha, P, noise, nested):
    k = ch.k
    indep, chain = noise
    var = error_variance(alpha.alpha, P)
    out = np.empty((k, k, k), dtype=complex)  # [tx, row, entry]
    for i in range(k):
        h = ch.Hnorm[i]
        if not nested:
            for j in range(k):
                out[j, i] = h if var[i, j] == 0.0 else _perturb(h, indep[i, j], var[i, j])
            continue
        # Nested errors: TXs sharing a variance share the realization, a
        # coarser TX adds independent noise on top of the finer one.
        levels = sorted(set(var[i].tolist()))
        delta = np.zeros(k, dtype=complex)
        prev = 0.0
        row_est = {}
        for rank, v in enumerate(levels):
            if v > prev:
                delta = delta + math.sqrt(v - prev) * chain[i, rank]
            prev = v
            row_est[v] = h.copy() if v == 0.0 else phase_align(
                (h + delta) / np.linalg.norm(h + delta))
        for j in range(k):
            out[j, i] = row_est[var[i, j]]
    return out


def _rvq(ch, bits, seed, max_bits):
    k = ch.k
    est = np.empty((k, k, k), dtype=complex)
    idx = np.full((k, k), -1)
    for i in range(k):
        for j in range(k):
            if bits[i, j] < 0:
                est[j, i] = ch.Hnorm[i]
                continue
            cb = make_codebook(k, int(bits[i, j]), seed, subkey=(i, j), max_bits=max_bits)
            est[j, i], idx[i, j], _ = quantize_l2(ch.Hnorm[i], cb)
    return [TxCsi(est[j], "rvq", j, bits[:, j].copy(), tuple(idx[:, j])) for j in range(k)]


def _hier_rvq(ch, bits, seed, max_bits):
    k = ch.k
    est = np.empty((k, k, k), dtype=complex)
    paths = [[None] * k for _ in range(k)]
    for i in range(k):
        row_bits = bits[i]
        finite = row_bits[row_bits >= 0]
        if finite.size == 0:
            est[:, i] = ch.Hnorm[i]
            continue
        hcb = make_hier_codebook(k, int(finite.max()), seed, subkey=(i,), cap=max_bits)
        _, (leaf, sign) = hier_quantize(ch.Hnorm[i], hcb, hcb.max_bits)
        for j in range(k):
            if row_bits[j] < 0:
                est[j, i] = ch.Hnorm[i]
            else:
                est[j, i] = hier_decode(hcb, leaf, sign, int(row_bits[j]))
                paths[j][i] = (leaf, sign, int(row_bits[j]))
    return [TxCsi(est[j], "hier-rvq", j, bits[:, j].copy(), tuple(paths[j])) for j in range(k)]


# --------------------------------------------------------------------------
# Random-codebook distortion bounds
# --------------------------------------------------------------------------

def grassmann_constant(k: int) -> float:
    """``Gamma(K - 1/2) / (Gamma(K) Gamma(1/2))`` for the R^(2K-1) embedding."""
    return math.exp(math.lgamma(k - 0.5) - math.lgamma(k) - math.lgamma(0.5))


def distortion_bounds(k: int, bits: int) -> tuple:
    """Asymptotic (lower, upper) bounds on E[min sin^2] for a random codebook."""
    c = grassmann_constant(k)
    base = c ** (-1.0 / (k - 1)) * 2.0 ** (-bits / (k - 1))
    lo = (2 * k - 1) / (2 * k + 1) * base
    hi = math.gamma(1.0 / (k - 1)) / (k - 1) * base
    return lo, hi


def log_distortion_bounds(k: int, bits: int) -> tuple:
    """Asymptotic (lower, upper) bounds on E[-log2 min sin^2]."""
    lc = math.log2(grassmann_constant(k))
    return (bits + lc) / (k - 1), (bits + lc + math.log2(math.e)) / (k - 1)


def bounds_regime_ok(k: int, bits: int) -> bool:
    """Necessary large-codebook condition for the bounds above."""
    c = grassmann_constant(k)
    return c ** (-1.0 / (k - 1)) * 2.0 ** (-bits / (k - 1)) <= 1.0


def sample_min_sin2(k: int, bits: int, trials: int, seed: RngSeed,
                    channels_per_codebook: int = 64,
                    max_bits: int = DEFAULT_MAX_BITS) -> np.ndarray:
    """Monte-Carlo draws of min over a fresh random codebook of sin^2.

    Each codebook serves a block of ``channels_per_codebook`` independent
    channels, which keeps the expectation over (codebook, channel) unbiased.
    """
    _check_bits(bits, max_bits)
    n_cb = -(-trials // channels_per_codebook)
    out = np.empty(n_cb * channels_per_codebook)
    L = 2 ** bits
    for b in range(n_cb):
        rng = seed.rng(TAG_CODEBOOK, 0x5157, b)
        cb = real_embedding(random_unit_vectors(rng, L, k))
        h = real_embedding(random_unit_vectors(rng, channels_per_codebook, k))
        ip = h @ cb.T
        out[b * channels_per_codebook:(b + 1) * channels_per_codebook] = 1.0 - np.max(ip * ip, axis=1)
    return np.clip(out[:trials], 0.0, 1.0)
