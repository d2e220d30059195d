"""Distributed zero-forcing precoders.

Every TX computes a full K x K precoder from its own :class:`TxCsi`; only its
own row is transmitted.  Indices (streams, TXs, RXs) are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .csi import CsiScalingMatrix, TxCsi, error_variance
from .errors import (
    ContractError,
    DegenerateProjectionError,
    InvalidDimensionError,
    NumericalDegeneracyError,
)
from .numerics import proj_perp, solve_small

SCHEMES = (
    "perfect-zf", "czf", "rzf", "bzf", "apzf", "apzf-heuristic",
    "apzf-qpower:<b>", "czf-hq", "apzf-hq",
)
HQ_MODELS = ("hier-rvq", "hier-statistical")


@dataclass(frozen=True)
class PrecoderMatrix:
    """Column ``i`` is beamformer ``t_i``; row ``j`` is what TX ``j`` emits."""

    T: np.ndarray
    power_budget: float
    scheme_tag: str = ""

    @property
    def k(self) -> int:
        return self.T.shape[0]


@dataclass(frozen=True)
class PassiveSet:
    """``n[i]``: the passive TX for stream ``i``."""

    n: tuple

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))

    @classmethod
    def uniform(cls, k: int, tx: int) -> "PassiveSet":
        return cls((tx,) * k)

    def validate(self, k: int) -> "PassiveSet":
        if len(self.n) != k or any(not 0 <= v < k for v in self.n):
            raise ContractError(f"passive set {self.n} invalid for K={k}")
        return self

    @property
    def is_uniform(self) -> bool:
        return len(set(self.n)) == 1


def parse_scheme(scheme: str):
    """Split a scheme id into ``(name, power_bits)``."""
    if scheme.startswith("apzf-qpower:"):
        try:
            b = int(scheme.split(":", 1)[1])
        except ValueError:
            raise ContractError(f"bad power-control bits in {scheme!r}") from None
        if b <= 0:
            raise ContractError("power-control bits must be positive")
        return "apzf-qpower", b
    if scheme not in SCHEMES:
        raise ContractError(f"unknown scheme {scheme!r}")
    return scheme, None


def _hermitian_rows(csi: TxCsi) -> np.ndarray:
    # Row i of the estimated channel matrix is h_i^H.
    return csi.estimates.conj()


def _unit_beam(v: np.ndarray, P: float, k: int) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-14:
        raise DegenerateProjectionError("projection vanished")
    return math.sqrt(P / k) * v / n


def _interferers(csi: TxCsi, i: int) -> np.ndarray:
    k = csi.k
    if not 0 <= i < k:
        raise ContractError(f"stream {i} outside 0..{k - 1}")
    return np.delete(csi.estimates, i, axis=0).T  # columns h_l, l != i


def czf_local(csi_j: TxCsi, i: int, P: float) -> np.ndarray:
    """Beamformer for stream ``i`` that zero-forces TX ``j``'s estimates."""
    return _unit_beam(proj_perp(_interferers(csi_j, i), csi_j.estimates[i]), P, csi_j.k)


def bzf_local(csi_j: TxCsi, i: int, beacon, P: float) -> np.ndarray:
    """Project a fixed beacon vector instead of the direct-channel estimate."""
    c = np.asarray(beacon, dtype=complex)
    if c.shape != (csi_j.k,) or not np.any(c):
        raise ContractError("beacon must be a non-zero vector of length K")
    return _unit_beam(proj_perp(_interferers(csi_j, i), c), P, csi_j.k)


def rzf_local(csi_j: TxCsi, alpha_col_j, i: int, P: float) -> np.ndarray:
    """Statistically robust ZF with error covariance diag(P^-alpha_k^(j)), lambda = 0."""
    k = csi_j.k
    if not 0 <= i < k:
        raise ContractError(f"stream {i} outside 0..{k - 1}")
    Hh = _hermitian_rows(csi_j)
    reg = np.diag(np.asarray(error_variance(np.asarray(alpha_col_j, dtype=float), P), dtype=float))
    gram = reg + Hh.conj().T @ Hh
    return _unit_beam(solve_small(gram, Hh.conj().T[:, i]), P, k)


def apzf_direction(csi_j: TxCsi, i: int, passive: int) -> np.ndarray:
    """Unnormalized AP-ZF vector with a 1 at the passive TX.

    The active entries solve the reduced system (rows ``!= i``, columns
    ``!= passive``) of TX ``j``'s estimate so that the beam nulls every
    estimated interfering row.
    """
    k = csi_j.k
    if not 0 <= passive < k or not 0 <= i < k:
        raise ContractError("stream or passive TX index out of range")
    rows = np.delete(_hermitian_rows(csi_j), i, axis=0)
    g = rows[:, passive]
    reduced = np.delete(rows, passive, axis=1)
    x = solve_small(reduced, -g)
    return np.insert(x, passive, 1.0)


DOF_OPTIMAL_MIN_P = 2.0


def passive_scale(P: float, k: int) -> float:
    """Fixed passive coefficient sqrt(P / (K log2 P)); requires P > 2."""
    if not P > DOF_OPTIMAL_MIN_P:
        raise ContractError("dof-optimal AP-ZF needs P > 2; use the heuristic-power variant")
    return math.sqrt(P / (k * math.log2(P)))


def quantize_power_ratio(rho: float, bits: int) -> float:
    """Uniform midpoint quantizer of rho / (1 + rho) on [0, 1) with 2^bits levels."""
    if bits <= 0:
        raise ContractError("power-control bits must be positive")
    u = rho / (1.0 + rho)
    levels = 1 << bits
    cell = min(int(u * levels), levels - 1)
    return (cell + 0.5) / levels


def apzf_local(csi_j: TxCsi, i: int, S, P: float, variant: str = "dof-optimal",
               shared_u: Optional[float] = None) -> complex:
    """Coefficient TX ``csi_j.tx`` emits on stream ``i`` under AP-ZF.

    ``variant``: ``dof-optimal`` (fixed passive power, log2 P penalty),
    ``heuristic-power`` (each TX normalizes with its own CSI) or
    ``quantized-power`` (passive amplitude sqrt(P/K (1 - u)) from the shared,
    quantized ``shared_u``).
    """
    k = csi_j.k
    n_i = S.n[i] if isinstance(S, PassiveSet) else int(S)
    j = csi_j.tx
    if variant == "dof-optimal":
        scale = passive_scale(P, k)
        return complex(scale) if j == n_i else scale * apzf_direction(csi_j, i, n_i)[j]
    if variant == "heuristic-power":
        u = apzf_direction(csi_j, i, n_i)
        return math.sqrt(P / k) * u[j] / np.linalg.norm(u)
    if variant == "quantized-power":
        if shared_u is None or not 0.0 <= shared_u < 1.0:
            raise ContractError("quantized-power needs a shared value in [0, 1)")
        a = math.sqrt(P / k * (1.0 - shared_u))
        return complex(a) if j == n_i else a * apzf_direction(csi_j, i, n_i)[j]
    raise ContractError(f"unknown AP-ZF variant {variant!r}")


def best_informed_tx(alpha: CsiScalingMatrix, i: int, passive: int) -> int:
    """Active TX holding the most accurate estimate of the interfered rows."""
    eff = np.where(np.isinf(alpha.alpha), 2.0, alpha.effective)
    others = np.delete(eff, i, axis=0)
    best, score = -1, -1.0
    for j in range(alpha.k):
        if j == passive:
            continue
        s = float(others[:, j].min())
        if s > score:
            best, score = j, s
    return best


def centralized_zf(estimates, P: float) -> PrecoderMatrix:
    """Channel-inversion ZF from one shared estimate, columns scaled to P/K."""
    A = np.asarray(estimates, dtype=complex).conj()
    k = A.shape[0]
    if A.shape != (k, k) or k < 2:
        raise InvalidDimensionError("estimate must be KxK with K >= 2")
    inv = solve_small(A, np.eye(k, dtype=complex))
    T = np.column_stack([_unit_beam(inv[:, i], P, k) for i in range(k)])
    return PrecoderMatrix(T=T, power_budget=P, scheme_tag="centralized-zf")


def assemble_distributed(per_tx: Sequence[np.ndarray], P: float = float("nan"),
                         scheme_tag: str = "") -> PrecoderMatrix:
    """Row ``j`` of the effective precoder is row ``j`` of TX ``j``'s matrix."""
    mats = [np.asarray(m, dtype=complex) for m in per_tx]
    k = len(mats)
    if k < 2 or any(m.shape != (k, k) for m in mats):
        raise InvalidDimensionError("need K matrices of shape KxK")
    T = np.stack([mats[j][j] for j in range(k)])
    return PrecoderMatrix(T=T, power_budget=P, scheme_tag=scheme_tag)


def _coarsest_tx(tx_csis: Sequence[TxCsi], alpha: Optional[CsiScalingMatrix], row: int,
                 exclude: Sequence[int] = ()) -> int:
    cands = [j for j in range(len(tx_csis)) if j not in exclude]
    if tx_csis[0].bits is not None:
        key = [tx_csis[j].bits[row] if tx_csis[j].bits[row] >= 0 else math.inf for j in cands]
    elif alpha is not None:
        key = [alpha.alpha[row, j] for j in cands]
    else:
        raise ContractError("need bit counts or alpha to rank CSI resolution")
    return cands[int(np.argmin(key))]


def _check_nested(tx_csis: Sequence[TxCsi]) -> None:
    tags = {c.model_tag for c in tx_csis}
    if len(tags) != 1 or tags.pop() not in HQ_MODELS:
        raise ContractError("hierarchical common CSI needs nested (hier-*) estimates")
    if tx_csis[0].model_tag == "hier-rvq":
        k = len(tx_csis)
        for i in range(k):
            descs = {c.indices[i][:2] for c in tx_csis if c.indices[i] is not None}
            if len(descs) > 1:
                raise ContractError(f"row {i} estimates do not share one description")


def apply_hq_common_csi(tx_csis: Sequence[TxCsi], alpha: Optional[CsiScalingMatrix] = None,
                        scheme: str = "czf", passive_set=None) -> list:
    """Replace each row by the coarsest estimate of it, which every TX can rebuild.

    ``czf``: coarsest over all TXs.  ``apzf``: coarsest over the active TXs
    (all but the uniform passive TX).
    """
    _check_nested(tx_csis)
    k = len(tx_csis)
    if scheme == "czf":
        exclude = ()
    elif scheme == "apzf":
        if passive_set is None:
            raise ContractError("apzf common CSI needs the passive TX")
        ps = passive_set if isinstance(passive_set, PassiveSet) else PassiveSet.uniform(k, passive_set)
        ps.validate(k)
        if not ps.is_uniform:
            raise ContractError("common CSI is per stream for non-uniform sets; pass one TX")
        exclude = (ps.n[0],)
    else:
        raise ContractError(f"unknown scheme {scheme!r} for common CSI")
    rows = {i: tx_csis[_coarsest_tx(tx_csis, alpha, i, exclude)].estimates[i] for i in range(k)}
    return [c.replace_rows(rows) for c in tx_csis]


def _local_matrix(scheme: str, csi: TxCsi, P: float, beacon: np.ndarray,
                  alpha: Optional[CsiScalingMatrix]) -> np.ndarray:
    k = csi.k
    cols = []
    for i in range(k):
        if scheme == "bzf":
            cols.append(bzf_local(csi, i, beacon, P))
        elif scheme == "rzf":
            cols.append(rzf_local(csi, alpha.alpha[:, csi.tx], i, P))
        else:
            cols.append(czf_local(csi, i, P))
    return np.column_stack(cols)


def distributed_precoder(scheme: str, tx_csis: Sequence[TxCsi], P: float,
                         alpha: Optional[CsiScalingMatrix] = None,
                         passive_set: Optional[PassiveSet] = None,
                         beacon=None) -> PrecoderMatrix:
    """Effective precoder for one of the scheme identifiers in :data:`SCHEMES`.

    ``perfect-zf`` expects every TX to hold the true normalized channel and
    is otherwise identical to ``czf``.
    """
    name, qbits = parse_scheme(scheme)
    k = len(tx_csis)
    if beacon is None:
        beacon = np.eye(k, dtype=complex)[0]
    if name in ("rzf", "apzf", "apzf-heuristic", "apzf-qpower", "czf-hq", "apzf-hq") and alpha is None:
        if name != "czf-hq" or tx_csis[0].bits is None:
            raise ContractError(f"{scheme} needs the CSI scaling matrix")
    if name in ("perfect-zf", "czf", "bzf", "rzf"):
        mats = [_local_matrix(name, c, P, beacon, alpha) for c in tx_csis]
        return assemble_distributed(mats, P, scheme)
    if name == "czf-hq":
        common = apply_hq_common_csi(tx_csis, alpha, "czf")
        mats = [_local_matrix("czf", c, P, beacon, alpha) for c in common]
        return assemble_distributed(mats, P, scheme)

    from .doftheory import select_passive_set  # local import: doftheory is pure math

    hq = name == "apzf-hq"
    S = (passive_set or select_passive_set(alpha, hq=hq)).validate(k)
    T = np.empty((k, k), dtype=complex)
    for i in range(k):
        n_i = S.n[i]
        csis = apply_hq_common_csi(tx_csis, alpha, "apzf", n_i) if hq else tx_csis
        if name in ("apzf", "apzf-hq"):
            for j in range(k):
                T[j, i] = apzf_local(csis[j], i, n_i, P, "dof-optimal")
        elif name == "apzf-heuristic":
            for j in range(k):
                T[j, i] = apzf_local(csis[j], i, n_i, P, "heuristic-power")
        else:
            best = best_informed_tx(alpha, i, n_i)
            d = apzf_direction(csis[best], i, n_i)
            rho = float(np.linalg.norm(d) ** 2 - 1.0)
            u_hat = quantize_power_ratio(rho, qbits)
            for j in range(k):
                T[j, i] = apzf_local(csis[j], i, n_i, P, "quantized-power", shared_u=u_hat)
    return PrecoderMatrix(T=T, power_budget=P, scheme_tag=scheme)


def safe_precoder(*args, **kwargs) -> Optional[PrecoderMatrix]:
    """:func:`distributed_precoder` returning None on measure-zero degeneracy."""
    try:
        return distributed_precoder(*args, **kwargs)
    except NumericalDegeneracyError:
        return None
