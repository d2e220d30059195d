"""Closed-form degrees-of-freedom calculators.

All functions accept raw (unclipped) CSI scaling matrices; clipping to
[0, 1] goes through :func:`dcsi.csi.effective_alpha`.  TX and RX indices are
0-based; ``alpha[i, j]`` is RX ``i``'s channel as known at TX ``j``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .csi import CsiScalingMatrix, effective_alpha
from .precoders import PassiveSet


@dataclass(frozen=True)
class DofReport:
    per_user: tuple
    scheme_tag: str
    passive_set: Optional[tuple] = None
    note: str = field(default="", compare=False)

    @property
    def total(self) -> float:
        return float(sum(self.per_user))

    def to_dict(self) -> dict:
        d = {"scheme": self.scheme_tag, "per_user": list(self.per_user), "total": self.total}
        if self.passive_set is not None:
            d["passive_set"] = list(self.passive_set)
        if self.note:
            d["note"] = self.note
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _eff(alpha) -> np.ndarray:
    a = alpha.alpha if isinstance(alpha, CsiScalingMatrix) else np.asarray(alpha, dtype=float)
    return np.asarray(effective_alpha(a), dtype=float)


def _report(values, tag, S=None, note="") -> DofReport:
    return DofReport(tuple(float(v) for v in values), tag,
                     None if S is None else tuple(S.n), note)


def dof_bc(alpha_per_user) -> DofReport:
    """Broadcast channel with one shared estimate per user: sum of alphas."""
    a = np.atleast_1d(effective_alpha(np.asarray(alpha_per_user, dtype=float)))
    return _report(a, "bc")


def dof_czf(alpha) -> DofReport:
    a = _eff(alpha)
    return _report(np.full(a.shape[0], a.min()), "czf")


def dof_bzf(alpha) -> DofReport:
    """Per user k: min over interfering streams i != k of min over rows l != i, all TXs."""
    a = _eff(alpha)
    k = a.shape[0]
    leak = [np.delete(a, i, axis=0).min() for i in range(k)]
    return _report([min(leak[i] for i in range(k) if i != u) for u in range(k)], "bzf")


def _apzf_stream_leak(a: np.ndarray, S: PassiveSet) -> list:
    # Stream i leaks with exponent min over rows l != i and TXs j != n_i.
    k = a.shape[0]
    return [np.delete(np.delete(a, i, axis=0), S.n[i], axis=1).min() for i in range(k)]


def dof_apzf(alpha, S: Optional[PassiveSet] = None) -> DofReport:
    """Active-passive ZF with passive set ``S`` (optimal set when omitted).

    With two users and the optimal set this is sum_i max_j alpha_i^(j), which
    matches the broadcast channel sharing the best estimate of every row.
    """
    a = _eff(alpha)
    k = a.shape[0]
    S = (S or select_passive_set(a)).validate(k)
    leak = _apzf_stream_leak(a, S)
    note = "two-user value: lower bound, tight" if k == 2 else ""
    return _report([min(leak[i] for i in range(k) if i != u) for u in range(k)], "apzf", S, note)


def _hq_score(a: np.ndarray, n: int) -> float:
    return float(np.delete(a, n, axis=1).min(axis=1).sum())


def select_passive_set(alpha, hq: bool = False) -> PassiveSet:
    """DoF-optimal passive TX per stream.

    K >= 3: one TX for every stream, the one holding the global minimum
    (plain) or maximizing sum_k min_{j != n} alpha_k^(j) (hierarchical).
    K = 2: per stream, the TX with the worse estimate of the interfered user.
    Ties go to the lowest TX index.
    """
    a = _eff(alpha)
    k = a.shape[0]
    if k == 2:
        return PassiveSet(tuple(int(np.argmin(a[1 - i])) for i in range(2)))
    if hq:
        scores = [_hq_score(a, n) for n in range(k)]
        return PassiveSet.uniform(k, int(np.argmax(scores)))
    return PassiveSet.uniform(k, int(np.argmin(a.min(axis=0))))


def dof_czf_hq(alpha) -> DofReport:
    a = _eff(alpha)
    return _report(a.min(axis=1), "czf-hq")


def dof_apzf_hq(alpha, S: Optional[PassiveSet] = None) -> DofReport:
    """AP-ZF on common hierarchical CSI.

    Per user k: min over streams i != k of min_{j != n_i} alpha_k^(j).  With
    the automatic uniform set this is sum_i min_{j != n_HQ} alpha_i^(j).
    """
    a = _eff(alpha)
    k = a.shape[0]
    S = (S or select_passive_set(a, hq=True)).validate(k)
    per = []
    for u in range(k):
        per.append(min(np.delete(a[u], S.n[i]).min() for i in range(k) if i != u))
    return _report(per, "apzf-hq", S)


CALCULATORS = {
    "czf": dof_czf,
    "bzf": dof_bzf,
    "apzf": dof_apzf,
    "czf-hq": dof_czf_hq,
    "apzf-hq": dof_apzf_hq,
}


def dof_for_scheme(scheme: str, alpha) -> DofReport:
    """Closed form for a simulation scheme id.

    Quantized power control shares AP-ZF's value; the heuristic power
    normalization has no closed form and raises KeyError.
    """
    if scheme == "perfect-zf":
        k = _eff(alpha).shape[0]
        return _report(np.ones(k), "perfect-zf")
    if scheme == "rzf":
        r = dof_czf(alpha)
        return DofReport(r.per_user, "rzf")
    base = "apzf" if scheme.startswith("apzf-qpower:") else scheme
    if base not in CALCULATORS:
        raise KeyError(scheme)
    return CALCULATORS[base](alpha)
