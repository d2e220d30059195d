"""DoF-optimal sharing of a total feedback budget across TXs and users.

``gamma`` is a bit-scaling budget: serving ``n`` users with uniform
exponent ``alpha`` costs ``n^2 (n-1) alpha`` for conventional ZF and
``n (n-1)^2 alpha`` for active-passive ZF (the passive TX gets no feedback).
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .csi import CsiScalingMatrix
from .errors import ContractError

ALLOC_SCHEMES = ("czf", "apzf")
CSV_COLUMNS = ("gamma", "scheme", "n_active", "alpha", "dof")


@dataclass(frozen=True)
class AllocationPlan:
    gamma: float
    n_active: int
    per_link_alpha: float
    dof: float
    scheme: str

    @property
    def spend(self) -> float:
        return cost_per_alpha(self.n_active, self.scheme) * self.per_link_alpha

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spend"] = self.spend
        return d


def cost_per_alpha(n: int, scheme: str) -> int:
    if scheme == "czf":
        return n * n * (n - 1)
    if scheme == "apzf":
        return n * (n - 1) ** 2
    raise ContractError(f"allocation is defined for {ALLOC_SCHEMES}, not {scheme!r}")


def saturation_point(n: int, scheme: str = "czf") -> int:
    """Smallest budget at which ``n`` users reach full DoF."""
    return cost_per_alpha(n, scheme)


def activation_point(n: int, scheme: str = "czf") -> int:
    """Budget above which serving ``n + 1`` users beats ``n``."""
    return (n + 1) * n * n if scheme == "czf" else n ** 3


def _check_gamma(gamma: float) -> float:
    g = float(gamma)
    if not g >= 0.0:
        raise ContractError(f"gamma must be >= 0, got {gamma}")
    return g


def _allocate(gamma: float, scheme: str) -> AllocationPlan:
    g = _check_gamma(gamma)
    n = 1
    while g > activation_point(n, scheme):
        n += 1
    if n == 1:
        return AllocationPlan(g, 1, 1.0, 1.0, scheme)
    alpha = min(1.0, g / cost_per_alpha(n, scheme))
    return AllocationPlan(g, n, alpha, n * alpha, scheme)


def allocate_czf(gamma: float) -> AllocationPlan:
    """Conventional ZF: uniform exponent over all n^2 links, best user count n."""
    return _allocate(gamma, "czf")


def allocate_apzf(gamma: float) -> AllocationPlan:
    return _allocate(gamma, "apzf")


def allocate(gamma: float, scheme: str) -> AllocationPlan:
    cost_per_alpha(2, scheme)
    return _allocate(gamma, scheme)


def allocation_sweep(gammas, scheme: str) -> list:
    grid = [float(g) for g in gammas]
    if not grid:
        raise ContractError("gamma grid is empty")
    return [allocate(g, scheme) for g in grid]


def sweep_to_csv(plans) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in plans:
        w.writerow([repr(p.gamma), p.scheme, p.n_active, repr(p.per_link_alpha), repr(p.dof)])
    return buf.getvalue()


def expand_to_matrix(plan: AllocationPlan, passive_tx: int = 0) -> CsiScalingMatrix:
    """Uniform CSI matrix realizing ``plan``; AP-ZF zeroes the passive TX column."""
    n = plan.n_active
    if n < 2:
        raise ContractError("a single served user needs no CSI scaling matrix")
    a = np.full((n, n), plan.per_link_alpha)
    if plan.scheme == "apzf":
        a[:, passive_tx] = 0.0
    return CsiScalingMatrix(a)
