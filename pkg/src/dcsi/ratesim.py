"""Monte-Carlo rate engine: instantaneous and ergodic rates, leakage and
high-SNR slope estimates.

Trial ``t`` uses ``RngSeed(master_seed, first_stream + t)`` for every draw it
makes, and reuses those draws across all SNR points and schemes (common
random numbers).  Per-trial results are buffered and reduced in trial
order, so the output does not depend on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelRealization, RngSeed, sample_channel
from .csi import (
    DEFAULT_MAX_BITS,
    MODELS,
    BitMatrix,
    CsiScalingMatrix,
    TxCsi,
    build_tx_csi,
    draw_statistical_noise,
    statistical_csi,
)
from .errors import ContractError, InvalidDimensionError
from .precoders import (
    DOF_OPTIMAL_MIN_P,
    PassiveSet,
    PrecoderMatrix,
    parse_scheme,
    safe_precoder,
)

_LOG2_10_OVER_10 = math.log2(10.0) / 10.0


def db_to_linear(snr_db) -> np.ndarray:
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def _cross_gains(ch: ChannelRealization, T: PrecoderMatrix) -> np.ndarray:
    H = ch.H if isinstance(ch, ChannelRealization) else np.asarray(ch, dtype=complex)
    M = T.T if isinstance(T, PrecoderMatrix) else np.asarray(T, dtype=complex)
    if H.shape != M.shape or H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidDimensionError(f"channel {H.shape} and precoder {M.shape} do not match")
    G = H.conj() @ M  # G[i, l] = h_i^H t_l
    return (G * G.conj()).real


def interference_leakage(ch: ChannelRealization, T: PrecoderMatrix) -> np.ndarray:
    """Per-user sum over l != i of |h_i^H t_l|^2."""
    g = _cross_gains(ch, T)
    return g.sum(axis=1) - np.diag(g)


def instantaneous_rates(ch: ChannelRealization, T: PrecoderMatrix) -> np.ndarray:
    """log2(1 + |h_i^H t_i|^2 / (1 + interference)) with unit noise power."""
    g = _cross_gains(ch, T)
    sig = np.diag(g)
    interf = np.maximum(g.sum(axis=1) - sig, 0.0)
    return np.log2(1.0 + sig / (1.0 + interf))


@dataclass(frozen=True)
class SimConfig:
    """One Monte-Carlo experiment.

    Give either ``alpha`` (exponents; RVQ bits then follow the bit rule at
    each SNR) or ``bits`` (fixed RVQ bit counts for every SNR).
    """

    k: int
    csi_model: str = "statistical"
    schemes: tuple = ("czf",)
    snr_db: tuple = (50.0, 60.0, 70.0, 80.0)
    trials: int = 2000
    master_seed: int = 0
    alpha: Optional[CsiScalingMatrix] = None
    bits: Optional[BitMatrix] = None
    beacon: Optional[tuple] = None
    passive_set: Optional[tuple] = None
    max_bits: int = DEFAULT_MAX_BITS
    first_stream: int = 0

    def __post_init__(self):
        if isinstance(self.schemes, str):
            object.__setattr__(self, "schemes", (self.schemes,))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if self.alpha is not None and not isinstance(self.alpha, CsiScalingMatrix):
            object.__setattr__(self, "alpha", CsiScalingMatrix(np.asarray(self.alpha, dtype=float)))
        if self.bits is not None and not isinstance(self.bits, BitMatrix):
            object.__setattr__(self, "bits", BitMatrix(np.asarray(self.bits), self.max_bits))
        if self.passive_set is not None:
            object.__setattr__(self, "passive_set", tuple(int(v) for v in self.passive_set))
        if self.beacon is not None:
            object.__setattr__(self, "beacon", tuple(complex(v) for v in self.beacon))
        self.validate()

    def validate(self) -> None:
        if self.k < 2:
            raise InvalidDimensionError("k must be >= 2")
        if int(self.trials) < 1:
            raise ContractError("trials must be >= 1")
        if not self.snr_db:
            raise ContractError("SNR grid is empty")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ContractError("SNR grid must be strictly increasing")
        if self.csi_model not in MODELS:
            raise ContractError(f"unknown CSI model {self.csi_model!r}; expected one of {MODELS}")
        if not self.schemes:
            raise ContractError("no schemes requested")
        for s in self.schemes:
            parse_scheme(s)
        if self.alpha is None and self.bits is None:
            raise ContractError("give a CSI scaling matrix or a bit matrix")
        if self.bits is not None and self.csi_model not in ("rvq", "hier-rvq"):
            raise ContractError("fixed bit counts apply to the rvq models only")
        for m in (self.alpha, self.bits):
            if m is not None and m.k != self.k:
                raise InvalidDimensionError("matrix size does not match k")
        if self.passive_set is not None:
            PassiveSet(self.passive_set).validate(self.k)
        if self.beacon is not None and len(self.beacon) != self.k:
            raise ContractError("beacon must have K entries")

    def alpha_at(self, P: float) -> CsiScalingMatrix:
        return self.alpha if self.bits is None else self.bits.equivalent_alpha(P)

    def to_dict(self) -> dict:
        def cplx(v):
            return [[z.real, z.imag] for z in v]
        return {
            "k": self.k,
            "csi_model": self.csi_model,
            "schemes": list(self.schemes),
            "snr_db": list(self.snr_db),
            "trials": int(self.trials),
            "master_seed": int(self.master_seed),
            "alpha": None if self.alpha is None else _matrix_to_json(self.alpha.alpha),
            "bits": None if self.bits is None else self.bits.bits.tolist(),
            "beacon": None if self.beacon is None else cplx(self.beacon),
            "passive_set": None if self.passive_set is None else list(self.passive_set),
            "max_bits": self.max_bits,
            "first_stream": self.first_stream,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if d.get("alpha") is not None:
            d["alpha"] = CsiScalingMatrix(_matrix_from_json(d["alpha"]))
        if d.get("bits") is not None:
            d["bits"] = BitMatrix(np.asarray(d["bits"], dtype=int), int(d.get("max_bits", DEFAULT_MAX_BITS)))
        if d.get("beacon") is not None:
            d["beacon"] = tuple(complex(re, im) for re, im in d["beacon"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ContractError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


def _matrix_to_json(a: np.ndarray) -> list:
    # JSON has no Infinity; perfect-CSI entries travel as the string "inf".
    return [["inf" if math.isinf(v) else float(v) for v in row] for row in a]


def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[math.inf if v in ("inf", "Infinity") else float(v) for v in row]
                     for row in rows], dtype=float)


@dataclass(frozen=True)
class RateCurve:
    """Ergodic rates of one scheme on an SNR grid.

    ``per_user_rate``, ``leakage`` and ``stderr_user`` are K x G; the
    ``trial_*`` arrays keep per-trial values for paired comparisons and
    slope standard errors.  ``fallback_snr_db`` lists points where
    dof-optimal AP-ZF was replaced by its heuristic-power variant (P <= 2).
    """

    scheme: str
    snr_db: np.ndarray
    per_user_rate: np.ndarray
    sum_rate: np.ndarray
    leakage: np.ndarray
    stderr_user: np.ndarray
    stderr_sum: np.ndarray
    mc_trials: int
    seed: dict
    degenerate: np.ndarray
    fallback_snr_db: tuple = ()
    trial_user_rates: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def k(self) -> int:
        return self.per_user_rate.shape[0]

    @property
    def trial_sum_rates(self) -> Optional[np.ndarray]:
        if self.trial_user_rates is None:
            return None
        return self.trial_user_rates.sum(axis=2)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "snr_db": self.snr_db.tolist(),
            "per_user_rate": self.per_user_rate.tolist(),
            "sum_rate": self.sum_rate.tolist(),
            "leakage": self.leakage.tolist(),
            "stderr_user": self.stderr_user.tolist(),
            "stderr_sum": self.stderr_sum.tolist(),
            "mc_trials": self.mc_trials,
            "seed": self.seed,
            "degenerate": self.degenerate.tolist(),
            "fallback_snr_db": list(self.fallback_snr_db),
        }


def csv_columns(k: int) -> list:
    return (["snr_db"] + [f"rate_user_{i + 1}" for i in range(k)] + ["sum_rate"]
            + [f"leakage_user_{i + 1}" for i in range(k)]
            + [f"stderr_user_{i + 1}" for i in range(k)] + ["stderr_sum"])


def curve_to_csv(curve: RateCurve, header: Sequence[str] = ()) -> str:
    """CSV with one row per SNR point; ``header`` lines are emitted as ``# `` comments."""
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(curve.k))
    for g, snr in enumerate(curve.snr_db):
        w.writerow([repr(float(snr))]
                   + [repr(float(v)) for v in curve.per_user_rate[:, g]]
                   + [repr(float(curve.sum_rate[g]))]
                   + [repr(float(v)) for v in curve.leakage[:, g]]
                   + [repr(float(v)) for v in curve.stderr_user[:, g]]
                   + [repr(float(curve.stderr_sum[g]))])
    return buf.getvalue()


def curves_to_json(cfg: SimConfig, curves: dict, provenance: Optional[dict] = None) -> str:
    doc = {"config": cfg.to_dict(), "curves": {s: c.to_dict() for s, c in curves.items()}}
    if provenance:
        doc["provenance"] = provenance
    return json.dumps(doc, indent=2)


# --------------------------------------------------------------------------
# Simulation
# --------------------------------------------------------------------------

def _perfect_csi(ch: ChannelRealization) -> list:
    return [TxCsi(ch.Hnorm, "perfect", j) for j in range(ch.k)]


def _scheme_at(scheme: str, P: float) -> str:
    # The log2 P passive scale is undefined for P <= 2; fall back to the
    # locally normalized variant there.
    if scheme in ("apzf", "apzf-hq") and P <= DOF_OPTIMAL_MIN_P:
        return "apzf-heuristic"
    return scheme


def substituted_points(cfg: SimConfig) -> dict:
    """Scheme -> SNR points (dB) simulated with the heuristic-power fallback."""
    out = {}
    for scheme in cfg.schemes:
        pts = [s for s, P in zip(cfg.snr_db, db_to_linear(cfg.snr_db)) if _scheme_at(scheme, P) != scheme]
        if pts:
            out[scheme] = pts
    return out


def run_trial(cfg: SimConfig, t: int):
    """Rates and leakage of trial ``t`` for every scheme and SNR point.

    Returns ``(rates, leakage, degenerate)`` with shapes (S, G, K), (S, G, K)
    and (S, G).  A degenerate precoder (measure-zero event) scores rate 0.
    """
    k = cfg.k
    seed = RngSeed(cfg.master_seed, cfg.first_stream + t)
    ch = sample_channel(k, seed)
    S, G = len(cfg.schemes), len(cfg.snr_db)
    rates = np.zeros((S, G, k))
    leak = np.zeros((S, G, k))
    degen = np.zeros((S, G), dtype=bool)
    beacon = None if cfg.beacon is None else np.asarray(cfg.beacon, dtype=complex)
    passive = None if cfg.passive_set is None else PassiveSet(cfg.passive_set)
    perfect = _perfect_csi(ch)
    statistical = cfg.csi_model in ("statistical", "hier-statistical")
    noise = draw_statistical_noise(k, seed) if statistical else None
    fixed_csi = None
    if cfg.bits is not None:
        # Fixed bit counts: the quantized CSI does not depend on SNR.
        fixed_csi = build_tx_csi(ch, cfg.bits.equivalent_alpha(2.0), 2.0, cfg.csi_model, seed,
                                 bit_rule=cfg.bits, max_bits=cfg.max_bits)
    imperfect_needed = any(s != "perfect-zf" for s in cfg.schemes)
    for g, P in enumerate(db_to_linear(cfg.snr_db)):
        P = float(P)
        alpha = cfg.alpha_at(P)
        csis = None
        if imperfect_needed:
            if fixed_csi is not None:
                csis = fixed_csi
            elif statistical:
                csis = statistical_csi(ch, alpha, P, noise, nested=cfg.csi_model == "hier-statistical")
            else:
                csis = build_tx_csi(ch, alpha, P, cfg.csi_model, seed, max_bits=cfg.max_bits)
        for s, scheme in enumerate(cfg.schemes):
            src = perfect if scheme == "perfect-zf" else csis
            T = safe_precoder(_scheme_at(scheme, P), src, P, alpha=alpha, passive_set=passive,
                              beacon=beacon)
            if T is None:
                degen[s, g] = True
                continue
            rates[s, g] = instantaneous_rates(ch, T)
            leak[s, g] = interference_leakage(ch, T)
    return rates, leak, degen


def _run_block(cfg: SimConfig, start: int, stop: int):
    out = [run_trial(cfg, t) for t in range(start, stop)]
    return (np.stack([o[0] for o in out]), np.stack([o[1] for o in out]),
            np.stack([o[2] for o in out]))


def _blocks(trials: int, workers: int) -> list:
    n = max(1, min(trials, workers * 4))
    edges = np.linspace(0, trials, n + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges, edges[1:]) if b > a]


def simulate(cfg: SimConfig, workers: int = 1):
    """Per-trial buffers ``(rates, leakage, degenerate)`` in trial order."""
    trials = int(cfg.trials)
    if workers <= 1 or trials < 2:
        return _run_block(cfg, 0, trials)
    blocks = _blocks(trials, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_block, [cfg] * len(blocks),
                              [b[0] for b in blocks], [b[1] for b in blocks]))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def _stderr(x: np.ndarray, axis: int = 0) -> np.ndarray:
    n = x.shape[axis]
    if n < 2:
        return np.zeros(np.delete(x.shape, axis))
    return x.std(axis=axis, ddof=1) / math.sqrt(n)


def ergodic_curves(cfg: SimConfig, workers: int = 1) -> dict:
    """Scheme id -> :class:`RateCurve`, all schemes evaluated on the same draws."""
    rates, leak, degen = simulate(cfg, workers)
    out = {}
    seed = {"master_seed": int(cfg.master_seed), "first_stream": int(cfg.first_stream),
            "streams": int(cfg.trials)}
    snr = np.array(cfg.snr_db)
    subs = substituted_points(cfg)
    for s, scheme in enumerate(cfg.schemes):
        r = rates[:, s]  # (trials, G, K)
        tot = r.sum(axis=2)
        per_user = r.mean(axis=0).T
        out[scheme] = RateCurve(
            scheme=scheme,
            snr_db=snr,
            per_user_rate=per_user,
            sum_rate=per_user.sum(axis=0),
            leakage=leak[:, s].mean(axis=0).T,
            stderr_user=_stderr(r).T,
            stderr_sum=_stderr(tot),
            mc_trials=int(cfg.trials),
            seed=dict(seed),
            degenerate=degen[:, s].sum(axis=0),
            fallback_snr_db=tuple(subs.get(scheme, ())),
            trial_user_rates=r,
        )
    return out


def ergodic_curve(cfg: SimConfig, workers: int = 1) -> RateCurve:
    if len(cfg.schemes) != 1:
        raise ContractError("ergodic_curve takes exactly one scheme; use ergodic_curves")
    return ergodic_curves(cfg, workers)[cfg.schemes[0]]


# --------------------------------------------------------------------------
# Slopes and paired comparisons
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeEstimate:
    per_user: np.ndarray
    per_user_stderr: np.ndarray
    sum: float
    sum_stderr: float
    window: tuple
    points: int


def _window_mask(snr_db: np.ndarray, window) -> np.ndarray:
    lo, hi = float(window[0]), float(window[1])
    if lo > hi:
        raise ContractError("window must be [low, high]")
    if lo < snr_db.min() - 1e-9 or hi > snr_db.max() + 1e-9:
        raise ContractError(f"window {window} lies outside the SNR grid")
    mask = (snr_db >= lo - 1e-9) & (snr_db <= hi + 1e-9)
    if mask.sum() < 2:
        raise ContractError("slope window needs at least two grid points")
    return mask


def _ols_weights(x: np.ndarray) -> np.ndarray:
    xc = x - x.mean()
    return xc / np.dot(xc, xc)


def dof_slope(curve: RateCurve, window=(50.0, 80.0)) -> SlopeEstimate:
    """Least-squares slope of rate versus log2 P inside ``window`` (dB).

    The standard error uses the spread of per-trial slopes when per-trial
    data are kept, otherwise the regression residuals.
    """
    snr = np.asarray(curve.snr_db, dtype=float)
    mask = _window_mask(snr, window)
    x = snr[mask] * _LOG2_10_OVER_10
    w = _ols_weights(x)
    y_user = curve.per_user_rate[:, mask]
    per_user = y_user @ w
    total = float(curve.sum_rate[mask] @ w)
    trial = curve.trial_user_rates
    if trial is not None and trial.shape[0] >= 2:
        per_trial = np.einsum("tgk,g->tk", trial[:, mask], w)
        se_user = _stderr(per_trial)
        se_sum = float(_stderr(per_trial.sum(axis=1)))
    else:
        se_user = np.array([_residual_se(x, y) for y in y_user])
        se_sum = _residual_se(x, curve.sum_rate[mask])
    return SlopeEstimate(per_user, se_user, total, se_sum, (float(window[0]), float(window[1])),
                         int(mask.sum()))


def _residual_se(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    if n < 3:
        return 0.0
    w = _ols_weights(x)
    b = float(y @ w)
    a = y.mean() - b * x.mean()
    res = y - (a + b * x)
    s2 = float(res @ res) / (n - 2)
    return math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))


def paired_gap(better: RateCurve, worse: RateCurve, snr_db: float):
    """Mean and standard error of the per-trial sum-rate difference at one SNR.

    Both curves must come from the same simulation (shared draws).
    """
    if better.trial_user_rates is None or worse.trial_user_rates is None:
        raise ContractError("paired comparison needs per-trial data")
    if better.seed != worse.seed or better.mc_trials != worse.mc_trials:
        raise ContractError("curves were not simulated on the same draws")
    idx = np.flatnonzero(np.isclose(better.snr_db, snr_db))
    if idx.size != 1:
        raise ContractError(f"{snr_db} dB is not on the grid")
    d = better.trial_sum_rates[:, idx[0]] - worse.trial_sum_rates[:, idx[0]]
    return float(d.mean()), float(_stderr(d[:, None])[0])
