"""Command-line front end.

Every command builds a plain-dict experiment record from its flags (a
``--config`` JSON file overrides them), hashes it for the provenance header
and writes CSV/JSON either to stdout or atomically into ``--out DIR``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .channel import RngSeed, TAG_QUANTCHECK
from .csi import (
    DEFAULT_MAX_BITS,
    MODELS,
    bounds_regime_ok,
    distortion_bounds,
    log_distortion_bounds,
    sample_min_sin2,
)
from .doftheory import dof_for_scheme
from .errors import ContractError, DCSIError, NumericalDegeneracyError, ResourceCapError
from .feedback_alloc import allocation_sweep, sweep_to_csv
from .ratesim import SimConfig, curve_to_csv, curves_to_json, dof_slope, ergodic_curves

SEED_ENV = "DCSI_SEED"

APPD_ALPHA = np.ones((7, 7))
APPD_ALPHA[0, 0] = 0.0
APPD_ALPHA[4, 5] = 0.3

CANNED = {
    "fig2": {
        "command": "rate", "k": 2, "alpha": "1,0.5;0,0.7", "bits": None, "model": "statistical",
        "schemes": "czf,rzf,bzf,apzf,perfect-zf", "snr": "0:10:80", "trials": 2000,
    },
    "fig3": {
        "command": "rate", "k": 2, "alpha": None, "bits": "6,3;3,6", "model": "rvq",
        "schemes": "czf,bzf,apzf-qpower:3,perfect-zf", "snr": "0:5:40", "trials": 2000,
    },
    "fig4": {"command": "alloc", "scheme": "czf,apzf", "gamma": "0:0.5:40"},
    "appD": {
        "command": "dof", "alpha": ";".join(",".join(repr(float(v)) for v in row) for row in APPD_ALPHA),
        "schemes": "czf,apzf,czf-hq,apzf-hq",
    },
}


# --------------------------------------------------------------------------
# Flag parsing helpers
# --------------------------------------------------------------------------

def parse_matrix(text: str) -> np.ndarray:
    """``"1,0.5;0,0.7"`` -> 2x2 array; ``inf`` marks perfect CSI."""
    if not isinstance(text, str) or not text.strip():
        raise ContractError("empty matrix")
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.strip().split(";")]
    except ValueError as exc:
        raise ContractError(f"malformed matrix {text!r}: {exc}") from None
    if len({len(r) for r in rows}) != 1:
        raise ContractError(f"ragged matrix {text!r}")
    a = np.array(rows, dtype=float)
    if np.any(np.isnan(a)):
        raise ContractError("matrix entries must be numbers")
    return a


def parse_grid(text) -> list:
    """``"a:step:b"`` (inclusive) or a comma list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if not text:
        return []
    try:
        if ":" in text:
            parts = [float(v) for v in text.split(":")]
            if len(parts) != 3:
                raise ValueError("expected start:step:stop")
            a, step, b = parts
            if step <= 0:
                raise ValueError("step must be positive")
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return [a + i * step for i in range(max(n, 0))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ContractError(f"malformed grid {text!r}: {exc}") from None


def parse_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _resolve_seed(value) -> int:
    if value is None:
        value = os.environ.get(SEED_ENV, "0")
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ContractError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise ContractError("seed must be a 64-bit unsigned integer")
    return seed


# --------------------------------------------------------------------------
# Provenance and output
# --------------------------------------------------------------------------

def spec_hash(spec: dict) -> str:
    return hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()


def provenance(spec: dict) -> dict:
    return {"tool": "dcsi", "version": __version__, "spec_sha256": spec_hash(spec),
            "seed": spec.get("seed")}


def _header(spec: dict) -> list:
    p = provenance(spec)
    return [f"dcsi {p['version']}", f"spec_sha256 {p['spec_sha256']}", f"seed {p['seed']}",
            "spec " + json.dumps(spec, sort_keys=True)]


def _with_header(spec: dict, body: str) -> str:
    return "".join(f"# {line}\n" for line in _header(spec)) + body


def emit(files: dict, out_dir, stream=None) -> None:
    """Write ``{name: text}`` into ``out_dir`` or print it.

    Files are staged in a temporary directory and moved into place only
    after everything was produced, so failures leave no partial output.
    """
    stream = stream or sys.stdout
    if out_dir is None:
        for name, text in files.items():
            if len(files) > 1:
                stream.write(f"==> {name} <==\n")
            stream.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".staging-") as tmp:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))


# --------------------------------------------------------------------------
# Commands: each takes the experiment record and returns {filename: text}
# --------------------------------------------------------------------------

def _safe_name(scheme: str) -> str:
    return scheme.replace(":", "-")


def sim_config_from_spec(spec: dict) -> SimConfig:
    alpha = spec.get("alpha")
    bits = spec.get("bits")
    passive = spec.get("passive")
    beacon = spec.get("beacon")
    k = spec.get("k")
    a = parse_matrix(alpha) if alpha else None
    b = parse_matrix(bits) if bits else None
    if b is not None and not np.all(np.isfinite(b)):
        raise ContractError("bit counts must be finite")
    if k is None:
        k = (a if a is not None else b).shape[0] if (a is not None or b is not None) else None
    if k is None:
        raise ContractError("give --k with --alpha or --bits")
    return SimConfig(
        k=int(k),
        csi_model=spec.get("model", "statistical"),
        schemes=tuple(parse_list(spec.get("schemes", "czf"))),
        snr_db=tuple(parse_grid(spec.get("snr", "50:10:80"))),
        trials=int(spec.get("trials", 2000)),
        master_seed=int(spec["seed"]),
        alpha=a,
        bits=None if b is None else b.astype(int),
        beacon=None if beacon is None else tuple(float(v) for v in parse_list(beacon)),
        passive_set=None if passive is None else tuple(int(v) for v in parse_list(passive)),
        max_bits=int(spec.get("max_bits", DEFAULT_MAX_BITS)),
    )


def cmd_rate(spec: dict, threads: int = 1, prefix: str = "") -> dict:
    cfg = sim_config_from_spec(spec)
    curves = ergodic_curves(cfg, workers=threads)
    head = _header(spec)
    files = {}
    for scheme, curve in curves.items():
        files[f"{prefix}rate_{_safe_name(scheme)}.csv"] = curve_to_csv(curve, head + [f"scheme {scheme}"])
    window = spec.get("window")
    prov = provenance(spec)
    doc = json.loads(curves_to_json(cfg, curves, prov))
    doc["spec"] = spec
    if window:
        lo, hi = parse_grid(window)
        doc["slopes"] = {}
        for scheme, curve in curves.items():
            e = dof_slope(curve, (lo, hi))
            doc["slopes"][scheme] = {"sum": e.sum, "sum_stderr": e.sum_stderr,
                                     "per_user": e.per_user.tolist(),
                                     "per_user_stderr": e.per_user_stderr.tolist()}
    files[f"{prefix}rate.json"] = json.dumps(doc, indent=2) + "\n"
    return files


def dof_table(alpha: np.ndarray, schemes) -> list:
    return [dof_for_scheme(s, alpha) for s in schemes]


def cmd_dof(spec: dict, threads: int = 1, prefix: str = "") -> dict:
    alpha = parse_matrix(spec["alpha"])
    if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1] or alpha.shape[0] < 2:
        raise ContractError(f"alpha must be KxK with K >= 2, got {alpha.shape}")
    schemes = parse_list(spec.get("schemes", "czf,apzf,czf-hq,apzf-hq"))
    try:
        reports = dof_table(alpha, schemes)
    except KeyError as exc:
        raise ContractError(f"no closed-form DoF for scheme {exc.args[0]!r}") from None
    k = alpha.shape[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "dof_total"] + [f"dof_user_{i + 1}" for i in range(k)] + ["passive_set"])
    for r in reports:
        ps = "" if r.passive_set is None else " ".join(str(v) for v in r.passive_set)
        w.writerow([r.scheme_tag, repr(r.total)] + [repr(v) for v in r.per_user] + [ps])
    doc = {"provenance": provenance(spec), "spec": spec, "rows": [r.to_dict() for r in reports]}
    return {f"{prefix}dof.csv": _with_header(spec, buf.getvalue()),
            f"{prefix}dof.json": json.dumps(doc, indent=2) + "\n"}


def cmd_alloc(spec: dict, threads: int = 1, prefix: str = "") -> dict:
    gammas = parse_grid(spec.get("gamma", ""))
    if not gammas:
        raise ContractError("gamma grid is empty")
    plans = []
    for scheme in parse_list(spec.get("scheme", "czf")):
        plans.extend(allocation_sweep(gammas, scheme))
    return {f"{prefix}alloc.csv": _with_header(spec, sweep_to_csv(plans))}


QUANT_COLUMNS = ("k", "bits", "trials", "mean_sin2", "sin2_lower", "sin2_upper", "sin2_status",
                 "mean_log_sin2", "log_lower", "log_upper", "log_status")


def quantcheck_rows(k: int, bits_list, trials: int, seed: int, max_bits: int = DEFAULT_MAX_BITS,
                    margin: float = 0.05, log_margin: float = 0.2) -> list:
    """Empirical distortion of random codebooks against the closed-form bounds.

    Status is PASS/FAIL with the bounds widened by ``margin`` (relative) and
    ``log_margin`` (absolute), or INFO when the codebook is too small for
    the asymptotic bounds to apply.
    """
    rows = []
    for bits in bits_list:
        s = sample_min_sin2(k, int(bits), trials, RngSeed(seed, TAG_QUANTCHECK).with_stream(int(bits)),
                            max_bits=max_bits)
        mean = float(s.mean())
        mlog = float(np.mean(-np.log2(np.maximum(s, np.finfo(float).tiny))))
        lo, hi = distortion_bounds(k, int(bits))
        llo, lhi = log_distortion_bounds(k, int(bits))
        if bounds_regime_ok(k, int(bits)):
            st = "PASS" if lo * (1 - margin) <= mean <= hi * (1 + margin) else "FAIL"
            lst = "PASS" if llo - log_margin <= mlog <= lhi + log_margin else "FAIL"
        else:
            st = lst = "INFO"
        rows.append({"k": k, "bits": int(bits), "trials": trials, "mean_sin2": mean,
                     "sin2_lower": lo, "sin2_upper": hi, "sin2_status": st,
                     "mean_log_sin2": mlog, "log_lower": llo, "log_upper": lhi, "log_status": lst})
    return rows


def cmd_quantcheck(spec: dict, threads: int = 1, prefix: str = "") -> dict:
    trials = int(spec.get("trials", 100000))
    if trials < 1:
        raise ContractError("trials must be >= 1")
    rows = []
    for k in parse_list(spec.get("k", "2")):
        if int(k) < 2:
            raise ContractError("k must be >= 2")
        bits = [int(b) for b in parse_list(spec.get("bits", "4,8,12"))]
        if any(b < 0 for b in bits):
            raise ContractError("bits must be >= 0")
        rows.extend(quantcheck_rows(int(k), bits, trials, int(spec["seed"]),
                                    int(spec.get("max_bits", DEFAULT_MAX_BITS))))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=QUANT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return {f"{prefix}quantcheck.csv": _with_header(spec, buf.getvalue())}


COMMANDS = {"rate": cmd_rate, "dof": cmd_dof, "alloc": cmd_alloc, "quantcheck": cmd_quantcheck}


def repro_spec(name: str, seed: int, trials=None) -> dict:
    if name not in CANNED:
        raise ContractError(f"unknown reproduction {name!r}; expected one of {sorted(CANNED)}")
    spec = dict(CANNED[name])
    spec["seed"] = seed
    if trials is not None and "trials" in spec:
        spec["trials"] = int(trials)
    return spec


def cmd_repro(name: str, seed: int, trials=None, threads: int = 1) -> dict:
    spec = repro_spec(name, seed, trials)
    command = spec.pop("command")
    spec = {"command": command, **spec}
    return COMMANDS[command](spec, threads, prefix=f"{name}_")


# --------------------------------------------------------------------------
# argparse wiring
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", default=None, help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--out", default=None, help="output directory (default: stdout)")
    p.add_argument("--config", default=None, help="JSON file whose keys override the flags")
    p.add_argument("--threads", type=int, default=1, help="Monte-Carlo worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcsi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"dcsi {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", help="ergodic rate curves")
    _common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", help='CSI scaling matrix, e.g. "1,0.5;0,0.7"')
    p.add_argument("--bits", help='fixed RVQ bit matrix, e.g. "6,3;3,6"')
    p.add_argument("--model", default="statistical", choices=MODELS)
    p.add_argument("--schemes", default="czf")
    p.add_argument("--snr", default="50:10:80", help="dB grid, start:step:stop or a comma list")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--passive", help="passive TX per stream, comma separated (0-based)")
    p.add_argument("--beacon", help="real beacon vector, comma separated")
    p.add_argument("--max-bits", type=int, default=DEFAULT_MAX_BITS)
    p.add_argument("--window", help="slope window lo,hi in dB (adds slopes to the JSON)")

    p = sub.add_parser("dof", help="closed-form DoF table")
    _common(p)
    p.add_argument("--alpha", required=False)
    p.add_argument("--schemes", default="czf,apzf,czf-hq,apzf-hq")

    p = sub.add_parser("alloc", help="feedback allocation sweep")
    _common(p)
    p.add_argument("--scheme", default="czf", help="czf, apzf or both comma separated")
    p.add_argument("--gamma", default="", help="budget grid, start:step:stop or a comma list")

    p = sub.add_parser("quantcheck", help="random-codebook distortion vs. bounds")
    _common(p)
    p.add_argument("--k", default="2", help="dimension(s), comma separated")
    p.add_argument("--bits", default="4,8,12")
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--max-bits", type=int, default=DEFAULT_MAX_BITS)

    p = sub.add_parser("repro", help="canned experiment")
    _common(p)
    p.add_argument("name", choices=sorted(CANNED))
    p.add_argument("--trials", type=int, default=None)
    return ap


_NON_SPEC = {"out", "config", "threads", "command"}


def _spec_from_args(args: argparse.Namespace) -> dict:
    spec = {"command": args.command}
    spec.update({k: v for k, v in vars(args).items() if k not in _NON_SPEC})
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                override = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ContractError(f"cannot read config {args.config!r}: {exc}") from None
        if not isinstance(override, dict):
            raise ContractError("config file must hold a JSON object")
        override.pop("command", None)
        spec.update({k.replace("-", "_"): v for k, v in override.items()})
    spec["seed"] = _resolve_seed(spec.get("seed"))
    return spec


def run(argv=None, stdout=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = _spec_from_args(args)
        if args.threads < 1:
            raise ContractError("--threads must be >= 1")
        if args.command == "repro":
            files = cmd_repro(spec["name"], spec["seed"], spec.get("trials"), args.threads)
        else:
            if args.command == "dof" and not spec.get("alpha"):
                raise ContractError("dof needs --alpha")
            files = COMMANDS[args.command](spec, args.threads)
        emit(files, args.out, stdout)
    except ResourceCapError as exc:
        print(f"dcsi: resource cap: {exc}", file=sys.stderr)
        return ResourceCapError.exit_code
    except NumericalDegeneracyError as exc:
        print(f"dcsi: numerical degeneracy: {exc}", file=sys.stderr)
        return NumericalDegeneracyError.exit_code
    except (ContractError, ValueError) as exc:
        print(f"dcsi: error: {exc}", file=sys.stderr)
        return 2
    except DCSIError as exc:
        print(f"dcsi: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))
