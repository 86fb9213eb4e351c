"""CSV/JSON artifacts exchanged between pipeline stages.

Every number is written with 6 significant digits in plain positional
notation so that golden files diff cleanly.
"""

import csv
import io
import json
import math
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from flowrisk.distributions import FittedDistribution
from flowrisk.errors import SchemaError
from flowrisk.fabric_sim import SampleSet
from flowrisk.gof_stats import GofReport
from flowrisk.riskmodel import ElephantProfile, RiskReport, confidence_key

SAMPLES_COLUMNS = ["algorithm", "scenario", "repetition", "probe_mean_mbps", "probe_std_mbps"]
FLOWS_COLUMNS = ["algorithm", "scenario", "repetition", "flow_id", "class", "bytes", "fct_s", "mean_mbps"]
HISTOGRAM_COLUMNS = ["bin_low", "bin_high", "count"]
RISK_KEYS = ("iterations", "retained", "loss_rate", "mean", "median", "skewness",
             "excess_kurtosis", "histogram", "var", "seed", "profiles", "a_dist", "e_dist")


def fmt(x) -> str:
    """Fixed-point text with 6 significant digits ('' for None)."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    return np.format_float_positional(x, precision=6, unique=False, fractional=False, trim="-")


def sig6(x):
    """Round floats (recursively) to 6 significant digits for JSON output."""
    if isinstance(x, dict):
        return {k: sig6(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sig6(v) for v in x]
    if isinstance(x, (bool, type(None), str)):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return float(fmt(x)) if math.isfinite(x) else None


def dump_json(payload: dict) -> str:
    return json.dumps(sig6(payload), indent=2, sort_keys=True) + "\n"


def _csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def samples_csv(sets: Sequence[SampleSet]) -> str:
    rows = []
    for s in sets:
        for rep, thr, err in zip(s.repetitions, s.throughput, s.error):
            rows.append((s.algorithm, s.scenario, rep, thr, err))
    return _csv_text(SAMPLES_COLUMNS, rows)


def flows_csv(sets: Sequence[SampleSet]) -> str:
    rows = []
    for s in sets:
        for run in s.runs:
            for r in run.records:
                rows.append((s.algorithm, s.scenario, run.repetition, r.flow_id, r.cls,
                             r.bytes, r.fct_s, r.mean_mbps))
    return _csv_text(FLOWS_COLUMNS, rows)


def read_samples_csv(text: str, source: str = "samples.csv") -> List[dict]:
    """Parse samples.csv; errors name the offending line."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{source}: empty file") from None
    if header != SAMPLES_COLUMNS:
        raise SchemaError(f"{source} line 1: expected header {','.join(SAMPLES_COLUMNS)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(SAMPLES_COLUMNS):
            raise SchemaError(f"{source} line {lineno}: expected {len(SAMPLES_COLUMNS)} fields, got {len(row)}")
        try:
            rec = {
                "algorithm": row[0],
                "scenario": row[1],
                "repetition": int(row[2]),
                "probe_mean_mbps": float(row[3]),
                "probe_std_mbps": float(row[4]),
            }
        except ValueError as exc:
            raise SchemaError(f"{source} line {lineno}: {exc}") from None
        if rec["probe_mean_mbps"] < 0 or rec["probe_std_mbps"] < 0:
            raise SchemaError(f"{source} line {lineno}: negative sample")
        rows.append(rec)
    return rows


def histogram_csv(edges: Sequence[float], counts: Sequence[int]) -> str:
    return _csv_text(HISTOGRAM_COLUMNS,
                     ((lo, hi, int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)))


def fit_payload(algorithm: str, series: str, samples: Sequence[int], bin_width: float,
                candidates: Sequence[str], alphas: Sequence[float], ad_critical: float,
                best: Optional[GofReport], reports: Sequence[GofReport],
                extra: Optional[dict] = None) -> dict:
    payload = {
        "algorithm": algorithm,
        "series": series,
        "n": len(samples),
        "bin_width": bin_width,
        "samples": [int(v) for v in samples],
        "candidates": list(candidates),
        "alphas": list(alphas),
        "ad_critical": ad_critical,
        "family": None,
        "params": None,
        "D_n": None,
        "A2": None,
        "p_value": None,
        "decisions": None,
        "accepted": False,
        "route": None,
        "flags": ["small-n"] if len(samples) < 5 else [],
        "cascade": [r.to_dict() for r in reports],
    }
    if best is not None:
        d = best.to_dict()
        for key in ("family", "params", "D_n", "A2", "p_value", "decisions", "accepted", "route"):
            payload[key] = d[key]
        payload["flags"] = sorted(set(payload["flags"]) | set(best.flags))
    if extra:
        payload.update(extra)
    return payload


def load_fit(payload: dict) -> FittedDistribution:
    if not payload.get("accepted"):
        raise SchemaError(f"fit for {payload.get('algorithm')}/{payload.get('series')} was not accepted")
    try:
        return FittedDistribution(payload["family"], {k: float(v) for k, v in payload["params"].items()})
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed fit.json: {exc}") from None


def risk_payload(report: RiskReport, confidences: Sequence[float], extra: Optional[dict] = None) -> dict:
    payload = {
        "iterations": report.iterations,
        "retained": report.retained,
        "loss_rate": report.loss_rate,
        "bound": report.bound,
        "mean": report.mean,
        "median": report.median,
        "std": report.std,
        "skewness": report.skewness,
        "excess_kurtosis": report.excess_kurtosis,
        "histogram": {"edges": report.histogram_edges, "counts": report.histogram_counts},
        "confidences": [confidence_key(c) for c in confidences],
        "var": {confidence_key(c): v[1] for c, v in report.var.items()},
        "var_parametric": {confidence_key(c): v[0] for c, v in report.var.items()},
        "seed": report.seed,
        "unit_scale": report.unit_scale,
        "profiles": [p.to_dict() for p in report.profiles],
        "a_dist": report.a_dist.to_dict() if report.a_dist else None,
        "e_dist": report.e_dist.to_dict() if report.e_dist else None,
        "flags": list(report.flags),
    }
    if extra:
        payload.update(extra)
    return payload


def check_risk(payload) -> dict:
    if not isinstance(payload, dict):
        raise SchemaError("risk.json must hold an object")
    missing = [k for k in RISK_KEYS if k not in payload]
    if missing:
        raise SchemaError(f"risk.json is missing {', '.join(missing)}")
    hist = payload["histogram"]
    if not isinstance(hist, dict) or len(hist.get("edges", [])) != len(hist.get("counts", [])) + 1:
        raise SchemaError("risk.json histogram needs len(edges) == len(counts) + 1")
    if not isinstance(payload["var"], dict):
        raise SchemaError("risk.json var must map confidence -> value")
    return payload


def load_profiles(payload) -> List[ElephantProfile]:
    """Profiles from a JSON list of {label, size, volume} objects."""
    if isinstance(payload, dict):
        payload = payload.get("profiles")
    if not isinstance(payload, list) or not payload:
        raise SchemaError("profiles file must hold a non-empty list")
    try:
        return [ElephantProfile(str(p["label"]), float(p["size"]), float(p["volume"])) for p in payload]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed profile: {exc}") from None


def group_series(rows: Sequence[dict]) -> Dict[str, Dict[str, List[float]]]:
    """algorithm -> {"throughput": [...], "error": [...]} in file order."""
    out: Dict[str, Dict[str, List[float]]] = {}
    for r in rows:
        d = out.setdefault(r["algorithm"], {"throughput": [], "error": []})
        d["throughput"].append(r["probe_mean_mbps"])
        d["error"].append(r["probe_std_mbps"])
    return out
