"""Command line front end: simulate -> fit -> predict -> report.

Exit codes: 0 success, 2 usage or I/O error, 3 no acceptable fit (or an
unaccepted fit handed to predict), 4 malformed input file.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from flowrisk import formats, rng
from flowrisk.distributions import FAMILIES
from flowrisk.errors import InvalidParameterError, NoAcceptableFitError, SchemaError
from flowrisk.fabric_sim import ALGORITHMS, SimParams, run_campaign, worker_count
from flowrisk.gof_stats import AD_CRITICAL_05, ALPHAS, KS_COEFFICIENTS, normalize, select_distribution
from flowrisk.riskmodel import (
    DEFAULT_BINS,
    DEFAULT_CONFIDENCES,
    DEFAULT_ITERATIONS,
    MBPS_TO_MBYTES,
    DEFAULT_PROFILES,
    ElephantProfile,
    predict_loss,
)
from flowrisk.topology import DEFAULT_LINK_CAPACITY, build_fat_tree
from flowrisk.workload import EDGE_AGG_ONLY, ALL_LAYERS, RATIOS, make_scenario

log = logging.getLogger("flowrisk")

EXIT_OK, EXIT_IO, EXIT_NO_FIT, EXIT_SCHEMA = 0, 2, 3, 4
SERIES = ("throughput", "error")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class PipelineConfig:
    k: int = 4
    link_capacity: float = DEFAULT_LINK_CAPACITY
    algorithms: List[str] = field(default_factory=lambda: list(ALGORITHMS))
    scenarios: List[str] = field(default_factory=lambda: list(RATIOS))
    pattern: str = ALL_LAYERS
    repetitions: int = 25
    seed: int = 0
    candidates: List[str] = field(default_factory=lambda: list(FAMILIES))
    alphas: List[float] = field(default_factory=lambda: list(ALPHAS))
    ad_critical: float = AD_CRITICAL_05
    bin_width: float = 1.0
    iterations: int = DEFAULT_ITERATIONS
    confidences: List[float] = field(default_factory=lambda: list(DEFAULT_CONFIDENCES))
    bins: int = DEFAULT_BINS
    unit_scale: float = MBPS_TO_MBYTES
    out: str = "out"
    sim: dict = field(default_factory=dict)

    def validate(self) -> "PipelineConfig":
        if self.k < 2 or self.k % 2:
            raise InvalidParameterError(f"k must be an even integer >= 2, got {self.k}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise InvalidParameterError(f"unknown algorithm {a!r}; expected one of {ALGORITHMS}")
        for s in self.scenarios:
            if s not in RATIOS:
                raise InvalidParameterError(f"unknown scenario {s!r}; expected one of {tuple(RATIOS)}")
        if self.pattern not in (ALL_LAYERS, EDGE_AGG_ONLY):
            raise InvalidParameterError(f"unknown pattern {self.pattern!r}")
        for c in self.candidates:
            if c not in FAMILIES:
                raise InvalidParameterError(f"unknown family {c!r}; expected one of {FAMILIES}")
        for a in self.alphas:
            if a not in KS_COEFFICIENTS:
                raise InvalidParameterError(f"unsupported alpha {a}; known: {sorted(KS_COEFFICIENTS)}")
        if self.repetitions < 1:
            raise InvalidParameterError("repetitions must be >= 1")
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be >= 1")
        if not self.confidences or any(not 0.0 < c < 1.0 for c in self.confidences):
            raise InvalidParameterError("confidences must lie in (0, 1)")
        if not self.bin_width > 0:
            raise InvalidParameterError("bin_width must be positive")
        self.sim_params()
        return self

    def sim_params(self) -> SimParams:
        known = {f.name for f in dataclasses.fields(SimParams)}
        bad = set(self.sim) - known
        if bad:
            raise InvalidParameterError(f"unknown simulator parameters: {sorted(bad)}")
        return SimParams(**self.sim).validate()

    def stage_seed(self, stage: str) -> int:
        # kept below 2**63 so that base + repetition never wraps
        return rng.derive_seed(self.seed, stage) >> 1

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise InvalidParameterError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(data) - known
        if bad:
            raise InvalidParameterError(f"unknown config keys: {sorted(bad)}")
        return cls(**data)


# ---------------------------------------------------------------- file helpers

def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None
    log.info("wrote %s", path)


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None


def _read_json(path) -> dict:
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})", EXIT_SCHEMA) from None


def _workers() -> int:
    return worker_count(default=os.cpu_count() or 1)


def _split(values: Optional[Sequence[str]]) -> Optional[List[str]]:
    if not values:
        return None
    return [v.strip() for item in values for v in item.split(",") if v.strip()]


# ---------------------------------------------------------------- stages

def cmd_simulate(cfg: PipelineConfig) -> List[Path]:
    topo = build_fat_tree(cfg.k, cfg.link_capacity)
    params = cfg.sim_params()
    base = cfg.stage_seed("simulate")
    workers = _workers()
    sets = []
    for algo in cfg.algorithms:
        for ratio in cfg.scenarios:
            log.info("simulating %s %s x%d", algo, ratio, cfg.repetitions)
            sets.append(run_campaign(topo, ratio, algo, cfg.repetitions, base, cfg.pattern,
                                     params, workers, cfg.bin_width))
    out = Path(cfg.out)
    _write(out / "samples.csv", formats.samples_csv(sets))
    _write(out / "flows.csv", formats.flows_csv(sets))
    return [out / "samples.csv", out / "flows.csv"]


def cmd_fit(cfg: PipelineConfig, samples_path) -> List[Path]:
    """One fit file per (algorithm, series); raises CliError(3) after writing if any series fails."""
    try:
        rows = formats.read_samples_csv(_read(samples_path), str(samples_path))
    except SchemaError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    written, failed = [], []
    for algo, series in formats.group_series(rows).items():
        for name in SERIES:
            raw = series[name]
            binned = normalize(raw, cfg.bin_width)
            if len(binned) < 5:
                log.warning("%s/%s has only %d samples; KS asymptotics are unreliable",
                            algo, name, len(binned))
            extra = {"worst_case_error_mbps": max(raw)} if name == "error" else {}
            try:
                best, reports = select_distribution(binned, cfg.candidates, cfg.alphas, cfg.ad_critical)
            except NoAcceptableFitError as exc:
                best, reports = None, exc.reports
                failed.append(f"{algo}/{name}")
            payload = formats.fit_payload(algo, name, binned, cfg.bin_width, cfg.candidates,
                                          cfg.alphas, cfg.ad_critical, best, reports, extra)
            path = Path(cfg.out) / f"fit_{algo}_{name}.json"
            _write(path, formats.dump_json(payload))
            written.append(path)
    if failed:
        raise CliError(f"no acceptable fit for {', '.join(failed)}", EXIT_NO_FIT)
    return written


def _load_accepted_fit(path):
    payload = _read_json(path)
    if not isinstance(payload, dict) or "accepted" not in payload:
        raise CliError(f"{path}: not a fit file", EXIT_SCHEMA)
    if not payload["accepted"]:
        raise CliError(f"{path}: fit was not accepted", EXIT_NO_FIT)
    try:
        return formats.load_fit(payload), payload
    except (SchemaError, InvalidParameterError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_SCHEMA) from None


def cmd_predict(cfg: PipelineConfig, a_fit, e_fit, profiles: Sequence[ElephantProfile],
                name: str = "risk.json") -> Path:
    a_dist, a_payload = _load_accepted_fit(a_fit)
    e_dist, e_payload = _load_accepted_fit(e_fit)
    width_a = float(a_payload.get("bin_width", 1.0))
    width_e = float(e_payload.get("bin_width", 1.0))
    report = predict_loss(profiles, a_dist, e_dist, cfg.iterations, cfg.unit_scale * width_a,
                          cfg.stage_seed("predict"), _workers(), cfg.bins, cfg.confidences,
                          e_unit_scale=cfg.unit_scale * width_e)
    extra = {"algorithm": a_payload.get("algorithm"), "config_seed": cfg.seed}
    path = Path(cfg.out) / name
    _write(path, formats.dump_json(formats.risk_payload(report, cfg.confidences, extra)))
    return path


def render_table(risk: dict) -> str:
    def num(x):
        return "n/a" if x is None else formats.fmt(x)

    lines = []
    if risk.get("algorithm"):
        lines.append(f"algorithm        {risk['algorithm']}")
    lines += [
        f"iterations       {risk['iterations']}",
        f"retained         {risk['retained']}",
        f"loss rate        {num(risk['loss_rate'])}",
        f"mean             {num(risk['mean'])}",
        f"median           {num(risk['median'])}",
        f"skewness         {num(risk['skewness'])}",
        f"excess kurtosis  {num(risk['excess_kurtosis'])}",
        "",
        f"{'confidence':<12}{'VaR (empirical)':>18}{'VaR (normal)':>16}",
    ]
    parametric = risk.get("var_parametric") or {}
    for key in sorted(risk["var"]):
        lines.append(f"{key:<12}{num(risk['var'][key]):>18}{num(parametric.get(key)):>16}")
    for flag in risk.get("flags", []):
        lines.append(f"note: {flag}")
    return "\n".join(lines) + "\n"


def cmd_report(risk_path, fmt: str = "table", out: Optional[str] = None,
               stream=None) -> Path:
    stream = stream or sys.stdout
    payload = _read_json(risk_path)
    try:
        risk = formats.check_risk(payload)
    except SchemaError as exc:
        raise CliError(f"{risk_path}: {exc}", EXIT_SCHEMA) from None
    stem = Path(risk_path).stem
    hist_name = "histogram.csv" if stem == "risk" else f"histogram{stem[len('risk'):]}.csv"
    path = Path(out) / hist_name if out else Path(risk_path).with_name(hist_name)
    _write(path, formats.histogram_csv(risk["histogram"]["edges"], risk["histogram"]["counts"]))
    stream.write(formats.dump_json(risk) if fmt == "json" else render_table(risk))
    return path


def cmd_run(cfg: PipelineConfig, profiles: Sequence[ElephantProfile], fmt: str = "table"):
    """Full pipeline; a failed fit skips prediction for that algorithm and ends with exit 3."""
    cmd_simulate(cfg)
    out = Path(cfg.out)
    no_fit = None
    try:
        cmd_fit(cfg, out / "samples.csv")
    except CliError as exc:
        if exc.code != EXIT_NO_FIT:
            raise
        no_fit = exc
    for algo in cfg.algorithms:
        a_fit, e_fit = out / f"fit_{algo}_throughput.json", out / f"fit_{algo}_error.json"
        if not (_read_json(a_fit)["accepted"] and _read_json(e_fit)["accepted"]):
            continue
        risk = cmd_predict(cfg, a_fit, e_fit, profiles, name=f"risk_{algo}.json")
        cmd_report(risk, fmt)
    if no_fit:
        raise no_fit


# ---------------------------------------------------------------- argparse

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="dump the fat-tree as JSON")
    _common(p)
    p.add_argument("--k", type=int)

    p = sub.add_parser("scenario", help="dump one generated workload as JSON")
    _common(p)
    p.add_argument("--scenario", default="1:1")
    p.add_argument("--pattern")

    p = sub.add_parser("simulate", help="run campaigns, write samples.csv and flows.csv")
    _common(p)
    p.add_argument("--algo", action="append", help="algorithm(s), comma separated or repeated")
    p.add_argument("--scenario", action="append", help="traffic ratio(s) such as 2:1")
    p.add_argument("--pattern")
    p.add_argument("--reps", type=int)

    p = sub.add_parser("fit", help="fit discrete families to samples.csv")
    _common(p)
    p.add_argument("samples", help="samples.csv from simulate")
    p.add_argument("--candidates", action="append")
    p.add_argument("--alpha", action="append", type=float)

    p = sub.add_parser("predict", help="Monte Carlo loss prediction from two fit files")
    _common(p)
    p.add_argument("--a-fit", required=True, help="fit file for available throughput")
    p.add_argument("--e-fit", required=True, help="fit file for the error series")
    p.add_argument("--profiles", help="JSON list of {label, size, volume}")
    p.add_argument("--iterations", type=int)
    p.add_argument("--confidence", action="append", type=float)
    p.add_argument("--name", default="risk.json", help="output file name")

    p = sub.add_parser("report", help="print a risk.json and write histogram.csv")
    _common(p)
    p.add_argument("risk", help="risk.json from predict")
    p.add_argument("--format", choices=("table", "json"), default="table")

    p = sub.add_parser("run", help="simulate, fit, predict and report in one go")
    _common(p)
    p.add_argument("--algo", action="append")
    p.add_argument("--scenario", action="append")
    p.add_argument("--pattern")
    p.add_argument("--reps", type=int)
    p.add_argument("--profiles")
    p.add_argument("--iterations", type=int)
    p.add_argument("--confidence", action="append", type=float)
    p.add_argument("--format", choices=("table", "json"), default="table")
    return parser


def make_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(_read(args.config)) if args.config else PipelineConfig()
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "k": getattr(args, "k", None),
        "pattern": getattr(args, "pattern", None),
        "repetitions": getattr(args, "reps", None),
        "iterations": getattr(args, "iterations", None),
        "algorithms": _split(getattr(args, "algo", None)),
        "candidates": _split(getattr(args, "candidates", None)),
        "alphas": getattr(args, "alpha", None),
        "confidences": getattr(args, "confidence", None),
    }
    if args.command in ("simulate", "run"):
        overrides["scenarios"] = _split(args.scenario)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def _profiles(path) -> List[ElephantProfile]:
    if not path:
        return list(DEFAULT_PROFILES)
    try:
        return formats.load_profiles(_read_json(path))
    except (SchemaError, InvalidParameterError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_SCHEMA) from None


def dispatch(args) -> int:
    cfg = make_config(args)
    if args.command == "topology":
        text = json.dumps(build_fat_tree(cfg.k, cfg.link_capacity).to_dict(), indent=2) + "\n"
        if args.out:
            _write(Path(args.out) / "topology.json", text)
        else:
            sys.stdout.write(text)
    elif args.command == "scenario":
        if args.scenario not in RATIOS:
            raise InvalidParameterError(f"unknown scenario {args.scenario!r}")
        topo = build_fat_tree(cfg.k, cfg.link_capacity)
        text = make_scenario(args.scenario, cfg.pattern, cfg.stage_seed("simulate"), topo).to_json() + "\n"
        if args.out:
            _write(Path(args.out) / "scenario.json", text)
        else:
            sys.stdout.write(text)
    elif args.command == "simulate":
        cmd_simulate(cfg)
    elif args.command == "fit":
        cmd_fit(cfg, args.samples)
    elif args.command == "predict":
        cmd_predict(cfg, args.a_fit, args.e_fit, _profiles(args.profiles), args.name)
    elif args.command == "report":
        cmd_report(args.risk, args.format, args.out)
    elif args.command == "run":
        cmd_run(cfg, _profiles(args.profiles), args.format)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return dispatch(args)
    except CliError as exc:
        print(f"flowrisk: {exc}", file=sys.stderr)
        return exc.code
    except (InvalidParameterError, json.JSONDecodeError, TypeError) as exc:
        print(f"flowrisk: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
