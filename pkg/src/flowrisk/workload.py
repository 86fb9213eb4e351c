"""Traffic scenarios: mice/elephant mixes over two connection patterns plus the probe."""

import json
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

from flowrisk import rng
from flowrisk.errors import InvalidParameterError
from flowrisk.topology import FatTreeTopology, build_fat_tree

ELEPHANT, MICE = "elephant", "mice"
ALL_LAYERS, EDGE_AGG_ONLY = "all-layers", "edge-agg-only"
PATTERNS = (ALL_LAYERS, EDGE_AGG_ONLY)

# mice:elephant -> (mice, elephants); 120 concurrent connections in every mix
RATIOS = {
    "2:1": (80, 40),
    "1:1": (60, 60),
    "1:2": (40, 80),
}

MICE_BYTES = 10_000
ELEPHANT_MIN_S, ELEPHANT_MAX_S = 1.0, 15.0
PROBE_DURATION_S = 20.0
SCENARIO_WINDOW_S = 25.0
ELEPHANT_START_SPREAD_S = 1.0
PROBE_ID = 0


@dataclass(frozen=True)
class Flow:
    id: int
    src: int  # 0-based host
    dst: int
    cls: str
    start_time: float
    duration: Optional[float] = None  # elephants
    transfer_size: Optional[int] = None  # mice, bytes

    @property
    def is_elephant(self) -> bool:
        return self.cls == ELEPHANT

    def to_dict(self) -> dict:
        d = asdict(self)
        d["src"] += 1
        d["dst"] += 1
        d["class"] = d.pop("cls")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Flow":
        return cls(
            id=int(d["id"]),
            src=int(d["src"]) - 1,
            dst=int(d["dst"]) - 1,
            cls=d["class"],
            start_time=float(d["start_time"]),
            duration=None if d.get("duration") is None else float(d["duration"]),
            transfer_size=None if d.get("transfer_size") is None else int(d["transfer_size"]),
        )


@dataclass(frozen=True)
class Scenario:
    name: str
    pattern: str
    mice_count: int
    elephant_count: int
    flows: Tuple[Flow, ...]
    probe: Flow
    seed: int = 0
    window: float = SCENARIO_WINDOW_S
    k: int = 4

    @property
    def tag(self) -> str:
        return self.name if self.pattern == ALL_LAYERS else f"{self.name}@{self.pattern}"

    @property
    def all_flows(self) -> List[Flow]:
        return [self.probe, *self.flows]

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "pattern": self.pattern,
            "mice_count": self.mice_count,
            "elephant_count": self.elephant_count,
            "seed": self.seed,
            "window": self.window,
            "k": self.k,
            "probe": self.probe.to_dict(),
            "flows": [f.to_dict() for f in self.flows],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        d = json.loads(text)
        return cls(
            name=d["name"],
            pattern=d["pattern"],
            mice_count=d["mice_count"],
            elephant_count=d["elephant_count"],
            flows=tuple(Flow.from_dict(f) for f in d["flows"]),
            probe=Flow.from_dict(d["probe"]),
            seed=d["seed"],
            window=d["window"],
            k=d["k"],
        )


def probe_flow(topo: Optional[FatTreeTopology] = None) -> Flow:
    """Host 1 -> host 16 (1-based), 20 s, starting at t=0."""
    n_hosts = len(topo.hosts) if topo is not None else 16
    return Flow(PROBE_ID, 0, n_hosts - 1, ELEPHANT, 0.0, duration=PROBE_DURATION_S)


def candidate_pairs(topo: FatTreeTopology, pattern: str) -> List[Tuple[int, int]]:
    """Ordered host pairs whose traffic matches the connection pattern.

    all-layers: pairs in different pods (every path climbs to the core).
    edge-agg-only: same pod, different edge switch (paths turn at aggregation).
    """
    if pattern not in PATTERNS:
        raise InvalidParameterError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    pairs = []
    for s in topo.hosts:
        for d in topo.hosts:
            if s == d:
                continue
            same_pod = topo.pod_of(s) == topo.pod_of(d)
            same_edge = topo.edge_switch_of(s) == topo.edge_switch_of(d)
            if pattern == ALL_LAYERS and not same_pod:
                pairs.append((s, d))
            elif pattern == EDGE_AGG_ONLY and same_pod and not same_edge:
                pairs.append((s, d))
    if not pairs:
        raise InvalidParameterError(f"k={topo.k} fat-tree has no {pattern} host pairs")
    return pairs


def make_scenario(ratio: str, pattern: str = ALL_LAYERS, seed: int = 0,
                  topo: Optional[FatTreeTopology] = None,
                  window: float = SCENARIO_WINDOW_S) -> Scenario:
    if ratio not in RATIOS:
        raise InvalidParameterError(f"unknown ratio {ratio!r}; expected one of {sorted(RATIOS)}")
    if not window >= PROBE_DURATION_S:
        raise InvalidParameterError("scenario window must cover the probe flow")
    topo = topo if topo is not None else build_fat_tree(4)
    pairs = candidate_pairs(topo, pattern)
    n_mice, n_eleph = RATIOS[ratio]

    stream = rng.UniformStream(rng.derive_seed(seed, "workload", ratio, pattern))
    flows = []
    fid = PROBE_ID + 1
    u = stream.uniforms((n_eleph, 3))
    for row in u:
        s, d = pairs[min(int(row[0] * len(pairs)), len(pairs) - 1)]
        duration = ELEPHANT_MIN_S + (ELEPHANT_MAX_S - ELEPHANT_MIN_S) * row[1]
        start = ELEPHANT_START_SPREAD_S * row[2]
        flows.append(Flow(fid, s, d, ELEPHANT, float(start), duration=float(duration)))
        fid += 1
    u = stream.uniforms((n_mice, 2))
    for row in u:
        s, d = pairs[min(int(row[0] * len(pairs)), len(pairs) - 1)]
        start = window * row[1]
        flows.append(Flow(fid, s, d, MICE, float(start), transfer_size=MICE_BYTES))
        fid += 1

    return Scenario(
        name=ratio,
        pattern=pattern,
        mice_count=n_mice,
        elephant_count=n_eleph,
        flows=tuple(flows),
        probe=probe_flow(topo),
        seed=int(seed),
        window=float(window),
        k=topo.k,
    )


def probe_only_scenario(topo: Optional[FatTreeTopology] = None) -> Scenario:
    topo = topo if topo is not None else build_fat_tree(4)
    return Scenario("probe-only", ALL_LAYERS, 0, 0, (), probe_flow(topo), k=topo.k)
