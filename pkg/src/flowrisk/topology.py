"""k-ary fat-tree construction and equal-cost path enumeration.

Node ids are dense integers, pod-major within each layer::

    hosts      0 .. k^3/4 - 1
    edge       next k^2/2 ids   (pod p, switch e -> p*k/2 + e)
    aggregate  next k^2/2 ids
    core       last (k/2)^2 ids

Aggregate switch ``a`` of every pod connects to cores ``a*k/2 .. a*k/2 + k/2 - 1``
(canonical port striping). Hosts are 0-based here; external interfaces
(JSON dumps, CLI) use 1-based host numbers.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

from flowrisk.errors import InvalidParameterError

DEFAULT_LINK_CAPACITY = 10e6  # bits/s
BITS_PER_MBYTE = 8e6

HOST, EDGE, AGGREGATE, CORE = "host", "edge", "aggregate", "core"


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    pod: int  # -1 for core switches
    index: int  # position within (pod, layer); for core, the core index

    @property
    def is_switch(self) -> bool:
        return self.kind != HOST


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    capacity: float  # bits/s per direction


@dataclass(frozen=True)
class Path:
    nodes: Tuple[int, ...]

    @property
    def src(self) -> int:
        return self.nodes[0]

    @property
    def dst(self) -> int:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def links(self) -> Tuple[Tuple[int, int], ...]:
        """Directed (from, to) pairs along the path."""
        return tuple(zip(self.nodes[:-1], self.nodes[1:]))

    @property
    def switches(self) -> Tuple[int, ...]:
        return self.nodes[1:-1]


@dataclass(frozen=True)
class FatTreeTopology:
    k: int
    link_capacity: float
    nodes: Tuple[Node, ...]
    links: Tuple[Link, ...]
    _paths: Dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def half(self) -> int:
        return self.k // 2

    @cached_property
    def hosts(self) -> List[int]:
        return [n.id for n in self.nodes if n.kind == HOST]

    @cached_property
    def switches(self) -> List[int]:
        return [n.id for n in self.nodes if n.is_switch]

    def of_kind(self, kind: str) -> List[int]:
        return [n.id for n in self.nodes if n.kind == kind]

    @cached_property
    def adjacency(self) -> Dict[int, Tuple[int, ...]]:
        adj = {n.id: [] for n in self.nodes}
        for link in self.links:
            adj[link.a].append(link.b)
            adj[link.b].append(link.a)
        return {u: tuple(sorted(v)) for u, v in adj.items()}

    @cached_property
    def directed_links(self) -> List[Tuple[int, int]]:
        """Every link in both directions; list position is the link index."""
        out = []
        for link in self.links:
            out.append((link.a, link.b))
            out.append((link.b, link.a))
        return out

    @cached_property
    def link_index(self) -> Dict[Tuple[int, int], int]:
        return {pair: i for i, pair in enumerate(self.directed_links)}

    def edge_switch_of(self, host: int) -> int:
        return self.adjacency[host][0]

    def pod_of(self, node: int) -> int:
        return self.nodes[node].pod

    def host_label(self, host: int) -> int:
        return host + 1

    def host_from_label(self, label: int) -> int:
        host = int(label) - 1
        if host < 0 or host >= len(self.hosts):
            raise InvalidParameterError(f"no host {label} in k={self.k} fat-tree")
        return host

    def to_dict(self) -> dict:
        def ext(node_id):
            node = self.nodes[node_id]
            return f"h{node_id + 1}" if node.kind == HOST else f"s{node_id}"

        return {
            "k": self.k,
            "link_capacity_bps": self.link_capacity,
            "nodes": [
                {"id": ext(n.id), "kind": n.kind, "pod": n.pod, "index": n.index}
                for n in self.nodes
            ],
            "links": [
                {"a": ext(l.a), "b": ext(l.b), "capacity_bps": l.capacity, "duplex": "full"}
                for l in self.links
            ],
        }


def build_fat_tree(k: int, link_capacity: float = DEFAULT_LINK_CAPACITY) -> FatTreeTopology:
    if isinstance(k, bool) or int(k) != k or k < 2 or k % 2:
        raise InvalidParameterError(f"k must be an even integer >= 2, got {k!r}")
    if not link_capacity > 0:
        raise InvalidParameterError(f"link capacity must be positive, got {link_capacity!r}")
    k = int(k)
    half = k // 2
    n_hosts = k * half * half
    n_pod_sw = k * half
    edge0 = n_hosts
    agg0 = edge0 + n_pod_sw
    core0 = agg0 + n_pod_sw

    nodes = []
    for pod in range(k):
        for e in range(half):
            for h in range(half):
                nodes.append(Node(len(nodes), HOST, pod, e * half + h))
    for pod in range(k):
        for e in range(half):
            nodes.append(Node(len(nodes), EDGE, pod, e))
    for pod in range(k):
        for a in range(half):
            nodes.append(Node(len(nodes), AGGREGATE, pod, a))
    for c in range(half * half):
        nodes.append(Node(len(nodes), CORE, -1, c))

    cap = float(link_capacity)
    links = []
    for pod in range(k):
        for e in range(half):
            edge = edge0 + pod * half + e
            for h in range(half):
                links.append(Link((pod * half + e) * half + h, edge, cap))
    for pod in range(k):
        for e in range(half):
            for a in range(half):
                links.append(Link(edge0 + pod * half + e, agg0 + pod * half + a, cap))
    for pod in range(k):
        for a in range(half):
            for j in range(half):
                links.append(Link(agg0 + pod * half + a, core0 + a * half + j, cap))

    return FatTreeTopology(k=k, link_capacity=cap, nodes=tuple(nodes), links=tuple(links))


def equal_cost_paths(topo: FatTreeTopology, src: int, dst: int) -> List[Path]:
    """All shortest src->dst paths, sorted by the switch ids they traverse."""
    hosts = len(topo.hosts)
    if not (0 <= src < hosts and 0 <= dst < hosts):
        raise InvalidParameterError(f"hosts must be in [0, {hosts}), got {src}, {dst}")
    if src == dst:
        raise InvalidParameterError("src and dst must differ")
    key = (src, dst)
    cached = topo._paths.get(key)
    if cached is not None:
        return list(cached)

    half = topo.half
    e_src, e_dst = topo.edge_switch_of(src), topo.edge_switch_of(dst)
    p_src, p_dst = topo.pod_of(src), topo.pod_of(dst)
    agg0 = len(topo.hosts) + topo.k * half
    core0 = agg0 + topo.k * half

    if e_src == e_dst:
        paths = [Path((src, e_src, dst))]
    elif p_src == p_dst:
        paths = [
            Path((src, e_src, agg0 + p_src * half + a, e_dst, dst)) for a in range(half)
        ]
    else:
        paths = []
        for a in range(half):
            for j in range(half):
                core = core0 + a * half + j
                paths.append(
                    Path((src, e_src, agg0 + p_src * half + a, core,
                          agg0 + p_dst * half + a, e_dst, dst))
                )
    paths.sort(key=lambda p: p.switches)
    topo._paths[key] = tuple(paths)
    return list(paths)
