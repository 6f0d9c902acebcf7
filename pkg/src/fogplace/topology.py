"""Declarative network graph: clinics, LTE-M base stations, a GPON tree and
the metro/core/cloud chain up to the single cloud storage.

Topology documents are JSON::

    {"nodes": [{"id", "kind", "profile", "patients_ecg", "patients_fall",
                "fog_candidate"}],
     "links": [{"a", "b", "capacity_bps"}]}

A link may carry ``capacity_ba_bps`` when the b->a direction differs.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

__all__ = [
    "NodeKind",
    "Node",
    "Link",
    "Topology",
    "TopologyError",
    "SchemaError",
    "GraphError",
    "load_topology",
    "load_topology_file",
    "west_leeds",
    "neighbors",
    "min_hop_path",
    "ROUTE_KINDS",
    "STORAGE_KINDS",
]


class NodeKind(str, Enum):
    CLINIC = "Clinic"
    BASE_STATION = "BaseStation"
    ONU = "Onu"
    OLT = "Olt"
    CAS = "CenterAggSwitch"
    AR = "AggRouter"
    CR = "CoreRouter"
    CLR = "CloudRouter"
    CLS = "CloudSwitch"
    CS = "ContentServer"
    CST = "CloudStorage"
    ES = "EthernetSwitch"


# interior kinds allowed on raw-data / feedback routes and on storage routes
ROUTE_KINDS = frozenset({NodeKind.BASE_STATION, NodeKind.ONU, NodeKind.OLT, NodeKind.CAS,
                         NodeKind.AR, NodeKind.CR, NodeKind.CLR, NodeKind.CLS})
STORAGE_KINDS = frozenset({NodeKind.ONU, NodeKind.OLT, NodeKind.CAS, NodeKind.AR,
                           NodeKind.CR, NodeKind.CLR, NodeKind.CLS, NodeKind.CS})

DEFAULT_PROFILE = {
    NodeKind.CLINIC: "",
    NodeKind.BASE_STATION: "bs",
    NodeKind.ONU: "onu",
    NodeKind.OLT: "olt",
    NodeKind.CAS: "cas",
    NodeKind.AR: "ar",
    NodeKind.CR: "cr",
    NodeKind.CLR: "clr",
    NodeKind.CLS: "cls",
    NodeKind.CS: "cs",
    NodeKind.CST: "cst",
}


class TopologyError(ValueError):
    pass


class SchemaError(TopologyError):
    pass


class GraphError(TopologyError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    profile: str = ""
    patients_ecg: int = 0
    patients_fall: int = 0
    fog_candidate: bool = False

    def patients(self, app: str) -> int:
        if app == "ecg":
            return self.patients_ecg
        if app == "fall":
            return self.patients_fall
        raise KeyError(app)


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity_bps: float
    capacity_ba_bps: float | None = None

    def capacity(self, src: str, dst: str) -> float:
        if (src, dst) == (self.a, self.b):
            return self.capacity_bps
        if (src, dst) == (self.b, self.a):
            return self.capacity_bps if self.capacity_ba_bps is None else self.capacity_ba_bps
        raise KeyError((src, dst))


class Topology:
    """Immutable validated graph. Node and link order follow the document."""

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link], meta: Mapping | None = None):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.links: tuple[Link, ...] = tuple(links)
        self.meta = dict(meta or {})
        self._by_id = {n.id: n for n in self.nodes}
        adj: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        self._link = {}
        for ln in self.links:
            adj[ln.a].append(ln.b)
            adj[ln.b].append(ln.a)
            self._link[(ln.a, ln.b)] = ln
            self._link[(ln.b, ln.a)] = ln
        self._adj = {k: tuple(sorted(v)) for k, v in adj.items()}
        self._path_cache: dict = {}

    def __contains__(self, node_id) -> bool:
        return node_id in self._by_id

    def __repr__(self) -> str:
        return f"Topology({len(self.nodes)} nodes, {len(self.links)} links)"

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def kind(self, node_id: str) -> NodeKind:
        return self.node(node_id).kind

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        if node_id not in self._adj:
            raise KeyError(f"unknown node id {node_id!r}")
        return self._adj[node_id]

    def nodes_of(self, *kinds: NodeKind) -> list[str]:
        return [n.id for n in self.nodes if n.kind in kinds]

    @property
    def clinics(self) -> list[str]:
        return self.nodes_of(NodeKind.CLINIC)

    @property
    def base_stations(self) -> list[str]:
        return self.nodes_of(NodeKind.BASE_STATION)

    @property
    def cloud_storage(self) -> str:
        return self.nodes_of(NodeKind.CST)[0]

    def link(self, a: str, b: str) -> Link:
        try:
            return self._link[(a, b)]
        except KeyError:
            raise KeyError(f"no link {a}-{b}") from None

    def capacity(self, src: str, dst: str) -> float:
        return self.link(src, dst).capacity(src, dst)

    def patients(self, app: str) -> dict[str, int]:
        return {c: self.node(c).patients(app) for c in self.clinics}

    def fog_candidates(self, mode: str = "foa") -> list[str]:
        if mode.lower() == "ca":
            return self.nodes_of(NodeKind.CLS)
        return [n.id for n in self.nodes
                if n.fog_candidate and n.kind in (NodeKind.ONU, NodeKind.OLT)]

    def parent_onu(self, bs: str) -> str:
        return next(v for v in self._adj[bs] if self.kind(v) == NodeKind.ONU)

    def serving_bs(self, clinic: str) -> tuple[str, ...]:
        return self._adj[clinic]

    def bs_degree(self, bs: str) -> int:
        """Number of clinics a BS can serve."""
        return sum(1 for v in self._adj[bs] if self.kind(v) == NodeKind.CLINIC)

    def min_hop_path(self, src: str, dst: str, kinds: Iterable[NodeKind] = ROUTE_KINDS) -> list[str]:
        key = (src, dst, frozenset(kinds))
        hit = self._path_cache.get(key)
        if hit is None:
            hit = tuple(_min_hop(self, src, dst, key[2]))
            self._path_cache[key] = hit
        return list(hit)

    def hops(self, src: str, dst: str, kinds: Iterable[NodeKind] = ROUTE_KINDS) -> int:
        return len(self.min_hop_path(src, dst, kinds)) - 1

    def with_patients(self, app: str, counts: Mapping[str, int]) -> "Topology":
        """Copy with clinic patient counts for ``app`` replaced."""
        field = "patients_ecg" if app == "ecg" else "patients_fall"
        nodes = []
        for n in self.nodes:
            if n.id in counts:
                d = n.__dict__.copy()
                d[field] = int(counts[n.id])
                n = Node(**d)
            nodes.append(n)
        return Topology(nodes, self.links, self.meta)

    def to_doc(self) -> dict:
        nodes = []
        for n in self.nodes:
            d = {"id": n.id, "kind": n.kind.value, "profile": n.profile}
            if n.kind == NodeKind.CLINIC:
                d["patients_ecg"] = n.patients_ecg
                d["patients_fall"] = n.patients_fall
            if n.fog_candidate:
                d["fog_candidate"] = True
            nodes.append(d)
        links = []
        for ln in self.links:
            d = {"a": ln.a, "b": ln.b, "capacity_bps": ln.capacity_bps}
            if ln.capacity_ba_bps is not None:
                d["capacity_ba_bps"] = ln.capacity_ba_bps
            links.append(d)
        doc = {"nodes": nodes, "links": links}
        if self.meta:
            doc["meta"] = self.meta
        return doc


def _min_hop(topo: Topology, src: str, dst: str, kinds) -> list[str]:
    if src not in topo or dst not in topo:
        raise KeyError(f"unknown endpoint in {src!r} -> {dst!r}")
    if src == dst:
        raise GraphError("src and dst must differ")

    def ok(v):
        return v == src or v == dst or topo.kind(v) in kinds

    # distances to dst over admissible nodes, then walk greedily from src
    # picking the smallest id at each step: this gives the lexicographically
    # smallest node sequence among the shortest paths
    dist = {dst: 0}
    q = deque([dst])
    while q:
        u = q.popleft()
        if u != dst and u == src:
            continue
        for v in topo.neighbors(u):
            if v not in dist and ok(v):
                dist[v] = dist[u] + 1
                if v != src:
                    q.append(v)
    if src not in dist:
        raise GraphError(f"no admissible path {src} -> {dst}")
    path = [src]
    u = src
    while u != dst:
        u = min(v for v in topo.neighbors(u) if dist.get(v, -1) == dist[u] - 1)
        path.append(u)
    return path


def neighbors(topology: Topology, node: str) -> set[str]:
    return set(topology.neighbors(node))


def min_hop_path(topology: Topology, src: str, dst: str, kind_filter=ROUTE_KINDS) -> list[str]:
    return topology.min_hop_path(src, dst, kind_filter)


_NODE_KEYS = {"id", "kind", "profile", "patients_ecg", "patients_fall", "fog_candidate"}
_LINK_KEYS = {"a", "b", "capacity_bps", "capacity_ba_bps"}


def _count(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise SchemaError(f"{where}: patient counts must be non-negative integers")
    return v


def load_topology(document) -> Topology:
    """Parse and validate a topology document (JSON text, bytes or mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise SchemaError("topology document must be an object")
    for key in ("nodes", "links"):
        if not isinstance(document.get(key), list):
            raise SchemaError(f"missing or non-list field {key!r}")

    nodes: list[Node] = []
    seen = set()
    for i, raw in enumerate(document["nodes"]):
        if not isinstance(raw, Mapping):
            raise SchemaError(f"nodes[{i}] must be an object")
        extra = set(raw) - _NODE_KEYS
        if extra:
            raise SchemaError(f"nodes[{i}]: unknown fields {sorted(extra)}")
        nid = raw.get("id")
        if not isinstance(nid, str) or not nid:
            raise SchemaError(f"nodes[{i}]: id must be a non-empty string")
        if nid in seen:
            raise SchemaError(f"node {nid}: duplicate id")
        seen.add(nid)
        try:
            kind = NodeKind(raw.get("kind"))
        except ValueError:
            raise SchemaError(f"node {nid}: unknown kind {raw.get('kind')!r}") from None
        if kind == NodeKind.ES:
            raise SchemaError(f"node {nid}: Ethernet switches are added per fog node, not stored")
        profile = raw.get("profile", DEFAULT_PROFILE[kind])
        if not isinstance(profile, str):
            raise SchemaError(f"node {nid}: profile must be a string")
        pe = _count(raw.get("patients_ecg", 0), f"node {nid}")
        pf = _count(raw.get("patients_fall", 0), f"node {nid}")
        if kind != NodeKind.CLINIC and (pe or pf):
            raise SchemaError(f"node {nid}: only clinics carry patients")
        fog = raw.get("fog_candidate", False)
        if not isinstance(fog, bool):
            raise SchemaError(f"node {nid}: fog_candidate must be boolean")
        if fog and kind not in (NodeKind.ONU, NodeKind.OLT, NodeKind.CLS):
            raise SchemaError(f"node {nid}: fog_candidate only allowed on Onu, Olt or CloudSwitch")
        nodes.append(Node(nid, kind, profile, pe, pf, fog))

    links: list[Link] = []
    pairs = set()
    for i, raw in enumerate(document["links"]):
        if not isinstance(raw, Mapping):
            raise SchemaError(f"links[{i}] must be an object")
        extra = set(raw) - _LINK_KEYS
        if extra:
            raise SchemaError(f"links[{i}]: unknown fields {sorted(extra)}")
        a, b = raw.get("a"), raw.get("b")
        name = f"link {a}-{b}"
        if a not in seen or b not in seen:
            raise GraphError(f"{name}: endpoint is not a known node")
        if a == b:
            raise GraphError(f"{name}: self loop")
        if frozenset((a, b)) in pairs:
            raise GraphError(f"{name}: duplicate link")
        pairs.add(frozenset((a, b)))
        caps = []
        for key in ("capacity_bps", "capacity_ba_bps"):
            c = raw.get(key)
            if c is None and key == "capacity_ba_bps":
                caps.append(None)
                continue
            if isinstance(c, bool) or not isinstance(c, (int, float)):
                raise SchemaError(f"{name}: {key} must be a number")
            if not c > 0:
                raise GraphError(f"{name}: {key} must be positive")
            caps.append(float(c))
        links.append(Link(a, b, caps[0], caps[1]))

    topo = Topology(nodes, links, document.get("meta"))
    _check_graph(topo)
    return topo


def _check_graph(topo: Topology) -> None:
    K = NodeKind
    stores = topo.nodes_of(K.CST)
    if len(stores) != 1:
        raise GraphError(f"graph violation: expected exactly one CloudStorage, found {len(stores)}")
    for n in topo.nodes:
        nb = topo.neighbors(n.id)
        if not nb:
            raise GraphError(f"graph violation: node {n.id} is isolated")
        kinds = [topo.kind(v) for v in nb]
        if n.kind == K.CLINIC:
            bad = [v for v, k in zip(nb, kinds) if k != K.BASE_STATION]
            if bad:
                raise GraphError(f"graph violation: clinic {n.id} adjacent to non-BS {bad[0]}")
        elif n.kind == K.BASE_STATION:
            onus = [v for v, k in zip(nb, kinds) if k == K.ONU]
            if len(onus) != 1:
                raise GraphError(f"graph violation: BS {n.id} must attach to exactly one ONU")
            bad = [v for v, k in zip(nb, kinds) if k not in (K.ONU, K.CLINIC)]
            if bad:
                raise GraphError(f"graph violation: BS {n.id} adjacent to {bad[0]}")
        elif n.kind == K.ONU:
            olts = [v for v, k in zip(nb, kinds) if k == K.OLT]
            if len(olts) != 1:
                raise GraphError(f"graph violation: ONU {n.id} must attach to exactly one OLT")
            bad = [v for v, k in zip(nb, kinds) if k not in (K.OLT, K.BASE_STATION)]
            if bad:
                raise GraphError(f"graph violation: ONU {n.id} adjacent to {bad[0]}")
    # every clinic must reach the cloud storage
    cst = stores[0]
    reach = {cst}
    q = deque([cst])
    while q:
        u = q.popleft()
        for v in topo.neighbors(u):
            if v not in reach and topo.kind(v) != K.CLINIC:
                reach.add(v)
                q.append(v)
    for c in topo.clinics:
        if not any(v in reach for v in topo.neighbors(c)):
            raise GraphError(f"graph violation: clinic {c} cannot reach the cloud storage")


def load_topology_file(path) -> Topology:
    return load_topology(Path(path).read_bytes())


def west_leeds() -> Topology:
    """The shipped West Leeds reconstruction (37 clinics, 26 BSs, 1 OLT)."""
    return load_topology(resources.files("fogplace").joinpath("data/west_leeds.json").read_bytes())
