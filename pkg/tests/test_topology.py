import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import tiny_doc
from fogplace.topology import (GraphError, NodeKind, SchemaError, load_topology,
                               min_hop_path, neighbors)
from fogplace.toys import random_topology_doc

K = NodeKind
CHAIN = ["olt", "cas", "ar", "cr", "clr", "cls", "cs", "cst"]


def bfs_dist(topo, src, dst, kinds):
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in topo.neighbors(u):
            if v in dist or (v != dst and topo.kind(v) not in kinds):
                continue
            dist[v] = dist[u] + 1
            if v != dst:
                q.append(v)
    return dist.get(dst)


def test_minimal_document_has_onu_and_olt_candidates(tiny):
    assert tiny.fog_candidates("foa") == ["o1", "olt"]
    assert tiny.fog_candidates("ca") == ["cls"]
    assert tiny.cloud_storage == "cst"


def test_west_leeds_shape(wl):
    assert len(wl.clinics) == 37
    assert len(wl.base_stations) == 26
    assert len(wl.nodes_of(K.ONU)) == 26
    assert len(wl.nodes_of(K.OLT)) == 1
    assert len(wl.fog_candidates("foa")) == 27


def test_clinic_next_to_onu_is_a_graph_violation():
    doc = tiny_doc()
    doc["links"].append({"a": "c1", "b": "o1", "capacity_bps": 1.0})
    with pytest.raises(GraphError, match="graph violation"):
        load_topology(doc)


@pytest.mark.parametrize("mutate, err", [
    (lambda d: d["nodes"].append({"id": "x", "kind": "Nope"}), SchemaError),
    (lambda d: d["nodes"].append(dict(d["nodes"][0])), SchemaError),
    (lambda d: d["nodes"][1].update(patients_ecg=3), SchemaError),
    (lambda d: d["nodes"][1].update(fog_candidate=True), SchemaError),
    (lambda d: d["links"].append({"a": "c1", "b": "zz", "capacity_bps": 1.0}), GraphError),
    (lambda d: d["links"][0].update(capacity_bps=0.0), GraphError),
    (lambda d: d["links"].append({"a": "b1", "b": "c1", "capacity_bps": 5.0}), GraphError),
    (lambda d: d["nodes"].append({"id": "cst2", "kind": "CloudStorage"}), GraphError),
])
def test_bad_documents_are_rejected(mutate, err):
    doc = tiny_doc()
    mutate(doc)
    with pytest.raises(err):
        load_topology(doc)


def test_olt_neighbours_are_its_onus_and_the_cas(wl):
    onus = set(wl.nodes_of(K.ONU))
    assert neighbors(wl, "olt") == onus | {"cas"}


def test_clinic_neighbours_match_link_list(wl):
    for c in wl.clinics:
        scan = {ln.b if ln.a == c else ln.a for ln in wl.links if c in (ln.a, ln.b)}
        assert neighbors(wl, c) == scan
        assert all(wl.kind(v) == K.BASE_STATION for v in scan)


def test_paths_from_a_bs(wl):
    onu = wl.parent_onu("bs01")
    assert min_hop_path(wl, "bs01", onu) == ["bs01", onu]
    assert min_hop_path(wl, "bs01", "olt") == ["bs01", onu, "olt"]


def test_olt_to_storage_follows_the_layers(wl):
    from fogplace.topology import STORAGE_KINDS
    assert min_hop_path(wl, "olt", "cst", STORAGE_KINDS) == CHAIN


def test_adjacency_is_symmetric(wl):
    for n in wl.nodes:
        for v in wl.neighbors(n.id):
            assert n.id in wl.neighbors(v)


@given(st.integers(0, 10_000))
def test_min_hop_length_equals_bfs_distance(seed):
    rng = np.random.default_rng(seed)
    topo = load_topology(random_topology_doc(rng))
    ids = [n.id for n in topo.nodes if n.kind != K.CLINIC]
    from fogplace.topology import ROUTE_KINDS
    for _ in range(10):
        a, b = rng.choice(len(ids), size=2, replace=False)
        src, dst = ids[a], ids[b]
        want = bfs_dist(topo, src, dst, ROUTE_KINDS)
        if want is None:
            with pytest.raises(GraphError):
                min_hop_path(topo, src, dst)
            continue
        path = min_hop_path(topo, src, dst)
        assert len(path) - 1 == want
        assert path[0] == src and path[-1] == dst
        assert all(path[i + 1] in topo.neighbors(path[i]) for i in range(len(path) - 1))


def test_loading_is_deterministic(wl):
    raw = json.dumps(wl.to_doc()).encode()
    a, b = load_topology(raw), load_topology(raw)
    assert [n.id for n in a.nodes] == [n.id for n in b.nodes] == [n.id for n in wl.nodes]
    assert a.links == b.links


def test_with_patients_replaces_counts(tiny):
    t2 = tiny.with_patients("ecg", {"c1": 7})
    assert t2.patients("ecg") == {"c1": 7}
    assert tiny.patients("ecg") == {"c1": 20}
