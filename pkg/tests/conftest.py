"""Shared builders: canonical benchmark networks and a seeded random
hybrid-network generator used by the property suites."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import acdcstab as ax

NETWORKS_DIR = Path(__file__).resolve().parents[1] / "networks"


def load_network_doc(name: str) -> dict:
    with open(NETWORKS_DIR / f"{name}.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def example1_doc(m1=1.0, m2=1.0, m3=2.0, b1=1.0, b2=2.0, d1=1.0) -> dict:
    """Three-machine benchmark; defaults sit on the resonant ray b2/b1 = m3/m2."""
    return {
        "nodes": [{"id": str(i), "kind": "ac-machine"} for i in (1, 2, 3)],
        "ac_edges": [
            {"from": "1", "to": "2", "b": b1},
            {"from": "1", "to": "3", "b": b2},
        ],
        "devices": {
            "1": {"M": m1, "D": d1},
            "2": {"M": m2},
            "3": {"M": m3},
        },
    }


def model_from(doc: dict):
    return ax.load_model(doc)


def relabel_doc(doc: dict, mapping: dict) -> dict:
    """Rename node ids everywhere (edges keep their explicit ids if present)."""
    def mp(n):
        return mapping.get(n, n)

    out = {
        "nodes": [{"id": mp(n["id"]), "kind": n["kind"]} for n in doc["nodes"]],
        "ac_edges": [dict(e, **{"from": mp(e["from"]), "to": mp(e["to"])}) for e in doc.get("ac_edges", [])],
        "dc_edges": [dict(e, **{"from": mp(e["from"]), "to": mp(e["to"])}) for e in doc.get("dc_edges", [])],
        "devices": {mp(k): v for k, v in doc["devices"].items() if not k.startswith("_")},
    }
    return out


# ---------------------------------------------------------------------------
# Random hybrid networks
# ---------------------------------------------------------------------------

def _tree_edges(rng, nodes):
    edges = []
    for k in range(1, len(nodes)):
        edges.append((nodes[k], nodes[int(rng.integers(0, k))]))
    return edges


def _maybe_extra_edges(rng, nodes, edges, p):
    have = {frozenset(e) for e in edges}
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            pair = frozenset((nodes[i], nodes[j]))
            if pair not in have and rng.random() < p:
                edges.append((nodes[i], nodes[j]))
                have.add(pair)
    return edges


def random_network(rng: np.random.Generator, max_nodes=12, p_cycle=0.25) -> dict:
    """Random connected hybrid network: <= 3 ac subgrids, <= 2 non-singleton
    dc subgrids, edge weights U(0.5, 2), converters of a shared dc subgrid
    get one common dc droop gain.

    At least one device provides damping, so the damping prerequisite always
    holds; everything else (rank conditions, topology checks) varies freely.
    """
    n_ac = int(rng.integers(1, 4))
    uid = [0]

    def fresh(prefix):
        uid[0] += 1
        return f"{prefix}{uid[0]}"

    subgrids = []
    total = 0
    for i in range(n_ac):
        budget = max_nodes - total - (n_ac - 1 - i)  # keep room for later subgrids
        n_here = int(rng.integers(1, max(2, min(4, budget)) + 1))
        n_conv = int(rng.integers(0, n_here + 1))
        if i > 0 and n_conv == 0:
            n_conv = 1  # needs a converter to tie into the union graph
        machines = [fresh("m") for _ in range(n_here - n_conv)]
        converters = [fresh("c") for _ in range(n_conv)]
        subgrids.append((machines, converters))
        total += n_here

    # Bridge ac subgrids through dc subgrids so the union stays connected.
    dc_groups = []
    if n_ac >= 2:
        convs = [sg[1] for sg in subgrids]
        if n_ac == 3 and convs[2] and rng.random() < 0.5 and len(dc_groups) < 1:
            picks = []
            for c in convs:
                if not c:
                    picks = []
                    break
                picks.append(c[int(rng.integers(0, len(c)))])
            if picks:
                dc_groups.append(picks)
        if not dc_groups:
            for i in range(1, n_ac):
                a = subgrids[i][1]
                b = subgrids[int(rng.integers(0, i))][1]
                if not a or not b:
                    return random_network(rng, max_nodes=max_nodes, p_cycle=p_cycle)
                dc_groups.append([a[int(rng.integers(0, len(a)))], b[int(rng.integers(0, len(b)))]])
        dc_groups = dc_groups[:2]
    elif subgrids[0][1] and rng.random() < 0.4 and len(subgrids[0][1]) >= 2:
        c = subgrids[0][1]
        dc_groups.append(list(rng.choice(c, size=2, replace=False)))

    dc_buses = []
    for grp in dc_groups:
        for _ in range(int(rng.integers(0, 2))):
            if total < max_nodes:
                nb = fresh("d")
                dc_buses.append(nb)
                grp.append(nb)
                total += 1

    nodes = []
    devices = {}
    ac_edges = []
    dc_edges = []

    def weight():
        return float(rng.uniform(0.5, 2.0))

    for machines, converters in subgrids:
        members = machines + converters
        for e in _maybe_extra_edges(rng, members, _tree_edges(rng, members), p_cycle):
            ac_edges.append({"from": e[0], "to": e[1], "b": weight()})
        for n in machines:
            dev = {"M": float(rng.uniform(0.5, 2.0))}
            if rng.random() < 0.5:
                dev["D"] = float(rng.uniform(0.5, 2.0))
            if rng.random() < 0.5:
                dev["turbine"] = {
                    "T_g": float(rng.uniform(0.5, 2.0)),
                    "k_g": 0.0 if rng.random() < 0.3 else float(rng.uniform(0.5, 2.0)),
                }
            nodes.append({"id": n, "kind": "ac-machine"})
            devices[n] = dev
        for n in converters:
            dev = {
                "C": float(rng.uniform(0.5, 2.0)),
                "m_p": float(rng.uniform(0.05, 0.5)),
                "k_theta": float(rng.uniform(0.5, 2.0)),
            }
            if rng.random() < 0.3:
                dev["G"] = float(rng.uniform(0.5, 2.0))
            if rng.random() < 0.5:
                dev["source"] = {
                    "T_g": float(rng.uniform(0.5, 2.0)),
                    "k_g": 0.0 if rng.random() < 0.3 else float(rng.uniform(0.5, 2.0)),
                }
            nodes.append({"id": n, "kind": "converter"})
            devices[n] = dev

    for n in dc_buses:
        dev = {"C": float(rng.uniform(0.5, 2.0))}
        if rng.random() < 0.3:
            dev["G"] = float(rng.uniform(0.5, 2.0))
        if rng.random() < 0.4:
            dev["source"] = {
                "T_g": float(rng.uniform(0.5, 2.0)),
                "k_g": 0.0 if rng.random() < 0.3 else float(rng.uniform(0.5, 2.0)),
            }
        nodes.append({"id": n, "kind": "dc-bus"})
        devices[n] = dev

    for grp in dc_groups:
        for e in _maybe_extra_edges(rng, grp, _tree_edges(rng, grp), p_cycle):
            dc_edges.append({"from": e[0], "to": e[1], "g": weight()})

    # One common dc droop gain per non-singleton dc subgrid.
    for grp in dc_groups:
        k_theta = float(rng.uniform(0.5, 2.0))
        for n in grp:
            if n in devices and "m_p" in devices[n]:
                devices[n]["k_theta"] = k_theta

    damped = any(
        devices[n].get("D", 0) > 0 or devices[n].get("G", 0) > 0
        or devices[n].get("turbine", {}).get("k_g", 0) > 0
        or devices[n].get("source", {}).get("k_g", 0) > 0
        for n in devices
    )
    if not damped:
        first = nodes[0]["id"]
        if "M" in devices[first]:
            devices[first]["D"] = float(rng.uniform(0.5, 2.0))
        else:
            devices[first]["G"] = float(rng.uniform(0.5, 2.0))

    return {"nodes": nodes, "ac_edges": ac_edges, "dc_edges": dc_edges, "devices": devices}


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
