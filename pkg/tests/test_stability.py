"""Topological checks, rank tests, energy function, and eigenvalue oracle."""

import numpy as np
import pytest

import acdcstab as ax
from acdcstab.devices import classify_nodes, validate_devices
from acdcstab.errors import CertificateInvalid
from acdcstab.network import build_network, partition_subgrids
from acdcstab.sim import closed_form_example1
from acdcstab.stability import (
    algorithm1,
    assumption2_numeric,
    check_assumption1,
    check_condition1,
    corollary1,
    def1_partition,
    eigen_oracle,
    lasalle_derivative,
    lasalle_gradient,
    lasalle_value,
    reduced_graph,
    verify_stability,
)

from conftest import example1_doc, load_network_doc, model_from, random_network, relabel_doc


def _analysis(doc):
    g = build_network(doc)
    dev = validate_devices(g)
    part = partition_subgrids(g)
    roles = classify_nodes(part, dev)
    return g, dev, part, roles


class TestCondition1:
    def test_two_area_passes(self):
        _g, dev, part, _r = _analysis(load_network_doc("two_area_hvdc"))
        res = check_condition1(part, dev)
        assert res.passed
        hv = [c for c in res.subgrids if len(c.gains) == 2]
        assert hv and hv[0].gains == {"10": 0.1, "20": 0.1}

    def test_singleton_vacuous(self):
        _g, dev, part, _r = _analysis(load_network_doc("converter_dominated_five_bus"))
        res = check_condition1(part, dev)
        assert res.passed and all(c.passed for c in res.subgrids)

    def test_mismatched_gains_named(self):
        doc = load_network_doc("two_area_hvdc")
        doc["devices"]["20"]["k_theta"] = 0.12
        _g, dev, part, _r = _analysis(doc)
        res = check_condition1(part, dev)
        assert not res.passed
        (bad,) = res.offending.values()
        assert bad == {"10": 0.1, "20": 0.12}


class TestAssumption1:
    def test_all_lossless_mpp_fails(self):
        doc = load_network_doc("converter_dominated_five_bus")
        doc["devices"]["1"]["source"]["k_g"] = 0.0
        _g, _d, _p, roles = _analysis(doc)
        res = check_assumption1(roles)
        assert not res.passed and res.witness is None

    def test_single_damped_machine(self):
        doc = {
            "nodes": [{"id": "1", "kind": "ac-machine"}],
            "devices": {"1": {"M": 1.0, "D": 0.2}},
        }
        _g, _d, _p, roles = _analysis(doc)
        res = check_assumption1(roles)
        assert res.passed and res.witness == "1"

    def test_two_area_passes(self):
        _g, _d, _p, roles = _analysis(load_network_doc("two_area_hvdc"))
        assert check_assumption1(roles).passed


class TestDef1AndReducedGraph:
    def test_converter_dominated_five_bus(self):
        _g, _d, part, roles = _analysis(load_network_doc("converter_dominated_five_bus"))
        d1 = def1_partition(part.ac_subgrids[0], roles)
        assert d1.dominated == "converter"
        assert d1.C == ("4", "5") and d1.D == ("1", "2", "3") and d1.F == ()
        red = reduced_graph(part.ac_subgrids[0], d1)
        assert tuple(e.id for e in red.edges) == ("e4", "e5")

    def test_machine_dominated_five_bus(self):
        _g, _d, part, roles = _analysis(load_network_doc("machine_dominated_five_bus"))
        d1 = def1_partition(part.ac_subgrids[0], roles)
        assert d1.dominated == "machine"
        assert d1.C == ("3",) and d1.D == ("1", "2", "4") and d1.F == ("5",)
        red = reduced_graph(part.ac_subgrids[0], d1)
        assert tuple(e.id for e in red.edges) == ("e1", "e2", "e4", "e5", "e6")

    def test_two_area_partitions(self):
        _g, _d, part, roles = _analysis(load_network_doc("two_area_hvdc"))
        d1 = def1_partition(part.ac_subgrids[0], roles)
        d2 = def1_partition(part.ac_subgrids[1], roles)
        assert d1.D == ("2", "3", "10") and d1.C == ("1",)
        assert d2.D == ("12", "13", "20") and d2.C == ("11",)
        red1 = reduced_graph(part.ac_subgrids[0], d1)
        assert {frozenset((e.u, e.v)) for e in red1.edges} == {
            frozenset(("1", "2")), frozenset(("1", "3")), frozenset(("1", "10"))}

    def test_complete_bipartite_keeps_all_edges(self):
        doc = {
            "nodes": [{"id": "c1", "kind": "converter"}, {"id": "c2", "kind": "converter"},
                      {"id": "m1", "kind": "ac-machine"}, {"id": "m2", "kind": "ac-machine"}],
            "ac_edges": [{"from": c, "to": m, "b": 1.0}
                         for c in ("c1", "c2") for m in ("m1", "m2")],
            "devices": {
                "c1": {"C": 0.1, "m_p": 0.05, "k_theta": 0.1,
                       "source": {"T_g": 0.5, "k_g": 1.0}},
                "c2": {"C": 0.1, "m_p": 0.05, "k_theta": 0.1},
                "m1": {"M": 1.0}, "m2": {"M": 1.0},
            },
        }
        _g, _d, part, roles = _analysis(doc)
        d1 = def1_partition(part.ac_subgrids[0], roles)
        red = reduced_graph(part.ac_subgrids[0], d1)
        assert len(red.edges) == 4


class TestAlgorithm1:
    def test_two_area_one_step(self):
        _g, _d, part, roles = _analysis(load_network_doc("two_area_hvdc"))
        d1 = def1_partition(part.ac_subgrids[0], roles)
        res = algorithm1(reduced_graph(part.ac_subgrids[0], d1), d1)
        assert res.emptied
        assert res.removal_order == (("2", "1"),)  # smallest single-edge neighbor wins the tie

    def test_empty_c_zero_iterations(self):
        _g, _d, part, roles = _analysis(load_network_doc("machines_only"))
        d1 = def1_partition(part.ac_subgrids[0], roles)
        res = algorithm1(reduced_graph(part.ac_subgrids[0], d1), d1)
        assert d1.C == ()
        assert res.emptied and res.removal_order == ()

    def _shared_degree2_doc(self):
        # both undamped machines hang off one damped machine of degree 2
        return {
            "nodes": [{"id": "d", "kind": "ac-machine"},
                      {"id": "c1", "kind": "ac-machine"},
                      {"id": "c2", "kind": "ac-machine"}],
            "ac_edges": [{"from": "d", "to": "c1", "b": 1.0},
                         {"from": "d", "to": "c2", "b": 1.3}],
            "devices": {"d": {"M": 1.0, "D": 1.0}, "c1": {"M": 1.0}, "c2": {"M": 1.0}},
        }

    def test_shared_degree_two_node_stalls(self, rng):
        doc = self._shared_degree2_doc()
        _g, _d, part, roles = _analysis(doc)
        d1 = def1_partition(part.ac_subgrids[0], roles)
        res = algorithm1(reduced_graph(part.ac_subgrids[0], d1), d1)
        assert not res.emptied
        assert set(res.remaining) == {"c1", "c2"}
        # cross-check: the numeric rank test fails for random weights too
        for _ in range(5):
            doc["ac_edges"][0]["b"] = float(rng.uniform(0.5, 2.0))
            doc["ac_edges"][1]["b"] = float(rng.uniform(0.5, 2.0))
            _g2, _d2, part2, roles2 = _analysis(doc)
            rk = assumption2_numeric(part2.ac_subgrids[0], roles2)
            assert rk.verdict == "fail"

    def test_terminates_within_c_iterations(self, rng):
        for _ in range(30):
            _g, _d, part, roles = _analysis(random_network(rng))
            for sg in part.ac_subgrids:
                d1 = def1_partition(sg, roles)
                res = algorithm1(reduced_graph(sg, d1), d1)
                assert len(res.removal_order) <= len(d1.C)

    def test_verdict_invariant_under_relabeling(self, rng):
        for k in range(15):
            doc = random_network(rng)
            ids = [n["id"] for n in doc["nodes"]]
            perm = list(rng.permutation(len(ids)))
            mapping = {ids[i]: f"z{perm[i]:02d}" for i in range(len(ids))}
            doc2 = relabel_doc(doc, mapping)
            verdicts1 = {}
            _g, _d, part, roles = _analysis(doc)
            for sg in part.ac_subgrids:
                d1 = def1_partition(sg, roles)
                res = algorithm1(reduced_graph(sg, d1), d1)
                verdicts1[frozenset(mapping[n] for n in sg.node_ids)] = res.emptied
            _g, _d, part2, roles2 = _analysis(doc2)
            for sg in part2.ac_subgrids:
                d1 = def1_partition(sg, roles2)
                res = algorithm1(reduced_graph(sg, d1), d1)
                assert verdicts1[frozenset(sg.node_ids)] == res.emptied


class TestCorollary1:
    def test_converter_dominated_case1(self):
        _g, _d, part, roles = _analysis(load_network_doc("converter_dominated_five_bus"))
        d1 = def1_partition(part.ac_subgrids[0], roles)
        res = corollary1(reduced_graph(part.ac_subgrids[0], d1), d1)
        assert res.passed and res.case1_all and not res.case2_all

    def test_machine_dominated_case2(self):
        _g, _d, part, roles = _analysis(load_network_doc("machine_dominated_five_bus"))
        d1 = def1_partition(part.ac_subgrids[0], roles)
        res = corollary1(reduced_graph(part.ac_subgrids[0], d1), d1)
        assert res.passed
        (nc,) = res.node_cases
        assert nc.node == "3" and nc.case2

    def test_isolated_c_node_fails(self):
        # undamped machine x only connects to other C nodes: isolated in the
        # reduced graph once C-C edges drop
        doc = {
            "nodes": [{"id": "d1", "kind": "ac-machine"},
                      {"id": "x", "kind": "ac-machine"},
                      {"id": "y", "kind": "ac-machine"}],
            "ac_edges": [{"from": "d1", "to": "y", "b": 1.0},
                         {"from": "x", "to": "y", "b": 1.0}],
            "devices": {"d1": {"M": 1.0, "D": 1.0}, "x": {"M": 1.0}, "y": {"M": 1.0}},
        }
        _g, _d, part, roles = _analysis(doc)
        d1 = def1_partition(part.ac_subgrids[0], roles)
        res = corollary1(reduced_graph(part.ac_subgrids[0], d1), d1)
        cases = {nc.node: nc for nc in res.node_cases}
        assert not cases["x"].case1 and not cases["x"].case2
        assert not res.passed

    def test_cycle_with_spurs_passes_corollary_but_stalls_removal(self):
        # C node x sits on a 4-cycle through qualifying node y, but both
        # damped cycle neighbors carry extra edges, so the removal procedure
        # stalls after eliminating y.  The rank condition still holds: the
        # two sufficient checks are incomparable.
        doc = {
            "nodes": [{"id": n, "kind": "ac-machine"} for n in ("l", "d1", "d2", "x", "y")]
            + [{"id": n, "kind": "converter"} for n in ("f1", "f2")],
            "ac_edges": [
                {"from": "l", "to": "y", "b": 1.0},
                {"from": "d1", "to": "y", "b": 1.1},
                {"from": "d1", "to": "x", "b": 0.9},
                {"from": "d2", "to": "y", "b": 1.2},
                {"from": "d2", "to": "x", "b": 0.8},
                {"from": "d1", "to": "f1", "b": 1.3},
                {"from": "d2", "to": "f2", "b": 0.7},
            ],
            "devices": {
                "l": {"M": 1.0, "D": 1.0}, "d1": {"M": 1.0, "D": 0.5}, "d2": {"M": 1.0, "D": 0.7},
                "x": {"M": 1.0}, "y": {"M": 1.0},
                "f1": {"C": 0.1, "m_p": 0.05, "k_theta": 0.1},
                "f2": {"C": 0.1, "m_p": 0.05, "k_theta": 0.1},
            },
        }
        _g, _d, part, roles = _analysis(doc)
        sg = part.ac_subgrids[0]
        d1 = def1_partition(sg, roles)
        red = reduced_graph(sg, d1)
        cor = corollary1(red, d1)
        alg = algorithm1(red, d1)
        rk = assumption2_numeric(sg, roles)
        assert cor.passed
        assert not alg.emptied and alg.remaining == ("x",)
        assert rk.verdict == "pass"
        assert eigen_oracle(model_from(doc)).verdict == "stable"

    def test_corollary_implies_rank_random(self, rng):
        hits = 0
        for _ in range(60):
            _g, _d, part, roles = _analysis(random_network(rng))
            for sg in part.ac_subgrids:
                d1 = def1_partition(sg, roles)
                res = corollary1(reduced_graph(sg, d1), d1)
                if res.passed:
                    hits += 1
                    assert assumption2_numeric(sg, roles).verdict == "pass"
        assert hits >= 40


class TestAssumption2Numeric:
    def test_converter_dominated_full_rank(self):
        _g, _d, part, roles = _analysis(load_network_doc("converter_dominated_five_bus"))
        res = assumption2_numeric(part.ac_subgrids[0], roles)
        assert res.verdict == "pass"
        m1 = next(m for m in res.matrices if m.name == "converter_rows_machine_cols")
        assert m1.full_column_rank and m1.shape == (3, 2)

    def test_no_machine_subgrid_auto_pass(self):
        _g, _d, part, roles = _analysis(load_network_doc("offshore_wind"))
        offshore = part.ac_subgrids[0]
        assert offshore.machine_ids == ()
        res = assumption2_numeric(offshore, roles)
        assert res.auto_pass and res.verdict == "pass"

    def test_three_machine_benchmark_fails(self):
        _g, _d, part, roles = _analysis(example1_doc())
        res = assumption2_numeric(part.ac_subgrids[0], roles)
        assert res.verdict == "fail"
        m2 = next(m for m in res.matrices if m.name == "damped_rows_undamped_cols")
        assert m2.shape == (1, 2)  # one damped row cannot carry two columns
        assert not m2.full_column_rank

    @staticmethod
    def near_rank_deficient_doc():
        # complete bipartite converter/machine subgrid with almost
        # proportional Laplacian columns: the topological checks cannot
        # certify it and the singular-value ratio lands in the gray band
        return {
            "nodes": [{"id": "a", "kind": "converter"}, {"id": "b", "kind": "converter"},
                      {"id": "x", "kind": "ac-machine"}, {"id": "y", "kind": "ac-machine"}],
            "ac_edges": [
                {"from": "a", "to": "x", "b": 1.0},
                {"from": "a", "to": "y", "b": 1.0},
                {"from": "b", "to": "x", "b": 1.0},
                {"from": "b", "to": "y", "b": 1.0 + 3e-9},
            ],
            "devices": {
                "a": {"C": 0.1, "m_p": 0.05, "k_theta": 0.1, "source": {"T_g": 0.5, "k_g": 1.0}},
                "b": {"C": 0.1, "m_p": 0.05, "k_theta": 0.1},
                "x": {"M": 1.0}, "y": {"M": 1.0},
            },
        }

    def test_near_threshold_is_indeterminate(self):
        doc = self.near_rank_deficient_doc()
        _g, _d, part, roles = _analysis(doc)
        d1 = def1_partition(part.ac_subgrids[0], roles)
        red = reduced_graph(part.ac_subgrids[0], d1)
        assert not algorithm1(red, d1).emptied  # no single-edge damped node
        assert not corollary1(red, d1).passed
        res = assumption2_numeric(part.ac_subgrids[0], roles)
        assert res.verdict == "indeterminate"
        rep = verify_stability(model_from(doc))
        assert rep.verdict == "indeterminate"


class TestEnergyFunction:
    def test_zero_state(self):
        model = model_from(load_network_doc("two_area_hvdc"))
        x = np.zeros(model.layout.dim)
        assert lasalle_value(model, x) == 0.0
        assert lasalle_derivative(model, x) == 0.0

    def test_positive_definite(self, rng):
        model = model_from(load_network_doc("two_area_hvdc"))
        for _ in range(50):
            x = rng.normal(size=model.layout.dim)
            assert lasalle_value(model, x) > 0.0

    def test_dissipation_matches_chain_rule(self, rng):
        for _ in range(10):
            model = model_from(random_network(rng))
            s = model.layout
            for _ in range(10):
                x = rng.normal(size=s.dim)
                x[s.pbar] = 0.0
                lhs = lasalle_derivative(model, x)
                rhs = float(lasalle_gradient(model, x) @ (model.T_inv_A @ x))
                scale = max(1.0, abs(lhs), abs(rhs))
                assert abs(lhs - rhs) <= 1e-10 * scale
                assert lhs <= 1e-12

    def test_constant_along_marginal_orbit(self):
        model = model_from(example1_doc())
        for t in np.linspace(0.0, 12.0, 25):
            x = closed_form_example1(1.0, 2.0, 1.0, 2.0, t)
            assert abs(lasalle_derivative(model, x)) <= 1e-12

    def test_certificate_invalid_when_gains_differ(self):
        doc = load_network_doc("two_area_hvdc")
        doc["devices"]["20"]["k_theta"] = 0.2
        model = model_from(doc)
        assert not model.lasalle_certificate_valid
        x = np.ones(model.layout.dim)
        with pytest.raises(CertificateInvalid):
            lasalle_value(model, x)
        assert lasalle_value(model, x, allow_invalid=True) > 0


class TestEigenOracle:
    def test_marginal_pair_on_resonant_ray(self):
        model = model_from(example1_doc(m2=1.0, m3=2.0, b1=1.0, b2=2.0))
        eig = eigen_oracle(model)
        assert eig.verdict == "marginal"
        near_unit = [z for z in eig.eigenvalues if abs(z.imag - 1.0) < 1e-9]
        assert near_unit and all(abs(z.real) <= 1e-9 for z in near_unit)

    def test_single_damped_machine(self):
        doc = {
            "nodes": [{"id": "1", "kind": "ac-machine"}],
            "devices": {"1": {"M": 1.0, "D": 1.0}},
        }
        eig = eigen_oracle(model_from(doc))
        assert len(eig.eigenvalues) == 1
        assert eig.eigenvalues[0] == pytest.approx(-1.0)

    def test_certified_networks_are_stable(self, rng):
        found = 0
        while found < 40:
            model = model_from(random_network(rng))
            rep = verify_stability(model)
            if rep.verdict == "pass":
                found += 1
                assert rep.eigen.max_real_part < 0.0


class TestVerifyStability:
    def test_two_area_passes_via_topology(self):
        rep = verify_stability(model_from(load_network_doc("two_area_hvdc")))
        assert rep.verdict == "pass"
        assert rep.condition1.passed and rep.assumption1.passed
        for sub in rep.ac_subgrids:
            assert sub.corollary1.case1_all
            assert sub.verdict == "pass"
        assert rep.eigen.verdict == "stable"
        assert rep.lasalle_certificate_valid

    def test_three_machine_benchmark_fails_rank(self):
        rep = verify_stability(model_from(example1_doc()))
        assert rep.verdict == "fail"
        assert rep.condition1.passed and rep.assumption1.passed
        assert rep.ac_subgrids[0].verdict == "fail"
        assert rep.eigen.verdict == "marginal"

    def test_all_mpp_lossless_fails_damping(self):
        doc = load_network_doc("converter_dominated_five_bus")
        doc["devices"]["1"]["source"]["k_g"] = 0.0
        rep = verify_stability(model_from(doc))
        assert rep.verdict == "fail"
        assert not rep.assumption1.passed

    def test_algorithm_implies_rank_random(self, rng):
        checked = 0
        for _ in range(60):
            g = build_network(random_network(rng))
            dev = validate_devices(g)
            part = partition_subgrids(g)
            roles = classify_nodes(part, dev)
            for sg in part.ac_subgrids:
                d1 = def1_partition(sg, roles)
                if algorithm1(reduced_graph(sg, d1), d1).emptied:
                    checked += 1
                    assert assumption2_numeric(sg, roles).verdict == "pass"
        assert checked >= 40
