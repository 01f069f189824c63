import copy
import json
from fractions import Fraction as R

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfforge.boxset import Box, BoxSet
from cfforge.cfcore import CFLevel, Cylinder, measure_ratios, validate
from cfforge.errors import BudgetExhausted, PreconditionError
from cfforge.forcing import (
    AuxFlowSpec,
    ForcingState,
    Partition,
    aux_ratio_limit,
    auto_p_seq,
    build_flow,
    certificates_from_json,
    certificates_json,
    check_certificates,
    check_grafts,
    check_partition_chain,
    flow_json,
    gen_aux,
    initial_state,
    make_partition,
    run_step,
)
from oracles import random_schedule

SMALL = AuxFlowSpec(cuts=[2], depth=4)


@pytest.fixture(scope="module")
def trivial():
    # one atom, p = 2: only the diagonal pair, so D_1 comes from the floor
    return build_flow([2], 1, AuxFlowSpec(), 2, 500)


@pytest.fixture(scope="module")
def two_atoms():
    return build_flow([1], 1, SMALL, 2, 500, h0=2, initial_mesh=1)


def atoms_cover(P: Partition) -> bool:
    edges = [a.lo[0] for a in P.atoms] + [P.atoms[-1].hi[0]]
    return edges[0] == 0 and edges[-1] == P.h and all(x < y for x, y in zip(edges, edges[1:]))


class TestPartition:
    def test_single_atom(self):
        s = validate([CFLevel(1, ())], dim=1)
        P = make_partition(s, 0)
        assert P.atoms == [Box((0,), (1,))]

    def test_refines_translates_and_spacers(self):
        s = validate([CFLevel(1, ((0,), (2,))), CFLevel(5, ())], dim=1, strong=True)
        P0 = make_partition(s, 0)
        P1 = make_partition(s, 1, P0, mesh=R(1, 2))
        atoms = set(P1.atoms)
        for lo in [0, R(1, 2), 2, R(5, 2)]:
            assert Box((lo,), (lo + R(1, 2),)) in atoms
        # spacers [1,2) and [3,5) are split too
        assert Box((1,), (R(3, 2),)) in atoms and Box((R(9, 2),), (5,)) in atoms
        assert atoms_cover(P1) and sum(a.hi[0] - a.lo[0] for a in P1.atoms) == 5
        assert check_partition_chain(s, [P0, P1]) == []

    def test_default_mesh(self):
        s = validate([CFLevel(1, ((0,), (2,))), CFLevel(5, ())], dim=1, strong=True)
        P1 = make_partition(s, 1, make_partition(s, 0))
        assert P1.mesh <= 1 and P1.count == 5

    def test_needs_previous_level(self):
        s = validate([CFLevel(1, ((0,), (2,))), CFLevel(5, ())], dim=1, strong=True)
        with pytest.raises(PreconditionError):
            make_partition(s, 1, None)

    def test_product_atoms(self):
        P = Partition(0, R(1), R(1, 2))
        atoms = P.product_atoms(2)
        assert len(atoms) == 4
        assert atoms[1] == BoxSet.from_box((0, R(1, 2)), (R(1, 2), 1))

    @settings(max_examples=40)
    @given(st.randoms(use_true_random=False))
    def test_chain_laws(self, rng):
        s = random_schedule(rng, 1, rng.randint(1, 4))
        chain = [make_partition(s, 0, mesh=R(1, rng.choice([1, 2, 3])))]
        for n in range(1, s.L + 1):
            chain.append(make_partition(s, n, chain[-1]))
        assert check_partition_chain(s, chain) == []
        for n, P in enumerate(chain):
            assert atoms_cover(P)
            if n:
                assert P.mesh <= R(1, n)
                # each Delta + c is a union of atoms of the next partition
                edges = {a.lo[0] for a in P.atoms} | {P.h}
                prev = chain[n - 1]
                for c in s.C(n):
                    for a in prev.atoms:
                        assert a.lo[0] + c[0] in edges and a.hi[0] + c[0] in edges


class TestAux:
    def test_first_level(self):
        s = gen_aux(AuxFlowSpec(cuts=[2]).with_base(1), 1)
        assert s.C(1) == ((R(0),), (R(4),)) and s.h(1) == 9
        assert s.checked_strong

    def test_cycles_and_validates(self):
        spec = AuxFlowSpec(cuts=[2, 3], sigma=[2, 3], stair=[1, 0], slack=[0, 1]).with_base(R(3, 2))
        s = gen_aux(spec, 6)
        assert [len(s.C(k)) for k in range(1, 7)] == [2, 3, 2, 3, 2, 3]
        assert s.checked_strong

    def test_ratio_stays_bounded(self):
        spec = AuxFlowSpec().with_base(1)
        s = gen_aux(spec, 6)
        bound = aux_ratio_limit(spec)
        assert all(r <= bound for r in measure_ratios(s))

    def test_no_room_is_reported_with_stage(self):
        spec = AuxFlowSpec(cuts=[2], sigma=[0], stair=[0], slack=[0]).with_base(1)
        with pytest.raises(PreconditionError, match="stage 0"):
            gen_aux(spec, 1)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            AuxFlowSpec(cuts=[1])
        with pytest.raises(ValueError):
            AuxFlowSpec.from_json({"cuts": [2], "typo": 1})

    def test_json_round_trip(self):
        spec = AuxFlowSpec(cuts=[2, 3], sigma=[R(5, 2)]).with_base(3)
        assert AuxFlowSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec


def test_auto_p_seq():
    assert auto_p_seq(6) == [2, 2, 3, 2, 3, 4]


class TestStep:
    def test_floor_and_doubling(self, trivial):
        s, certs, report, state = trivial
        assert report.D == [1] and state.markers == [0, 1]
        assert s.h(1) == 2 * 9
        assert len(certs) == 1 and certs[0].N == 0
        assert report.verdict.ok and report.doubling_ok and report.lebesgue_ok

    def test_several_atoms(self, two_atoms):
        s, certs, report, state = two_atoms
        D = report.D[0]
        assert state.markers == [0, 1 * D]
        assert len(certs) == 2 * 2 * 1  # atom pairs times grid points {1}
        for c in certs:
            assert len(c.parts) == D + 1 and c.N <= D
            assert c.mass_fraction > R(1, 2)
            assert all(c.checks.values())
        assert any(c.N > 0 for c in certs)
        assert report.verdict.ok and report.doubling_ok

    def test_top_cube_doubles(self, two_atoms):
        s, _, report, state = two_atoms
        rec = state.log[0]
        aux_s = gen_aux(AuxFlowSpec.from_json(rec["aux"]), rec["m"] - rec["m_prev"])
        assert s.h(rec["m"]) == 2 * aux_s.h(rec["m"] - rec["m_prev"])
        assert check_grafts(state) == []

    def test_budget_zero(self):
        with pytest.raises(BudgetExhausted):
            build_flow([2], 1, AuxFlowSpec(), 1, 0)

    def test_wrong_step_index(self):
        with pytest.raises(PreconditionError):
            run_step(initial_state([2]), 2, AuxFlowSpec(), 1, 10)

    def test_mismatched_base(self):
        with pytest.raises(PreconditionError):
            run_step(initial_state([2]), 1, AuxFlowSpec(base_h=3), 1, 10)

    def test_two_steps(self):
        s, certs, report, state = build_flow([1, 1], 2, SMALL, 1, 5000)
        m = state.markers
        assert [m[n] - m[n - 1] for n in (1, 2)] == [n * D for n, D in zip((1, 2), report.D)]
        assert report.verdict.ok and report.doubling_ok and report.lebesgue_ok
        assert all(c.mass_fraction > R(1, 2) for c in certs)
        assert validate(s.levels, dim=1, strong=True) == s
        r = measure_ratios(s)
        assert all(r[k] >= 2 * r[k - 1] for k in m[1:])


class TestCheck:
    def test_empty_list(self, two_atoms):
        assert check_certificates(two_atoms[3], []).ok

    def test_json_round_trip(self, two_atoms):
        s, certs, _, state = two_atoms
        obj = json.loads(json.dumps(certificates_json(certs)))
        back = certificates_from_json(obj)
        assert back == certs
        flow = json.loads(json.dumps(flow_json(state)))
        st2 = ForcingState.from_flow_json(flow)
        assert st2.schedule == s and st2.markers == state.markers
        assert check_certificates(st2, back).ok

    def test_tampering_one_part(self, two_atoms):
        _, certs, _, state = two_atoms
        idx = next(i for i, c in enumerate(certs) if c.N > 0)
        bad = copy.deepcopy(certs)
        k = next(j for j, p in enumerate(bad[idx].parts) if p.base)
        part = bad[idx].parts[k]
        box = part.base.boxes[0]
        shrunk = BoxSet.from_box(box.lo, (box.lo[0] + (box.hi[0] - box.lo[0]) / 2,))
        bad[idx].parts[k] = Cylinder(part.level, part.base - shrunk)
        v = check_certificates(state, bad)
        assert [i for i, _ in v.failures] == [idx]

    def test_tampering_mass_fraction(self, two_atoms):
        _, certs, _, state = two_atoms
        bad = copy.deepcopy(certs)
        bad[0].mass_fraction += R(1, 1000)
        assert [i for i, _ in check_certificates(state, bad).failures] == [0]

    def test_tampering_atom(self, two_atoms):
        _, certs, _, state = two_atoms
        bad = copy.deepcopy(certs)
        bad[1].atom_b = Box((R(1, 2),), (R(3, 2),))
        assert [i for i, _ in check_certificates(state, bad).failures] == [1]

    def test_tampered_graft(self, two_atoms):
        s, certs, _, state = two_atoms
        levels = list(s.levels)
        last = levels[-1]
        levels[-1] = CFLevel(last.h + 1, ())
        st2 = ForcingState(state.p_seq, validate(levels, dim=1, strong=True), state.partitions, state.markers,
                           state.log)
        v = check_certificates(st2, [])
        assert not v.ok


def test_workers_do_not_change_output(two_atoms):
    _, certs, _, state = two_atoms
    _, certs2, _, state2 = build_flow([1], 1, SMALL, 2, 500, h0=2, initial_mesh=1, workers=2)
    assert json.dumps(flow_json(state)) == json.dumps(flow_json(state2))
    assert json.dumps(certificates_json(certs)) == json.dumps(certificates_json(certs2))
