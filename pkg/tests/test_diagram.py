import dataclasses

import numpy as np
import pytest

from infdiag.factors import Op, ScopedTable, combine_all, marginalize, restrict
from infdiag.diagram import (
    CHANCE,
    DECISION,
    CycleError,
    DiagramError,
    FormatError,
    InfeasibleParamsError,
    NoForgettingError,
    NormalizationError,
    PartitionError,
    UtilityLeafError,
    ValidationError,
    fixture,
    mode_ops,
    parse,
    random_id,
    serialize,
    sov0,
    structurally_equal,
    validate,
)

MINIMAL = """\
IDNET 1
MODE prob
VAR r1 2 CHANCE
VAR r2 2 CHANCE
VAR d 2 DECISION
PROB r1 | : 0.3 0.7
PROB r2 | r1 : 0.2 0.8 0.6 0.4
UTIL u_dr1 d r1 : 1.0 2.0 3.0 4.0
ORDER / d / r2 r1
"""


def test_parse_minimal_structure():
    d = parse(MINIMAL)
    assert d.mode == "prob"
    assert d.names == ("r1", "r2", "d")
    assert [v.kind for v in d.variables] == [CHANCE, CHANCE, DECISION]
    assert d.blocks == ((), (2,), (1, 0))
    assert d.parents == ((), (0,), ())
    assert d.cpts[1].scope == (0, 1)
    assert d.cpts[1].cpt_for == 1
    assert np.array_equal(d.cpts[1].values, [0.2, 0.8, 0.6, 0.4])
    assert d.utilities[0].name == "u_dr1"
    assert d.utilities[0].scope == (2, 0)


def test_parse_accepts_bytes_comments_and_blank_lines():
    noisy = "# leading comment\n\n" + MINIMAL.replace(
        "MODE prob", "MODE prob   # trailing comment")
    d = parse(noisy.encode("utf-8"))
    assert structurally_equal(d, parse(MINIMAL))


def test_round_trip_is_identity():
    for d in (parse(MINIMAL), fixture("fig2"), fixture("fig3"),
              fixture("chain", 3), fixture("star", 4),
              random_id(8, 3, 3, 3, "prob", seed=5),
              random_id(8, 3, 3, 3, "poss", seed=5)):
        again = parse(serialize(d))
        assert structurally_equal(d, again)
        assert serialize(again) == serialize(d)


def test_sov0_examples():
    assert sov0(fixture("fig2")) == [(Op.MAX, (2,)), (Op.SUM, (1, 0))]
    assert sov0(fixture("fig3")) == [
        (Op.MAX, (2,)), (Op.SUM, (1,)), (Op.MAX, (3,)), (Op.SUM, (0,)), (Op.MAX, (4,))]
    single = parse("IDNET 1\nMODE prob\nVAR x 2 CHANCE\nPROB x | : 0.5 0.5\n"
                   "UTIL u x : 0.0 1.0\nORDER x\n")
    assert sov0(single) == [(Op.SUM, (0,))]


def test_sov0_uses_min_for_poss_chance_blocks():
    d = random_id(6, 2, 3, 2, "poss", seed=3)
    ops = {op for op, _ in sov0(d)}
    assert Op.SUM not in ops
    assert ops <= {Op.MIN, Op.MAX}


def test_sov0_blocks_partition_all_variables():
    for seed in range(25):
        d = random_id(9, 3, 3, 3, "prob", seed=seed)
        flat = [x for _, block in sov0(d) for x in block]
        assert sorted(flat) == list(range(len(d.variables)))
        assert all(block for _, block in sov0(d))


def test_mode_ops_tables():
    p = mode_ops("prob")
    assert (p.chance_marg, p.decision_marg) == (Op.SUM, Op.MAX)
    assert (p.group_comb, p.outer_comb, p.unit_interval) == (Op.TIMES, Op.PLUS, False)
    q = mode_ops("poss")
    assert (q.chance_marg, q.decision_marg) == (Op.MIN, Op.MAX)
    assert (q.group_comb, q.outer_comb, q.unit_interval) == (Op.MAX, Op.MIN, True)
    with pytest.raises(DiagramError):
        mode_ops("fuzzy")


# -- errors ----------------------------------------------------------------

def _expect(text: str, exc: type, needle: str = "", line: int | None = None):
    with pytest.raises(exc) as info:
        parse(text)
    if needle:
        assert needle in str(info.value)
    if line is not None:
        assert info.value.line == line
    return info.value


def test_bad_header_and_mode():
    _expect("IDNET 2\n", FormatError, "IDNET 1", line=1)
    _expect("IDNET 1\nMODE fuzzy\n", FormatError, "MODE", line=2)


def test_unnormalized_row_names_variable_and_parent_assignment():
    text = MINIMAL.replace("0.2 0.8 0.6 0.4", "0.4 0.5 0.6 0.4")
    err = _expect(text, NormalizationError, "r2", line=7)
    assert "r1=0" in str(err)


def test_poss_rows_must_reach_one():
    text = ("IDNET 1\nMODE poss\nVAR x 2 CHANCE\nPROB x | : 0.9 0.8\n"
            "UTIL u x : 0.1 0.2\nORDER x\n")
    _expect(text, NormalizationError, "reach 1", line=4)


def test_poss_utilities_confined_to_unit_interval():
    text = ("IDNET 1\nMODE poss\nVAR x 2 CHANCE\nPROB x | : 1.0 0.8\n"
            "UTIL u x : 0.1 1.5\nORDER x\n")
    _expect(text, NormalizationError, "u", line=5)


def test_unknown_variable_and_utility_as_parent():
    _expect(MINIMAL.replace("PROB r2 | r1", "PROB r2 | zz"), FormatError, "zz", line=7)
    text = ("IDNET 1\nMODE prob\nVAR x 2 CHANCE\nUTIL w x : 0.0 0.0\n"
            "PROB x | w : 0.5 0.5\nORDER x\n")
    _expect(text, UtilityLeafError, "w", line=5)


def test_utility_shadowing_a_variable_is_rejected():
    text = MINIMAL.replace("UTIL u_dr1", "UTIL r1")
    _expect(text, UtilityLeafError, "r1")


def test_prob_line_for_decision_rejected():
    text = MINIMAL + "PROB d | : 0.5 0.5\n"
    _expect(text, FormatError, "ORDER line", line=10)


def test_duplicate_declarations_rejected():
    _expect(MINIMAL + "PROB r1 | : 0.5 0.5\n", FormatError, "duplicate")
    _expect(MINIMAL + "UTIL u_dr1 d : 0.0 0.0\n", FormatError, "duplicate")
    _expect(MINIMAL + "VAR r1 2 CHANCE\n", FormatError, "already declared")
    _expect(MINIMAL + "ORDER / d / r2 r1\n", FormatError, "duplicate ORDER")


def test_value_count_mismatch():
    _expect(MINIMAL.replace("0.3 0.7", "0.3 0.7 0.1"), FormatError,
            "expected 2 values, got 3", line=6)
    _expect(MINIMAL.replace("1.0 2.0 3.0 4.0", "1.0"), FormatError,
            "expected 4 values", line=8)


def test_order_grammar_and_partition_errors():
    _expect(MINIMAL.replace("ORDER / d / r2 r1", "ORDER / d / r2"), PartitionError,
            "omits", line=9)
    _expect(MINIMAL.replace("ORDER / d / r2 r1", "ORDER / d / r2 r1 r1"),
            PartitionError, "twice", line=9)
    _expect(MINIMAL.replace("ORDER / d / r2 r1", "ORDER / d r2 / r1"), FormatError,
            "exactly one decision", line=9)
    _expect(MINIMAL.replace("ORDER / d / r2 r1", "ORDER / d / r2 / r1"), FormatError,
            "odd number", line=9)
    _expect(MINIMAL.replace("ORDER / d / r2 r1", "ORDER d r2 r1"), PartitionError,
            "segment 1", line=9)
    _expect("IDNET 1\nMODE prob\nVAR x 2 CHANCE\nPROB x | : 0.5 0.5\n"
            "UTIL u x : 0.0 0.0\n", FormatError, "missing ORDER")


def test_cycle_detection():
    text = ("IDNET 1\nMODE prob\nVAR a 2 CHANCE\nVAR b 2 CHANCE\n"
            "PROB a | b : 0.5 0.5 0.5 0.5\nPROB b | a : 0.5 0.5 0.5 0.5\n"
            "UTIL u a : 0.0 1.0\nORDER a b\n")
    _expect(text, CycleError, "cycle")


def test_missing_cpt_detected():
    text = ("IDNET 1\nMODE prob\nVAR x 2 CHANCE\nUTIL u x : 0.0 1.0\nORDER x\n")
    _expect(text, ValidationError, "no table")


def test_no_forgetting_violation_on_programmatic_diagram():
    d = fixture("fig2")
    tampered = dataclasses.replace(d, parents=(d.parents[0], d.parents[1], (0,)))
    with pytest.raises(NoForgettingError):
        validate(tampered)


def test_empty_utilities_rejected_but_injected_by_parse():
    d = fixture("fig2")
    with pytest.raises(ValidationError):
        validate(dataclasses.replace(d, utilities=()))
    text = ("IDNET 1\nMODE prob\nVAR x 2 CHANCE\nPROB x | : 0.5 0.5\nORDER x\n")
    parsed = parse(text)
    assert len(parsed.utilities) == 1
    u = parsed.utilities[0]
    assert u.scope == () and u.values[0] == 0.0
    assert structurally_equal(parse(serialize(parsed)), parsed)
    poss = parse(text.replace("MODE prob", "MODE poss").replace("0.5 0.5", "1.0 0.5"))
    assert poss.utilities[0].values[0] == 1.0


def test_zero_variable_diagram_is_valid():
    d = parse("IDNET 1\nMODE prob\nORDER\n")
    assert d.variables == () and sov0(d) == []
    assert structurally_equal(parse(serialize(d)), d)


# -- fixtures ---------------------------------------------------------------

def test_fig2_fixture_shape():
    d = fixture("fig2")
    assert d.names == ("r1", "r2", "d")
    assert d.parents == ((), (0,), ())
    assert d.blocks == ((), (2,), (1, 0))
    assert {u.name: u.scope for u in d.utilities} == {
        "u_dr1": (2, 0), "u_dr2": (2, 1), "u_d": (2,)}
    assert d.sizes == (2, 2, 2)
    validate(d)


def test_fig3_fixture_shape():
    d = fixture("fig3")
    assert d.names == ("r1", "r2", "d1", "d2", "d3")
    assert d.parents[2] == ()
    assert d.parents[3] == (1, 2)
    assert d.parents[4] == (0, 1, 2, 3)
    assert d.blocks == ((), (2,), (1,), (3,), (0,), (4,), ())
    assert [u.scope for u in d.utilities] == [(0, 3), (3, 4), (1, 2, 4), (2,)]
    validate(d)


def test_chain_fixture_shape():
    n = 3
    d = fixture("chain", n)
    assert d.names == ("x1", "x2", "x3", "y", "x4")
    assert [v.kind for v in d.variables] == [DECISION] * 3 + [CHANCE, DECISION]
    assert d.parents[4] == (0, 1, 2, 3)
    assert len(d.utilities) == n + 1
    assert d.utilities[0].scope == (0, 3)
    assert [u.scope for u in d.utilities[1:]] == [(0, 4), (1, 4), (2, 4)]
    assert sov0(d) == [(Op.MAX, (0,)), (Op.MAX, (1,)), (Op.MAX, (2,)),
                       (Op.SUM, (3,)), (Op.MAX, (4,))]


def test_star_fixture_shape():
    n = 4
    d = fixture("star", n)
    assert d.names == ("x1", "x2", "x3", "x4", "y")
    assert [u.scope for u in d.utilities] == [(4, 0), (4, 1), (4, 2), (4, 3)]
    assert sov0(d)[-1] == (Op.SUM, (4,))
    assert fixture("star(4)", seed=0) is not None
    assert structurally_equal(fixture("star(4)"), d)


def test_fixture_errors_and_seeding():
    with pytest.raises(DiagramError):
        fixture("fig9")
    with pytest.raises(DiagramError):
        fixture("chain")
    with pytest.raises(DiagramError):
        fixture("star", 0)
    a, b = fixture("fig2", seed=1), fixture("fig2", seed=1)
    assert structurally_equal(a, b)
    assert not structurally_equal(a, fixture("fig2", seed=2))


# -- random generator --------------------------------------------------------

def test_generator_determinism_and_validity():
    a = random_id(10, 3, 3, 3, "prob", seed=42)
    b = random_id(10, 3, 3, 3, "prob", seed=42)
    assert structurally_equal(a, b)
    assert not structurally_equal(a, random_id(10, 3, 3, 3, "prob", seed=43))


def test_generator_samples_all_validate():
    for seed in range(200):
        mode = "poss" if seed % 2 else "prob"
        nvars = seed % 10 + 1
        d = random_id(nvars, min(nvars, seed % 4), 3, 3, mode, seed=seed)
        validate(d)
        assert structurally_equal(parse(serialize(d)), d)


def test_generated_joint_sums_to_one():
    for seed in range(30):
        d = random_id(8, 2, 3, 3, "prob", seed=seed)
        fixed = {x: 0 for x in d.decision_ids}
        tables = [restrict(t, {v: 0 for v in t.scope if v in fixed})
                  for t in d.cpts.values()]
        joint = combine_all(tables, Op.TIMES, 1.0)
        total = marginalize(joint, joint.scope, Op.SUM)
        assert abs(float(total.values[0]) - 1.0) < 1e-9


def test_generated_poss_rows_hit_one_exactly():
    for seed in range(20):
        d = random_id(7, 2, 3, 3, "poss", seed=seed)
        for x, t in d.cpts.items():
            rows = t.values.reshape(-1, d.size_of(x))
            assert np.all(rows.max(axis=1) == 1.0)


def test_single_chance_variable_generator_case():
    d = random_id(1, 0, 2, 0, "prob", seed=0)
    assert len(d.variables) == 1 and d.variables[0].kind == CHANCE
    assert abs(d.cpts[0].values.sum() - 1.0) < 1e-12


def test_infeasible_generator_params():
    with pytest.raises(InfeasibleParamsError):
        random_id(2, 3, 3, 3)
    with pytest.raises(InfeasibleParamsError):
        random_id(2, 1, 1, 3)
    with pytest.raises(InfeasibleParamsError):
        random_id(-1, 0, 3, 3)
    with pytest.raises(InfeasibleParamsError):
        random_id(2, 1, 3, -1)
    random_id(0, 0, 0, 0)  # degenerate but feasible


def test_decision_parents_grow_along_order():
    d = random_id(10, 3, 3, 3, "prob", seed=7)
    decs = d.temporal_decisions()
    prev: tuple[int, ...] = ()
    prev_d = None
    for dk in decs:
        assert set(prev) <= set(d.parents[dk])
        if prev_d is not None:
            assert prev_d in d.parents[dk]
        prev, prev_d = d.parents[dk], dk
