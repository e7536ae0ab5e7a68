import numpy as np
import pytest
from hypothesis import given, strategies as st

from vlab import chemistry
from vlab.chemistry import (BROWN_RING, INTERFERENCE, NO_REACTION, FormulaError,
                            Mixture, SensitivityConfig, check_balance,
                            compute_ring_band, default_registry, evaluate_reaction,
                            parse_equation, parse_formula, record_addition,
                            withdraw, SpeciesRegistry)

REG = default_registry()

REACTION = "2HNO3 + 3H2SO4 + 6FeSO4 ->> 3Fe2(SO4)3 + 2NO + 4H2O"
COMPLEXATION = "[Fe(H2O)6]SO4 + NO = [Fe(H2O)5(NO)]SO4 + H2O"


# -- formula parsing -------------------------------------------------------

def test_parse_simple_counts():
    assert parse_formula("H2O").elements == {"H": 2, "O": 1}
    assert parse_formula("FeSO4").elements == {"Fe": 1, "S": 1, "O": 4}


def test_parse_nested_groups():
    assert parse_formula("Fe2(SO4)3").elements == {"Fe": 2, "S": 3, "O": 12}
    assert parse_formula("[Fe(H2O)5(NO)]SO4").elements == \
        {"Fe": 1, "H": 10, "O": 10, "N": 1, "S": 1}


def test_parse_square_brackets_with_multiplier():
    assert parse_formula("[CuCl4]2").elements == {"Cu": 2, "Cl": 8}


@pytest.mark.parametrize("text,offset", [
    ("", 0),
    ("2HNO3", 0),          # coefficients belong to equations
    ("H(", 1),
    ("H)", 1),
    ("()O", 0),
    ("Xx", 0),
    ("H0O", 1),
    ("H O", 1),
])
def test_parse_errors_carry_offset(text, offset):
    with pytest.raises(FormulaError) as e:
        parse_formula(text)
    assert e.value.offset == offset


def test_serialize_is_sorted_and_stable():
    f = parse_formula("[Fe(H2O)5(NO)]SO4")
    assert f.serialize() == "FeH10NO10S"
    assert parse_formula(f.serialize()) == f


def test_formula_equality_ignores_spelling():
    assert parse_formula("OH2") == parse_formula("H2O")
    assert hash(parse_formula("OH2")) == hash(parse_formula("H2O"))


SYMS = ["H", "O", "Fe", "S", "N", "K", "Cu", "Cl"]


@st.composite
def formulas(draw, depth=2):
    n = draw(st.integers(1, 4))
    parts = []
    for _ in range(n):
        if depth > 0 and draw(st.booleans()):
            inner = draw(formulas(depth=depth - 1))
            mult = draw(st.integers(1, 5))
            wrap = draw(st.sampled_from(["()", "[]"]))
            parts.append(wrap[0] + inner + wrap[1] + (str(mult) if mult > 1 else ""))
        else:
            sym = draw(st.sampled_from(SYMS))
            cnt = draw(st.integers(1, 12))
            parts.append(sym + (str(cnt) if cnt > 1 else ""))
    return "".join(parts)


@given(formulas())
def test_serialize_reparse_round_trip(text):
    f = parse_formula(text)
    assert parse_formula(f.serialize()) == f


@given(st.text(max_size=40))
def test_parser_totality_on_arbitrary_text(text):
    try:
        parse_formula(text)
    except FormulaError as e:
        assert 0 <= e.offset <= len(text)


# -- equations -------------------------------------------------------------

@pytest.mark.parametrize("arrow", ["->", "-->", "->>", ">>", "="])
def test_equation_arrow_variants(arrow):
    lhs, rhs = parse_equation(f"2H2 + O2 {arrow} 2H2O")
    assert check_balance(lhs, rhs)


def test_equation_requires_arrow():
    with pytest.raises(FormulaError):
        parse_equation("H2 + O2 H2O")


def test_reaction_equation_balances():
    assert check_balance(*parse_equation(REACTION))


def test_complexation_equation_balances():
    assert check_balance(*parse_equation(COMPLEXATION))


def _perturbations(eq):
    """Every single-coefficient +-1 variant of an equation (coeff stays >= 1)."""
    lhs, rhs = parse_equation(eq)
    for side_i in (0, 1):
        side = (lhs, rhs)[side_i]
        for ti in range(len(side)):
            for delta in (1, -1):
                coeff, formula = side[ti]
                if coeff + delta < 1:
                    continue
                new_side = list(side)
                new_side[ti] = (coeff + delta, formula)
                yield (new_side, rhs) if side_i == 0 else (lhs, new_side)


def test_all_coefficient_perturbations_unbalance():
    for eq in (REACTION, COMPLEXATION):
        for lhs, rhs in _perturbations(eq):
            assert not check_balance(lhs, rhs)


def test_unbalanced_example():
    assert not check_balance(*parse_equation("H2 + O2 -> H2O"))


# -- species registry ------------------------------------------------------

def test_registry_rejects_duplicate_role():
    text = "a,H2O,water,#fff\nb,H2O,water,#eee\n"
    with pytest.raises(ValueError):
        SpeciesRegistry.from_text(text)


def test_registry_rejects_unknown_role():
    with pytest.raises(ValueError):
        SpeciesRegistry.from_text("a,H2O,solvent,#fff\n")


def test_default_registry_roles():
    assert REG["feso4"].role == "iron_sulfate"
    assert REG["nitrate"].aqueous and not REG["h2so4"].aqueous


# -- mixture ledger --------------------------------------------------------

def test_record_addition_accumulates_and_tracks_solvent():
    m = Mixture()
    record_addition(m, REG["water"], 2.0, "poured", 0)
    record_addition(m, REG["feso4"], 1.0, "poured", 1)
    record_addition(m, REG["h2so4"], 0.5, "dropper_side", 2)
    assert m.amounts == {"water": 2.0, "feso4": 1.0, "h2so4": 0.5}
    assert m.total_solvent == 3.0  # the acid is not counted as solvent


def test_record_addition_validates():
    m = Mixture()
    with pytest.raises(ValueError):
        record_addition(m, REG["water"], 0.0, "poured", 0)
    with pytest.raises(ValueError):
        record_addition(m, REG["water"], 1.0, "sprayed", 0)
    record_addition(m, REG["water"], 1.0, "poured", 5)
    with pytest.raises(ValueError):
        record_addition(m, REG["water"], 1.0, "poured", 4)  # clock went backwards


def test_withdraw_caps_at_available():
    m = Mixture()
    record_addition(m, REG["water"], 1.0, "poured", 0)
    assert withdraw(m, REG["water"], 5.0) == 1.0
    assert m.amounts["water"] == 0.0
    assert m.total_solvent == 0.0


# -- detection rule --------------------------------------------------------

def _mix(entries):
    m = Mixture()
    for tick, (sid, grams, method) in enumerate(entries):
        record_addition(m, REG[sid], grams, method, tick)
    return m


CANONICAL = [("feso4", 1.0, "poured"),
             ("nitrate", 0.5, "poured"),
             ("h2so4", 0.5, "dropper_side")]


def test_canonical_ledger_reacts():
    assert evaluate_reaction(_mix(CANONICAL), REG) == BROWN_RING


@pytest.mark.parametrize("order", [
    (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
])
def test_any_other_order_fails(order):
    entries = [CANONICAL[i] for i in order]
    assert evaluate_reaction(_mix(entries), REG) == NO_REACTION


def test_acid_from_the_top_fails():
    entries = CANONICAL[:2] + [("h2so4", 0.5, "dropper_top")]
    assert evaluate_reaction(_mix(entries), REG) == NO_REACTION


def test_acid_poured_fails():
    entries = CANONICAL[:2] + [("h2so4", 0.5, "poured")]
    assert evaluate_reaction(_mix(entries), REG) == NO_REACTION


def test_every_acid_entry_must_be_side():
    entries = CANONICAL + [("h2so4", 0.1, "dropper_top")]
    assert evaluate_reaction(_mix(entries), REG) == NO_REACTION


def test_nitrite_downgrades_to_interference():
    entries = CANONICAL[:2] + [("nitrite", 0.05, "poured"),
                               ("h2so4", 0.5, "dropper_side")]
    assert evaluate_reaction(_mix(entries), REG) == INTERFERENCE


def test_missing_reagent_is_no_reaction():
    assert evaluate_reaction(_mix(CANONICAL[:2]), REG) == NO_REACTION
    assert evaluate_reaction(Mixture(), REG) == NO_REACTION


def test_mass_threshold_is_inclusive():
    # exactly 2.5 micrograms of nitrate, fraction held comfortably high
    entries = [("feso4", 1e-4, "poured"),
               ("nitrate", 2.5e-6, "poured"),
               ("h2so4", 1e-4, "dropper_side")]
    assert evaluate_reaction(_mix(entries), REG) == BROWN_RING
    entries[1] = ("nitrate", 0.99 * 2.5e-6, "poured")
    assert evaluate_reaction(_mix(entries), REG) == NO_REACTION


def test_fraction_threshold_is_inclusive():
    # solvent sums to exactly 0.0625 g so nitrate/solvent == 1/25000 exactly
    m, f = 2.5e-6, 0.01
    entries = [("water", 0.0625 - f - m, "poured"),
               ("feso4", f, "poured"),
               ("nitrate", m, "poured"),
               ("h2so4", 0.5, "dropper_side")]
    mix = _mix(entries)
    assert mix.total_solvent == 0.0625
    assert evaluate_reaction(mix, REG) == BROWN_RING
    # 1% more solvent drops the fraction just below the threshold
    entries[0] = ("water", m * 25000.0 / 0.99 - f - m, "poured")
    assert evaluate_reaction(_mix(entries), REG) == NO_REACTION


def test_custom_sensitivity_config():
    cfg = SensitivityConfig(min_mass_g=1.0, min_mass_fraction=0.0)
    assert evaluate_reaction(_mix(CANONICAL), REG, cfg) == NO_REACTION


# -- ring band -------------------------------------------------------------

def _brute_ring(ids, heights, radial, inner_radius, prox):
    h = np.asarray(heights, float)
    lo = h.min() + 3 * (h.max() - h.min()) / 5
    hi = h.min() + 4 * (h.max() - h.min()) / 5
    return sorted(ids[i] for i in range(len(ids))
                  if lo <= h[i] < hi and radial[i] >= inner_radius[i] - prox)


def test_ring_band_against_brute_force():
    rng = np.random.default_rng(7)
    n = 400
    ids = list(range(n))
    heights = rng.uniform(0.003, 0.06, n)
    radial = rng.uniform(0.0, 0.014, n)
    inner = np.full(n, 0.014)
    band = compute_ring_band(ids, heights, radial, inner, 0.005)
    assert band is not None
    assert band.lo_norm == 0.6 and band.hi_norm == 0.8
    assert sorted(band.ids) == _brute_ring(ids, heights, radial, inner, 0.005)
    span = heights.max() - heights.min()
    assert band.z_lo == pytest.approx(heights.min() + 0.6 * span)
    assert band.z_hi == pytest.approx(heights.min() + 0.8 * span)


def test_ring_band_lower_bound_closed_upper_open():
    # five particles exactly at the band edges: 0.6 is in, 0.8 is out
    heights = [0.0, 1.0, 0.6, 0.8, 0.5]
    radial = [1.0] * 5
    inner = [1.0] * 5
    band = compute_ring_band([0, 1, 2, 3, 4], heights, radial, inner, 0.1)
    assert band.ids == [2]


def test_ring_band_needs_five_particles_and_height():
    assert compute_ring_band([1, 2, 3, 4], [0, 1, 2, 3], [0] * 4, [1] * 4, 0.1) is None
    assert compute_ring_band(list(range(6)), [0.5] * 6, [1] * 6, [1] * 6, 0.1) is None


def test_ring_band_requires_wall_proximity():
    heights = np.linspace(0, 1, 20)
    radial = np.zeros(20)  # all on the axis, nowhere near the wall
    band = compute_ring_band(list(range(20)), heights, radial, np.ones(20), 0.05)
    assert band is not None and band.ids == []
