"""Formula parsing, equation balance checks and the nitrate detection rule.

The detection verdict is rule-triggered, not kinetic: it looks at the order
of additions in a vessel's ledger, how the acid went in, and the nitrate
amount against the sensitivity thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ELEMENTS = frozenset(
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu".split()
)

ROLES = ("iron_sulfate", "nitrate", "sulfuric_acid", "nitrite", "water", "product", "other")
AQUEOUS_ROLES = frozenset({"iron_sulfate", "nitrate", "nitrite", "water"})

BROWN_RING = "brown_ring"
NO_REACTION = "no_reaction"
INTERFERENCE = "interference"


class FormulaError(ValueError):
    """Formula syntax error; `offset` is the byte offset into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Formula:
    source: str
    elements: dict  # element symbol -> count (all >= 1)

    def serialize(self) -> str:
        return "".join(
            sym + (str(n) if n > 1 else "")
            for sym, n in sorted(self.elements.items())
        )

    def __eq__(self, other):
        return isinstance(other, Formula) and self.elements == other.elements

    def __hash__(self):
        return hash(frozenset(self.elements.items()))


def parse_formula(text: str) -> Formula:
    """Parse a chemical formula into its element multiset.

    Supports nested () and [] groups with trailing multipliers, e.g.
    "[Fe(H2O)5(NO)]SO4". Stoichiometric coefficients belong to equations,
    not formulas, so a leading integer is rejected here.
    """
    if not isinstance(text, str):
        raise FormulaError("formula must be a string", 0)
    s = text
    i = 0
    n = len(s)
    if n == 0:
        raise FormulaError("empty formula", 0)

    def parse_int(i):
        j = i
        while j < n and s[j].isdigit():
            j += 1
        if j == i:
            return None, i
        v = int(s[i:j])
        if v == 0:
            raise FormulaError("zero count", i)
        return v, j

    def parse_body(i, closer):
        counts: dict = {}
        any_item = False
        while i < n:
            c = s[i]
            if closer and c == closer:
                return counts, i, any_item
            if c in ")]":
                raise FormulaError(f"unbalanced {c!r}", i)
            if c in "([":
                want = ")" if c == "(" else "]"
                inner, j, had = parse_body(i + 1, want)
                if j >= n or s[j] != want:
                    raise FormulaError(f"unbalanced {c!r}", i)
                if not had:
                    raise FormulaError("empty group", i)
                mult, j = parse_int(j + 1)
                mult = mult or 1
                for sym, k in inner.items():
                    counts[sym] = counts.get(sym, 0) + k * mult
                i = j
                any_item = True
            elif c.isupper():
                sym = c
                if i + 1 < n and s[i + 1].islower():
                    sym += s[i + 1]
                if sym not in ELEMENTS:
                    raise FormulaError(f"unknown element symbol {sym!r}", i)
                cnt, j = parse_int(i + len(sym))
                counts[sym] = counts.get(sym, 0) + (cnt or 1)
                i = j
                any_item = True
            elif c.isdigit():
                raise FormulaError("unexpected digit (coefficients only allowed in equations)", i)
            else:
                raise FormulaError(f"unexpected character {c!r}", i)
        return counts, i, any_item

    counts, i, any_item = parse_body(0, None)
    if not any_item:
        raise FormulaError("empty formula", 0)
    return Formula(text, counts)


def _tally(terms) -> dict:
    total: dict = {}
    for coeff, formula in terms:
        if coeff < 1:
            raise ValueError("coefficients must be >= 1")
        for sym, k in formula.elements.items():
            total[sym] = total.get(sym, 0) + coeff * k
    return total


def check_balance(lhs, rhs) -> bool:
    """True iff element tallies match; terms are (coeff, Formula) pairs."""
    return _tally(lhs) == _tally(rhs)


def parse_equation(text: str):
    """Parse "2HNO3 + 3H2SO4 -> ..." into (lhs, rhs) term lists.

    Accepts "->", "-->", ">>" or "=" as the arrow.
    """
    for arrow in ("-->>", "->>", "-->", "->", ">>", "="):
        if arrow in text:
            left, right = text.split(arrow, 1)
            break
    else:
        raise FormulaError("equation needs an arrow (->, = )", len(text))

    def parse_side(side, base):
        terms = []
        for chunk in side.split("+"):
            off = base + text.index(chunk, base) - base  # best-effort offset
            t = chunk.strip()
            if not t:
                raise FormulaError("empty equation term", off)
            j = 0
            while j < len(t) and t[j].isdigit():
                j += 1
            coeff = int(t[:j]) if j else 1
            if coeff < 1:
                raise FormulaError("zero coefficient", off)
            terms.append((coeff, parse_formula(t[j:])))
        return terms

    return parse_side(left, 0), parse_side(right, text.index(right))


@dataclass(frozen=True)
class Species:
    id: str
    formula: Formula
    role: str
    color: str

    @property
    def aqueous(self) -> bool:
        return self.role in AQUEOUS_ROLES


class SpeciesRegistry:
    """Species table, loadable from line-oriented `id,formula,role,color-hex`."""

    def __init__(self, species):
        self._by_id = {}
        roles_seen = set()
        for sp in species:
            if sp.role not in ROLES:
                raise ValueError(f"unknown role {sp.role!r} for species {sp.id}")
            if sp.id in self._by_id:
                raise ValueError(f"duplicate species id {sp.id!r}")
            if sp.role != "other":
                if sp.role in roles_seen:
                    raise ValueError(f"role {sp.role!r} declared twice")
                roles_seen.add(sp.role)
            self._by_id[sp.id] = sp

    @classmethod
    def from_text(cls, text: str) -> "SpeciesRegistry":
        species = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected id,formula,role,color-hex")
            sid, formula, role, color = parts
            species.append(Species(sid, parse_formula(formula), role, color))
        return cls(species)

    @classmethod
    def from_file(cls, path) -> "SpeciesRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def __getitem__(self, sid: str) -> Species:
        try:
            return self._by_id[sid]
        except KeyError:
            raise KeyError(f"unknown species {sid!r}") from None

    def __contains__(self, sid: str) -> bool:
        return sid in self._by_id

    def ids(self):
        return list(self._by_id)

    def by_role(self, role: str) -> Optional[Species]:
        for sp in self._by_id.values():
            if sp.role == role:
                return sp
        return None


DEFAULT_SPECIES_TEXT = """\
# id,formula,role,color-hex
feso4,FeSO4,iron_sulfate,#8fd4b8
nitrate,KNO3,nitrate,#dce9f5
h2so4,H2SO4,sulfuric_acid,#efe6c4
nitrite,KNO2,nitrite,#c9a9e8
water,H2O,water,#def2fa
brown_complex,[Fe(H2O)5(NO)]SO4,product,#6b3a1e
"""


def default_registry() -> SpeciesRegistry:
    return SpeciesRegistry.from_text(DEFAULT_SPECIES_TEXT)


POURED = "poured"
DROPPER_SIDE = "dropper_side"
DROPPER_TOP = "dropper_top"
METHODS = (POURED, DROPPER_SIDE, DROPPER_TOP)


@dataclass(frozen=True)
class Addition:
    tick: int
    species: str
    amount_g: float
    method: str


@dataclass
class Mixture:
    amounts: dict = field(default_factory=dict)  # species id -> grams
    total_solvent: float = 0.0
    addition_log: list = field(default_factory=list)

    def copy(self) -> "Mixture":
        return Mixture(dict(self.amounts), self.total_solvent, list(self.addition_log))


def record_addition(mixture: Mixture, species: Species, amount_g: float,
                    method: str, tick: int) -> None:
    if amount_g <= 0:
        raise ValueError("addition amount must be positive")
    if method not in METHODS:
        raise ValueError(f"unknown addition method {method!r}")
    if mixture.addition_log and tick < mixture.addition_log[-1].tick:
        raise ValueError("addition ticks must be non-decreasing")
    mixture.amounts[species.id] = mixture.amounts.get(species.id, 0.0) + amount_g
    if species.aqueous:
        mixture.total_solvent += amount_g
    mixture.addition_log.append(Addition(tick, species.id, amount_g, method))


def withdraw(mixture: Mixture, species: Species, amount_g: float) -> float:
    """Remove up to amount_g of a species (used when proxies leave a vessel)."""
    have = mixture.amounts.get(species.id, 0.0)
    take = min(have, amount_g)
    mixture.amounts[species.id] = have - take
    if species.aqueous:
        mixture.total_solvent = max(0.0, mixture.total_solvent - take)
    return take


@dataclass
class SensitivityConfig:
    min_mass_g: float = 2.5e-6
    min_mass_fraction: float = 1.0 / 25000.0


def evaluate_reaction(mixture: Mixture, registry: SpeciesRegistry,
                      cfg: SensitivityConfig = SensitivityConfig()) -> str:
    """Detection verdict for one vessel's ledger.

    brown_ring requires, conjunctively: iron sulfate first seen before the
    nitrate, nitrate before the acid; every acid addition through the side
    of the vessel; nitrate mass and mass fraction at or above the
    sensitivity thresholds; and no nitrite. Nitrite with everything else
    satisfied downgrades to interference.
    """
    first_tick = {}
    acid_methods = []
    for entry in mixture.addition_log:
        role = registry[entry.species].role
        if role not in first_tick:
            first_tick[role] = entry.tick
        if role == "sulfuric_acid":
            acid_methods.append(entry.method)

    def role_mass(role):
        return sum(amt for sid, amt in mixture.amounts.items()
                   if registry[sid].role == role)

    ordered = (
        "iron_sulfate" in first_tick and "nitrate" in first_tick
        and "sulfuric_acid" in first_tick
        and first_tick["iron_sulfate"] < first_tick["nitrate"] < first_tick["sulfuric_acid"]
    )
    side_entry = bool(acid_methods) and all(m == DROPPER_SIDE for m in acid_methods)
    nitrate_mass = role_mass("nitrate")
    mass_ok = nitrate_mass >= cfg.min_mass_g
    fraction_ok = (mixture.total_solvent > 0
                   and nitrate_mass / mixture.total_solvent >= cfg.min_mass_fraction)
    nitrite_free = role_mass("nitrite") <= 0.0

    if ordered and side_entry and mass_ok and fraction_ok:
        return BROWN_RING if nitrite_free else INTERFERENCE
    return NO_REACTION


@dataclass
class RingBand:
    z_lo: float      # absolute height along the vessel axis
    z_hi: float
    lo_norm: float   # position within the occupied column, [0, 1)
    hi_norm: float
    ids: list


@dataclass
class ReactionOutcome:
    verdict: str = NO_REACTION
    ring_band: Optional[RingBand] = None
    ring_ids: list = field(default_factory=list)


def compute_ring_band(ids, heights, radial, inner_radius, wall_proximity):
    """Pick the ring layer: 4th of 5 equal height slices, near the wall.

    `heights` are positions along the vessel axis, `radial` the distances
    from the axis, `inner_radius` the cavity radius at each particle's
    height. Returns a RingBand or None when fewer than 5 particles or the
    occupied column has zero height.
    """
    ids = list(ids)
    if len(ids) < 5:
        return None
    h = np.asarray(heights, dtype=float)
    rho = np.asarray(radial, dtype=float)
    rin = np.asarray(inner_radius, dtype=float)
    h_min = float(h.min())
    h_max = float(h.max())
    height = h_max - h_min
    if height <= 0.0:
        return None
    z_lo = h_min + 3.0 * height / 5.0
    z_hi = h_min + 4.0 * height / 5.0
    in_band = (h >= z_lo) & (h < z_hi)
    near_wall = rho >= rin - wall_proximity
    sel = in_band & near_wall
    ring = [ids[i] for i in np.nonzero(sel)[0]]
    return RingBand(z_lo, z_hi, 0.6, 0.8, ring)
