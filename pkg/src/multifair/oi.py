"""Distinguishers, distinguisher families, advantages, and OI audits.

A distinguisher maps (individual, outcome, predictor) to [0, 1]; its
advantage against a predictor is

    Delta_A = E[A(i, modeled outcome, p)] - E[A(i, true outcome, p)],

kept signed internally.  A predictor is outcome-indistinguishable against
a family with slack eps when every member's |Delta_A| is at most eps.

Four generated family kinds are supported, all sample-access (they read
the predictor only at the individual under consideration):

  basic      single cells 1[(c_j, o, rounded p_j) = a]
  mc         events       1[(c_j, o, rounded p_j) in E]
  smc        per-level hypothesis choice plus an event
  lowdegree  c(j) * (monomial of degree < k in p_j) * 1[o = o0]

The mc and smc families have astronomically many members (every event E
is one member) but their audits never enumerate: for a fixed hypothesis
the best event is the set of cells where the modeled mass exceeds the
true mass, so the maximal advantage is exactly the corresponding
statistical distance.  The literal exhaustive-E maximization is kept as
an oracle for small cell counts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .core import OutcomeDist, SimplexGrid, exactify
from .errors import ConstructionError, EnumerationLimitError
from .audits import AuditReport
from .population import HypothesisClass, PopulationInstance, Predictor

EXPLICIT_AUDIT_LIMIT = 10**6
MC_ORACLE_CELL_LIMIT = 12


@dataclass
class Distinguisher:
    name: str
    fn: object  # callable (j, outcome label, Predictor) -> value in [0, 1]
    access_level: str = "sample-access"
    payload: dict = field(default_factory=dict)

    def evaluate(self, j, o, predictor):
        return self.fn(j, o, predictor)


def negate(d: Distinguisher) -> Distinguisher:
    return Distinguisher(
        name=f"not:{d.name}",
        fn=lambda j, o, p, _f=d.fn: 1 - _f(j, o, p),
        access_level=d.access_level,
        payload={"negated": True, **d.payload},
    )


def monomial_multisets(ell: int, degree_bound: int):
    """Index multisets of every monomial of degree strictly below the bound."""
    out = [()]
    for deg in range(1, degree_bound):
        out.extend(itertools.combinations_with_replacement(range(ell), deg))
    return out


def monomial_value(indices, dist: OutcomeDist):
    v = Fraction(1) if dist.is_exact else 1.0
    for i in indices:
        v = v * dist.weights[i]
    return v


@dataclass
class DistinguisherFamily:
    kind: str  # explicit | basic | mc | smc | lowdegree
    hypotheses: HypothesisClass | None = None
    grid: SimplexGrid | None = None
    degree: int | None = None
    explicit_members: tuple | None = None
    negation_closed: bool = False

    def member_count(self):
        if self.kind == "explicit":
            return len(self.explicit_members)
        nc = len(self.hypotheses)
        ny = len(self.hypotheses.range_values)
        if self.kind == "lowdegree":
            ell = self.degree_space_size
            return nc * ell * len(monomial_multisets(ell, self.degree))
        ell = self.grid.space.size
        ng = self.grid.size
        if self.kind == "basic":
            return nc * ny * ell * ng
        if self.kind == "mc":
            return nc * (2 ** (ny * ell * ng))
        if self.kind == "smc":
            return (nc ** ng) * (2 ** (ny * ell * ng))
        raise ConstructionError(f"unknown family kind {self.kind!r}")

    @property
    def degree_space_size(self):
        # lowdegree families carry no grid; the outcome count comes from use
        # sites, recorded at construction time in self.grid-free mode.
        return self._ell

    def members(self):
        """Materialize the member list; refused for the implicit mc/smc kinds."""
        if self.kind == "explicit":
            return list(self.explicit_members)
        if self.kind == "basic":
            return list(_basic_members(self.hypotheses, self.grid))
        if self.kind == "lowdegree":
            return list(_lowdegree_members(self.hypotheses, self._ell, self._labels, self.degree))
        raise EnumerationLimitError(
            f"{self.kind} family has {self.member_count()} members; not materializable"
        )


def make_family(kind, hypotheses=None, grid=None, degree=None, members=None,
                outcome_space=None) -> DistinguisherFamily:
    """Build a distinguisher family; validates parameter consistency."""
    if kind == "explicit":
        if not members:
            raise ConstructionError("explicit family needs a member list")
        return DistinguisherFamily(kind="explicit", explicit_members=tuple(members))
    if hypotheses is None:
        raise ConstructionError(f"{kind} family needs a hypothesis class")
    if kind in ("basic", "mc", "smc"):
        if grid is None:
            raise ConstructionError(f"{kind} family needs a simplex grid")
        fam = DistinguisherFamily(
            kind=kind, hypotheses=hypotheses, grid=grid,
            negation_closed=(kind in ("mc", "smc")),
        )
        return fam
    if kind == "lowdegree":
        if degree is None or degree < 1:
            raise ConstructionError("lowdegree family needs degree k >= 1")
        if outcome_space is None:
            raise ConstructionError("lowdegree family needs the outcome space")
        fam = DistinguisherFamily(kind="lowdegree", hypotheses=hypotheses, degree=degree)
        fam._ell = outcome_space.size
        fam._labels = outcome_space.labels
        return fam
    raise ConstructionError(f"unknown family kind {kind!r}")


def _basic_members(cls: HypothesisClass, grid: SimplexGrid):
    ell_labels = grid.space.labels
    for h in cls:
        for y in cls.range_values:
            for o in ell_labels:
                for g in grid.iter_points():
                    def fn(j, oo, pred, _h=h, _y=y, _o=o, _g=g, _grid=grid):
                        return 1 if (_h.values[j] == _y and oo == _o
                                     and _grid.round_dist(pred.values[j].as_exact()) == _g) else 0
                    yield Distinguisher(
                        name=f"cell[{h.name},{y},{o}]",
                        fn=fn,
                        payload={"hypothesis": h.name, "event_cells": [(y, o, tuple(g.weights))]},
                    )


def _lowdegree_members(cls: HypothesisClass, ell, labels, degree):
    for h in cls:
        for o0 in labels:
            for mono in monomial_multisets(ell, degree):
                def fn(j, oo, pred, _h=h, _o0=o0, _m=mono):
                    if oo != _o0:
                        return 0
                    return _h.values[j] * monomial_value(_m, pred.values[j])
                yield Distinguisher(
                    name=f"mono[{h.name},{o0},{mono}]",
                    fn=fn,
                    payload={"hypothesis": h.name, "monomial_indices": list(mono),
                             "outcome": o0},
                )


def mc_event_distinguisher(h, event, grid: SimplexGrid, name=None) -> Distinguisher:
    """1[(c_j, o, rounded p_j) in E] for an event over (y, outcome, grid point)."""
    ev = frozenset(event)
    def fn(j, o, pred, _h=h, _ev=ev, _grid=grid):
        g = _grid.round_dist(pred.values[j].as_exact())
        return 1 if (_h.values[j], o, tuple(g.weights)) in _ev else 0
    return Distinguisher(
        name=name or f"event[{h.name},|E|={len(ev)}]",
        fn=fn,
        payload={"hypothesis": h.name,
                 "event_cells": sorted((y, o, w) for (y, o, w) in ev)},
    )


def smc_event_distinguisher(assignment, event, grid: SimplexGrid, name=None) -> Distinguisher:
    """Per-level hypothesis assignment with a shared event."""
    ev = frozenset(event)
    amap = dict(assignment)  # grid-point weight tuple -> Hypothesis
    def fn(j, o, pred, _a=amap, _ev=ev, _grid=grid):
        g = tuple(_grid.round_dist(pred.values[j].as_exact()).weights)
        h = _a.get(g)
        if h is None:
            return 0
        return 1 if (h.values[j], o, g) in _ev else 0
    return Distinguisher(
        name=name or "level-assigned-event",
        fn=fn,
        payload={"assignment": {str(k): h.name for k, h in amap.items()},
                 "event_cells": sorted((y, o, w) for (y, o, w) in ev)},
    )


# ---------------------------------------------------------------------------
# Advantage and audits
# ---------------------------------------------------------------------------


def oi_advantage(pop: PopulationInstance, predictor: Predictor, d: Distinguisher,
                 exact: bool = True):
    """Signed advantage Delta_A, an exact expectation difference over the joint."""
    predictor.check_total(pop)
    pred = predictor.as_exact() if exact else predictor
    total = Fraction(0) if exact else 0.0
    for j in pop.ids:
        w = exactify(pop.weight[j]) if exact else float(pop.weight[j])
        if w == 0:
            continue
        pt = pred.values[j].weights
        ps = pop.p_true[j].weights
        for o_idx, o in enumerate(pop.space.labels):
            coef = pt[o_idx] - ps[o_idx]
            if coef == 0:
                continue
            a = d.evaluate(j, o, pred)
            if a != 0:
                v = w * (exactify(coef) * exactify(a) if exact else float(coef) * float(a))
                total += v
    return total


class _CellTables:
    """Signed (modeled - true) masses per hypothesis over (y, o, level) cells.

    Levels group individuals by the grid-rounded prediction; the modeled
    mass still comes from the raw predictor, which is what the family
    definitions prescribe.
    """

    def __init__(self, pop, predictor, cls, grid, exact=True):
        predictor.check_total(pop)
        self.pop = pop
        self.cls = cls
        self.grid = grid
        self.exact = exact
        pred = predictor.as_exact() if exact else predictor
        rounded = {}
        for j in pop.ids:
            d = pred.values[j]
            if d not in rounded:
                rounded[d] = grid.round_dist(d)
        self.rounded = {j: rounded[pred.values[j]] for j in pop.ids}
        levels = sorted({tuple(g.weights) for g in self.rounded.values()})
        self.levels = levels
        self.level_index = {t: i for i, t in enumerate(levels)}
        ell = pop.space.size
        conv = exactify if exact else float
        self.diff = {}  # hypothesis name -> {(y_idx, o_idx, level_idx): signed mass}
        self.level_mass = [Fraction(0) if exact else 0.0] * len(levels)
        ys = list(cls.range_values)
        self.y_values = ys
        y_of = {y: i for i, y in enumerate(ys)}
        lm = list(self.level_mass)
        for h in cls:
            table = {}
            for j in pop.ids:
                w = conv(pop.weight[j])
                if w == 0:
                    continue
                li = self.level_index[tuple(self.rounded[j].weights)]
                yi = y_of[h.values[j]]
                pt = pred.values[j].weights
                ps = pop.p_true[j].weights
                for o_idx in range(ell):
                    dmass = w * (conv(pt[o_idx]) - conv(ps[o_idx]))
                    if dmass != 0:
                        key = (yi, o_idx, li)
                        table[key] = table.get(key, 0) + dmass
            self.diff[h.name] = table
        for j in pop.ids:
            li = self.level_index[tuple(self.rounded[j].weights)]
            lm[li] = lm[li] + conv(pop.weight[j])
        self.level_mass = lm

    def positive_event(self, name, level_idx=None):
        """Cells with strictly positive signed mass; the optimal event."""
        cells = []
        for (yi, oi, li), v in self.diff[name].items():
            if level_idx is not None and li != level_idx:
                continue
            if v > 0:
                cells.append((self.y_values[yi], self.pop.space.labels[oi], self.levels[li]))
        return cells

    def mc_value(self, name):
        return sum(v for v in self.diff[name].values() if v > 0)

    def smc_per_level(self, name):
        per = {}
        for (yi, oi, li), v in self.diff[name].items():
            if v > 0:
                per[li] = per.get(li, 0) + v
        return per

    def basic_best(self, name):
        best = None
        for key, v in self.diff[name].items():
            if best is None or abs(v) > abs(best[1]):
                best = (key, v)
        return best


def audit_oi(pop, predictor, family: DistinguisherFamily, backend="rational") -> AuditReport:
    """max_A |Delta_A| over the family, via closed forms for mc/smc/basic."""
    exact = backend == "rational"
    if family.kind == "explicit":
        if len(family.explicit_members) > EXPLICIT_AUDIT_LIMIT:
            raise EnumerationLimitError("explicit family too large to audit")
        breakdown = {d.name: abs(oi_advantage(pop, predictor, d, exact=exact))
                     for d in family.explicit_members}
        witness = max(breakdown, key=lambda k: breakdown[k])
        return AuditReport("oi-explicit", breakdown[witness], witness, breakdown)

    if family.kind == "lowdegree":
        return _audit_lowdegree(pop, predictor, family, exact)

    tables = _CellTables(pop, predictor, family.hypotheses, family.grid, exact=exact)
    if family.kind == "mc":
        breakdown = {h.name: tables.mc_value(h.name) for h in family.hypotheses}
        witness = max(breakdown, key=lambda k: breakdown[k])
        return AuditReport("oi-mc", breakdown[witness], witness, breakdown)
    if family.kind == "smc":
        total = 0
        per_level_best = {}
        for li in range(len(tables.levels)):
            best = max(
                ((h.name, tables.smc_per_level(h.name).get(li, 0)) for h in family.hypotheses),
                key=lambda t: t[1],
            )
            per_level_best[tables.levels[li]] = best
            total += best[1]
        return AuditReport("oi-smc", total if total else (Fraction(0) if exact else 0.0),
                           per_level_best, per_level_best)
    if family.kind == "basic":
        breakdown = {}
        for h in family.hypotheses:
            best = tables.basic_best(h.name)
            breakdown[h.name] = abs(best[1]) if best else (Fraction(0) if exact else 0.0)
        witness = max(breakdown, key=lambda k: breakdown[k])
        return AuditReport("oi-basic", breakdown[witness], witness, breakdown)
    raise ConstructionError(f"unknown family kind {family.kind!r}")


def _audit_lowdegree(pop, predictor, family, exact):
    pred = predictor.as_exact() if exact else predictor
    conv = exactify if exact else float
    cls = family.hypotheses
    ell = family._ell
    labels = family._labels
    monos = monomial_multisets(ell, family.degree)
    breakdown = {}
    witness = None
    best_abs = None
    for h in cls:
        h_best = None
        for o_idx, o0 in enumerate(labels):
            for mono in monos:
                total = Fraction(0) if exact else 0.0
                for j in pop.ids:
                    w = conv(pop.weight[j])
                    if w == 0:
                        continue
                    cj = conv(h.values[j])
                    if cj == 0:
                        continue
                    pd = pred.values[j]
                    coef = conv(pd.weights[o_idx]) - conv(pop.p_true[j].weights[o_idx])
                    if coef == 0:
                        continue
                    total += w * cj * conv(monomial_value(mono, pd)) * coef
                if h_best is None or abs(total) > abs(h_best[0]):
                    h_best = (total, o0, mono)
        breakdown[h.name] = abs(h_best[0])
        if best_abs is None or breakdown[h.name] > best_abs:
            best_abs = breakdown[h.name]
            witness = {"hypothesis": h.name, "outcome": h_best[1],
                       "monomial_indices": list(h_best[2])}
    return AuditReport("oi-lowdegree", best_abs, witness, breakdown)


def best_response(pop, predictor, family: DistinguisherFamily, backend="rational"):
    """A member attaining the audit value, returned with positive advantage.

    When the maximizer's signed advantage is negative the pointwise
    complement 1 - A is returned instead (the structural negation inside
    mc/smc, a wrapper otherwise), so the result is always directly usable
    as a loss table.
    """
    exact = backend == "rational"
    if family.kind == "explicit":
        best = None
        for d in family.explicit_members:
            adv = oi_advantage(pop, predictor, d, exact=exact)
            if best is None or abs(adv) > abs(best[1]):
                best = (d, adv)
        d, adv = best
        if adv < 0:
            return negate(d), -adv
        return d, adv

    if family.kind == "lowdegree":
        report = _audit_lowdegree(pop, predictor, family, exact)
        w = report.witness
        h = next(h for h in family.hypotheses if h.name == w["hypothesis"])
        mono = tuple(w["monomial_indices"])
        o0 = w["outcome"]
        def fn(j, oo, pred, _h=h, _o0=o0, _m=mono):
            if oo != _o0:
                return 0
            return _h.values[j] * monomial_value(_m, pred.values[j])
        d = Distinguisher(f"mono[{h.name},{o0},{mono}]", fn,
                          payload={"hypothesis": h.name, "monomial_indices": list(mono),
                                   "outcome": o0})
        adv = oi_advantage(pop, predictor, d, exact=exact)
        if adv < 0:
            return negate(d), -adv
        return d, adv

    tables = _CellTables(pop, predictor, family.hypotheses, family.grid, exact=exact)
    by_name = {h.name: h for h in family.hypotheses}
    if family.kind == "mc":
        name = max(by_name, key=lambda n: tables.mc_value(n))
        cells = [(y, o, g) for (y, o, g) in tables.positive_event(name)]
        d = mc_event_distinguisher(by_name[name], cells, family.grid)
        return d, tables.mc_value(name)
    if family.kind == "smc":
        assignment = []
        cells = []
        total = 0
        for li, level in enumerate(tables.levels):
            name = max(by_name, key=lambda n: tables.smc_per_level(n).get(li, 0))
            val = tables.smc_per_level(name).get(li, 0)
            total += val
            assignment.append((level, by_name[name]))
            cells.extend(tables.positive_event(name, level_idx=li))
        d = smc_event_distinguisher(assignment, cells, family.grid)
        return d, total if total else (Fraction(0) if exact else 0.0)
    if family.kind == "basic":
        best = None
        for h in family.hypotheses:
            cand = tables.basic_best(h.name)
            if cand and (best is None or abs(cand[1]) > abs(best[2])):
                best = (h, cand[0], cand[1])
        h, (yi, oi, li), val = best
        y = tables.y_values[yi]
        o = pop.space.labels[oi]
        g = tables.levels[li]
        cells = [(y, o, g)]
        d = mc_event_distinguisher(h, cells, family.grid, name=f"cell[{h.name},{y},{o}]")
        if val < 0:
            return negate(d), -val
        return d, val
    raise ConstructionError(f"unknown family kind {family.kind!r}")


def audit_oi_mc_bruteforce(pop, predictor, cls, grid, backend="rational"):
    """Literal max over all events E of |Delta| for the mc family; oracle only.

    Enumerates 2^(|Y| * outcomes * |grid|) events, so the cell count is
    capped at 12.
    """
    exact = backend == "rational"
    tables = _CellTables(pop, predictor, cls, grid, exact=exact)
    ell = pop.space.size
    ny = len(tables.y_values)
    ng = grid.size
    n_cells = ny * ell * ng
    if n_cells > MC_ORACLE_CELL_LIMIT:
        raise EnumerationLimitError(f"{n_cells} cells exceed the oracle cap")
    # cells over the full (y, o, grid) lattice, not just occupied levels
    level_of = {t: i for i, t in enumerate(tables.levels)}
    best = 0
    for h in cls:
        diffs = []
        for yi in range(ny):
            for oi in range(ell):
                for g in grid.iter_points():
                    li = level_of.get(tuple(g.weights))
                    diffs.append(tables.diff[h.name].get((yi, oi, li), 0)
                                 if li is not None else 0)
        acc = 0
        prev = 0
        for gcode in range(1, 1 << n_cells):
            gray = gcode ^ (gcode >> 1)
            changed = gray ^ prev
            idx = changed.bit_length() - 1
            if gray & changed:
                acc += diffs[idx]
            else:
                acc -= diffs[idx]
            prev = gray
            if abs(acc) > best:
                best = abs(acc)
    return best
