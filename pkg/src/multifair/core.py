"""Outcome spaces, distributions, statistical distance, and simplex grids.

Everything here is exact by default: weights are `fractions.Fraction` (or
ints), sums are checked for equality rather than closeness, and the two
statistical-distance computations (half-L1 and max-over-events) agree as
integers, not merely to a tolerance.  A float backend is tolerated for
values produced by the multiplicative-weights constructors; validation
then falls back to a 1e-12 absolute tolerance.

Statistical distance between finite distributions p and q is

    delta(p, q) = max_A |p(A) - q(A)| = (1/2) * sum_a |p(a) - q(a)|,

the maximum running over all event subsets A of the common support.  Both
forms are implemented; the subset-enumeration form is kept deliberately
independent so it can serve as an oracle for the half-L1 form.

A coordinate grid with denominator m is the set of points of the outcome
simplex whose coordinates are multiples of 1/m.  It covers the simplex to
statistical distance (l-1)/m, contains C(m+l-1, l-1) points, and nearest-
point rounding onto it is largest-remainder apportionment, so predictors
can be discretized without materializing the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import (
    DomainError,
    EnumerationLimitError,
    ConditioningMismatchError,
    PrecisionTooCoarseError,
    SupportMismatchError,
)

SUBSET_ORACLE_LIMIT = 22
FLOAT_SUM_TOL = 1e-12
FLOAT_GROUP_TOL = 1e-9

BINARY_LABELS = ("0", "1")


def is_exact_number(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def exactify(x) -> Fraction:
    """Convert to Fraction without rounding: floats map to their exact binary value."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    raise DomainError(f"cannot interpret {x!r} as a number")


@dataclass(frozen=True)
class OutcomeSpace:
    """Finite ordered set of outcome labels; the order breaks all ties."""

    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise DomainError("an outcome space needs at least 2 outcomes")
        if len(set(self.labels)) != len(self.labels):
            raise DomainError("outcome labels must be distinct")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DomainError(f"unknown outcome label {label!r}") from None

    @property
    def is_binary(self) -> bool:
        return self.labels == BINARY_LABELS or set(self.labels) == {"0", "1"}


def binary_space() -> OutcomeSpace:
    return OutcomeSpace(BINARY_LABELS)


@dataclass(frozen=True)
class OutcomeDist:
    """A point of the outcome simplex: one weight per label, summing to 1."""

    space: OutcomeSpace
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(self.weights))
        if len(self.weights) != self.space.size:
            raise DomainError("weight count does not match the outcome space")
        exact = all(is_exact_number(w) for w in self.weights)
        total = sum(self.weights)
        for w in self.weights:
            if w < 0:
                raise DomainError(f"negative outcome weight {w}")
        if exact:
            if total != 1:
                raise DomainError(f"outcome weights sum to {total}, expected exactly 1")
        elif abs(total - 1) > FLOAT_SUM_TOL:
            raise DomainError(f"outcome weights sum to {total}, expected 1 within 1e-12")

    @classmethod
    def from_mapping(cls, space: OutcomeSpace, mapping: Mapping) -> "OutcomeDist":
        return cls(space, tuple(mapping.get(o, 0) for o in space.labels))

    @classmethod
    def point_mass(cls, space: OutcomeSpace, label) -> "OutcomeDist":
        i = space.index(label)
        return cls(space, tuple(1 if j == i else 0 for j in range(space.size)))

    @classmethod
    def uniform(cls, space: OutcomeSpace) -> "OutcomeDist":
        return cls(space, tuple(Fraction(1, space.size) for _ in space.labels))

    @classmethod
    def bernoulli(cls, p) -> "OutcomeDist":
        """Binary distribution with mass p on label "1"."""
        return cls(binary_space(), (1 - p, p))

    def weight(self, label):
        return self.weights[self.space.index(label)]

    @property
    def is_exact(self) -> bool:
        return all(is_exact_number(w) for w in self.weights)

    def p_one(self):
        """Mass on label "1" of a binary distribution."""
        if not self.space.is_binary:
            raise DomainError("p_one is only defined for binary outcome spaces")
        return self.weight("1")

    def as_exact(self) -> "OutcomeDist":
        if self.is_exact:
            return self
        ws = [exactify(w) for w in self.weights]
        # Floats summing to ~1 rarely sum to exactly 1 as rationals; the
        # deficit is absorbed by the largest coordinate to stay on the simplex.
        deficit = 1 - sum(ws)
        if deficit != 0:
            i = max(range(len(ws)), key=lambda j: ws[j])
            ws[i] += deficit
            if ws[i] < 0:
                raise DomainError("cannot exactify: weights too far from the simplex")
        return OutcomeDist(self.space, tuple(ws))

    def __repr__(self):
        pairs = ", ".join(f"{o}:{w}" for o, w in zip(self.space.labels, self.weights))
        return f"OutcomeDist({pairs})"


# ---------------------------------------------------------------------------
# Statistical distance
# ---------------------------------------------------------------------------


def _as_table(p) -> dict:
    if isinstance(p, OutcomeDist):
        return dict(zip(p.space.labels, p.weights))
    if isinstance(p, Mapping):
        return dict(p)
    raise DomainError(f"expected OutcomeDist or mapping, got {type(p).__name__}")


def _check_same_support(tp: dict, tq: dict):
    if set(tp) != set(tq):
        only_p = set(tp) - set(tq)
        only_q = set(tq) - set(tp)
        raise SupportMismatchError(
            f"supports differ: only-left={sorted(map(repr, only_p))}, "
            f"only-right={sorted(map(repr, only_q))}"
        )


def stat_distance(p, q):
    """Half-L1 statistical distance between two finite distributions.

    Accepts OutcomeDist values or mappings (joint tables keyed by atoms).
    Both arguments must be defined over the same support set.
    """
    tp, tq = _as_table(p), _as_table(q)
    _check_same_support(tp, tq)
    total = sum(abs(tp[a] - tq[a]) for a in tp)
    return total / 2 if isinstance(total, float) else Fraction(total) / 2


def stat_distance_subset_oracle(p, q):
    """max_A |p(A) - q(A)| by literal enumeration of all 2^|support| events.

    This is the defining form of statistical distance and is kept independent
    of `stat_distance` so the two can check each other.  Supports of more
    than 22 atoms are refused.
    """
    tp, tq = _as_table(p), _as_table(q)
    _check_same_support(tp, tq)
    atoms = list(tp)
    k = len(atoms)
    if k > SUBSET_ORACLE_LIMIT:
        raise EnumerationLimitError(
            f"support of size {k} exceeds the enumeration guard {SUBSET_ORACLE_LIMIT}"
        )
    diffs = [tp[a] - tq[a] for a in atoms]
    best = 0
    acc = 0
    prev = 0
    # Gray-code walk: exactly one atom enters or leaves per step.
    for g in range(1, 1 << k):
        gray = g ^ (g >> 1)
        changed = gray ^ prev
        idx = changed.bit_length() - 1
        if gray & changed:
            acc += diffs[idx]
        else:
            acc -= diffs[idx]
        prev = gray
        mag = abs(acc)
        if mag > best:
            best = mag
    return best


def conditional_distance_profile(joint_x: Mapping, joint_y: Mapping) -> dict:
    """Per-condition statistical distances delta(X, Y | Z=z).

    Both tables are keyed by tuples whose last coordinate is the conditioning
    value z.  The Z-marginals must agree exactly; conditions with zero mass
    are excluded from the output.  The profile satisfies

        sum_z profile[z] * Pr[Z=z] = delta((X,Z), (Y,Z)).
    """
    zx, zy = {}, {}
    for key, mass in joint_x.items():
        zx[key[-1]] = zx.get(key[-1], 0) + mass
    for key, mass in joint_y.items():
        zy[key[-1]] = zy.get(key[-1], 0) + mass
    if set(zx) != set(zy) or any(zx[z] != zy[z] for z in zx):
        raise ConditioningMismatchError("conditioning marginals differ between the joints")
    profile = {}
    for z, mass in zx.items():
        if mass == 0:
            continue
        px = {k[:-1]: v for k, v in joint_x.items() if k[-1] == z}
        py = {k[:-1]: v for k, v in joint_y.items() if k[-1] == z}
        keys = set(px) | set(py)
        tot = sum(abs(px.get(k, 0) - py.get(k, 0)) for k in keys)
        if isinstance(tot, float) or isinstance(mass, float):
            profile[z] = tot / (2 * mass)
        else:
            profile[z] = Fraction(tot, 1) / (2 * mass)
    return profile


# ---------------------------------------------------------------------------
# Simplex grids and rounding
# ---------------------------------------------------------------------------

GRID_MATERIALIZE_LIMIT = 200_000


def _compositions(total: int, parts: int):
    """Compositions of `total` into `parts` nonnegative parts, first part largest first.

    The resulting order is descending-lexicographic on the weight tuple,
    which for binary spaces lists the grid ascending in the "1"-coordinate.
    """
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class SimplexGrid:
    """A finite covering of the outcome simplex.

    `points` is the canonical ordered list for explicit grids; coordinate
    grids with too many points to materialize carry `points=None` together
    with their `denominator`, and answer rounding queries combinatorially.
    `eta` is a verified covering radius: every distribution lies within
    statistical distance eta of some grid point.
    """

    space: OutcomeSpace
    points: tuple | None
    eta: Fraction
    denominator: int | None = None

    @classmethod
    def coordinate(cls, space: OutcomeSpace, denominator: int) -> "SimplexGrid":
        if denominator < 1:
            raise PrecisionTooCoarseError(f"grid denominator {denominator} < 1")
        ell = space.size
        eta = Fraction(ell - 1, denominator) if ell > 1 else Fraction(0)
        count = math.comb(denominator + ell - 1, ell - 1)
        points = None
        if count <= GRID_MATERIALIZE_LIMIT:
            points = tuple(
                OutcomeDist(space, tuple(Fraction(c, denominator) for c in comp))
                for comp in _compositions(denominator, ell)
            )
        return cls(space=space, points=points, eta=eta, denominator=denominator)

    @classmethod
    def from_points(cls, points: Sequence[OutcomeDist], eta) -> "SimplexGrid":
        points = tuple(points)
        if not points:
            raise DomainError("a grid needs at least one point")
        space = points[0].space
        if any(p.space != space for p in points):
            raise DomainError("grid points must share one outcome space")
        return cls(space=space, points=points, eta=Fraction(eta))

    @property
    def size(self) -> int:
        if self.points is not None:
            return len(self.points)
        ell = self.space.size
        return math.comb(self.denominator + ell - 1, ell - 1)

    @property
    def is_coordinate(self) -> bool:
        return self.denominator is not None

    def round_dist(self, dist: OutcomeDist) -> OutcomeDist:
        """Nearest grid point in statistical distance, earliest point on ties."""
        if dist.space != self.space:
            raise DomainError("distribution and grid live on different outcome spaces")
        if self.is_coordinate:
            return self._round_coordinate(dist)
        return self._round_scan(dist)

    def _round_scan(self, dist: OutcomeDist) -> OutcomeDist:
        best = None
        best_d = None
        for g in self.points:
            d = sum(abs(exactify(a) - exactify(b)) for a, b in zip(dist.weights, g.weights))
            if best_d is None or d < best_d:
                best, best_d = g, d
        return best

    def _round_coordinate(self, dist: OutcomeDist) -> OutcomeDist:
        # Largest-remainder apportionment is the L1 projection onto the integer
        # simplex; ties bump earlier coordinates, matching the canonical
        # descending-lex point order.  Verified against _round_scan in tests.
        m = self.denominator
        scaled = [exactify(w) * m for w in dist.weights]
        floors = [int(x) for x in scaled]  # int() truncates toward zero; weights >= 0
        remainders = [x - f for x, f in zip(scaled, floors)]
        k = m - sum(floors)
        order = sorted(range(len(scaled)), key=lambda i: (-remainders[i], i))
        out = list(floors)
        for i in order[: max(k, 0)]:
            out[i] += 1
        return OutcomeDist(self.space, tuple(Fraction(c, m) for c in out))

    def iter_points(self) -> Iterable[OutcomeDist]:
        if self.points is not None:
            return iter(self.points)
        raise EnumerationLimitError(
            f"grid with {self.size} points is not materialized; iterate refused"
        )


def make_coordinate_grid(space_or_ell, epsilon) -> SimplexGrid:
    """Coordinate grid at denominator m = floor((1/(e*eps) - 1) * (l - 1)).

    Covers the simplex to eta = (l-1)/m and has at most eps^(1-l) points.
    Raises PrecisionTooCoarseError when epsilon is too large for m >= 1.
    """
    space = space_or_ell
    if isinstance(space_or_ell, int):
        space = OutcomeSpace(tuple(str(i) for i in range(space_or_ell)))
    ell = space.size
    eps = float(epsilon)
    if eps <= 0:
        raise DomainError("epsilon must be positive")
    m = math.floor((1.0 / (math.e * eps) - 1.0) * (ell - 1))
    if m < 1:
        raise PrecisionTooCoarseError(
            f"epsilon={eps} gives denominator m={m} < 1 for {ell} outcomes"
        )
    return SimplexGrid.coordinate(space, m)


def make_grid_with_denominator(space: OutcomeSpace, denominator: int) -> SimplexGrid:
    """Coordinate grid with an explicitly chosen denominator."""
    return SimplexGrid.coordinate(space, denominator)


def verify_covering_radius(grid: SimplexGrid, steps: int = 100) -> Fraction:
    """Exhaustively check eta on a rational mesh; returns the worst distance seen.

    Only implemented for 2- and 3-outcome spaces, which is where the grids
    are small enough for the check to be meaningful.
    """
    ell = grid.space.size
    worst = Fraction(0)
    if ell == 2:
        mesh = [(Fraction(i, steps), Fraction(steps - i, steps)) for i in range(steps + 1)]
    elif ell == 3:
        mesh = [
            (Fraction(i, steps), Fraction(j, steps), Fraction(steps - i - j, steps))
            for i in range(steps + 1)
            for j in range(steps + 1 - i)
        ]
    else:
        raise DomainError("covering verification is implemented for 2 and 3 outcomes only")
    for weights in mesh:
        f = OutcomeDist(grid.space, weights)
        g = grid.round_dist(f)
        d = stat_distance(f, g)
        if d > worst:
            worst = d
    if worst > grid.eta:
        raise DomainError(f"covering radius violated: found distance {worst} > eta {grid.eta}")
    return worst
