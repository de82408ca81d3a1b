"""Predictor construction via no-regret updates.

The full-information loop repeatedly asks for an exact best-response
distinguisher; while one has advantage above eps it converts that
distinguisher into a loss table L_j(o) = A(j, o, p) and applies the
update rule to every individual's prediction.  The regret bound of the
rule caps the number of iterations at 2 (L/eps)^2 E[D(p*_i, p_i^(1))]:
with multiplicative weights from the uniform start this is
2 ln(outcomes) / eps^2, with projected gradient descent 2*outcomes/eps^2.

The sample-based loop replaces the exact search with a weak agnostic
learner: empirical-advantage maximization over an explicit family on

    n = ceil( 8 ln(2|A|/beta) / (eps/2)^2 )

fresh draws per call, accepting a member whose empirical advantage
exceeds 3 eps / 4.  At that sample size a Hoeffding bound puts every
member's empirical advantage within eps/4 of the truth with probability
1 - beta, which makes both weak-learner guarantees hold: a member with
true advantage above eps is found, and an accepted member has true
advantage above eps/2.  Accepted updates of advantage eps/2 drive the
multiplicative-weights potential down fast enough that iterations stay
below ceil(8 ln(outcomes) / eps^2); a hard cap at the quarter-advantage
bound aborts runs whose learner misbehaved (probability <= the failure
budget), returning the transcript for inspection.

The randomized selection procedure avoids enumerating events altogether:
it draws a uniformly random event over {1} x outcomes x grid, labels true
samples with the difference of event indicators on a modeled versus the
observed outcome, and asks a weak agnostic learner over the hypothesis
class to correlate with those labels.  A random event catches a constant
fraction of any large violation, so O(log(1/beta)) rounds suffice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import SimplexGrid, exactify
from .errors import (
    DomainError,
    InputError,
    InternalInvariantError,
    SampledRunFailureError,
)
from .noregret import LossTable, UpdateRule, mwu_rule, update
from .oi import (
    Distinguisher,
    DistinguisherFamily,
    audit_oi,
    best_response,
    make_family,
    mc_event_distinguisher,
    monomial_multisets,
    negate,
)
from .population import (
    HypothesisClass,
    PopulationInstance,
    Predictor,
    sample,
)


@dataclass
class IterationRecord:
    index: int
    witness: dict
    advantage: object  # exact Fraction in exact mode, float empirical otherwise
    samples_drawn: int = 0
    post_update_audit: object = None


@dataclass
class ConstructionTranscript:
    iterations: list = field(default_factory=list)
    final_predictor: Predictor | None = None
    sample_count: int = 0
    seed: object = None
    iteration_bound: object = None
    final_audit: object = None
    succeeded: bool = True

    @property
    def iteration_count(self):
        return len(self.iterations)


@dataclass(frozen=True)
class WALConfig:
    """Weak-agnostic-learner parameters.

    threshold tau defaults to 3 eps / 4, squarely between the eps/2 the
    contract must certify and the eps it must detect; n_samples defaults
    to the Hoeffding count ceil(8 ln(2|A|/beta) / (eps/2)^2) for advantage
    estimators with range 2.
    """

    epsilon: float
    beta: float
    n_samples: int
    threshold: float

    def __post_init__(self):
        if not (0 < self.beta < 1):
            raise DomainError("failure probability must lie in (0, 1)")
        if not (self.epsilon / 2 < self.threshold < self.epsilon):
            raise DomainError("threshold must lie strictly between eps/2 and eps")
        if self.n_samples < 1:
            raise DomainError("need at least one sample per call")

    @classmethod
    def for_family(cls, epsilon, beta, member_count, n_samples=None) -> "WALConfig":
        eps = float(epsilon)
        n = n_samples if n_samples is not None else wal_sample_count(eps, beta, member_count)
        return cls(epsilon=eps, beta=float(beta), n_samples=int(n), threshold=3 * eps / 4)


def wal_sample_count(epsilon, beta, member_count) -> int:
    return math.ceil(8 * math.log(2 * member_count / beta) / (float(epsilon) / 2) ** 2)


# ---------------------------------------------------------------------------
# Exact full-information construction
# ---------------------------------------------------------------------------


def loss_from_distinguisher(d: Distinguisher, j, predictor, space) -> LossTable:
    return LossTable(space, tuple(float(d.evaluate(j, o, predictor)) for o in space.labels))


def _apply_update(pop, predictor, rule, d) -> Predictor:
    out = {}
    for j in pop.ids:
        loss = loss_from_distinguisher(d, j, predictor, pop.space)
        out[j] = update(rule, predictor.values[j], loss)
    return Predictor(out)


def _initial_divergence(pop, predictor, rule) -> float:
    """E[D(p*_i, p_i)] in the rule's geometry; the potential that regret burns."""
    total = 0.0
    for j in pop.ids:
        w = float(pop.weight[j])
        if w == 0:
            continue
        ps = [float(x) for x in pop.p_true[j].weights]
        pt = [float(x) for x in predictor.values[j].weights]
        if rule.kind == "mwu":
            div = sum(a * math.log(a / b) for a, b in zip(ps, pt) if a > 0)
        else:
            div = sum((a - b) ** 2 for a, b in zip(ps, pt)) / 2
        total += w * div
    return total


def iteration_bound_exact(pop, predictor, rule, epsilon) -> float:
    L = rule.dual_norm_bound
    return 2 * (L / float(epsilon)) ** 2 * _initial_divergence(pop, predictor, rule)


def construct_exact(pop: PopulationInstance, family: DistinguisherFamily, epsilon,
                    rule: UpdateRule | None = None,
                    initial: Predictor | None = None):
    """Full-information construction: exact best responses, no-regret updates.

    Returns a predictor whose exact OI audit against the family is at most
    eps, in under 2 (L/eps)^2 E[D(p*, initial)] iterations.  Exceeding that
    bound raises InternalInvariantError, which the regret analysis rules out.
    """
    eps = exactify(epsilon)
    if eps <= 0:
        raise DomainError("epsilon must be positive")
    if rule is None:
        rule = mwu_rule(pop.space, step_size=float(eps) / 1.0)
    predictor = initial if initial is not None else Predictor(
        {j: rule.initial for j in pop.ids})
    if rule.kind == "mwu":
        for j in pop.ids:
            if any(float(w) <= 0 for w in predictor.values[j].weights):
                raise DomainError("mwu construction needs strictly positive predictions")
    bound = iteration_bound_exact(pop, predictor, rule, eps)
    transcript = ConstructionTranscript(iteration_bound=bound)
    t = 0
    while True:
        d, adv = best_response(pop, predictor, family, backend="rational")
        if transcript.iterations:
            # the fresh best-response value is the post-update audit of the
            # previous iteration
            transcript.iterations[-1].post_update_audit = adv
        if adv <= eps:
            break
        t += 1
        if t > math.ceil(bound) + 1:
            raise InternalInvariantError(
                f"construction exceeded its regret bound ({bound:.2f} iterations)")
        predictor = _apply_update(pop, predictor, rule, d)
        transcript.iterations.append(
            IterationRecord(index=t, witness=dict(d.payload), advantage=adv))
    transcript.final_predictor = predictor
    transcript.final_audit = audit_oi(pop, predictor, family, backend="rational").value
    return predictor, transcript


# ---------------------------------------------------------------------------
# Weak agnostic learning over an explicit family
# ---------------------------------------------------------------------------


def empirical_advantages(members, pop, predictor, samples):
    """Per-member empirical advantage over a list of (individual, outcome) samples.

    Uses the conditional expectation over the modeled outcome given the
    sampled individual, an unbiased range-2 estimator that needs no extra
    randomness.
    """
    if not samples:
        raise InputError("empty sample list")
    id_pos = {j: i for i, j in enumerate(pop.ids)}
    n = len(samples)
    counts = np.zeros(len(pop.ids))
    obs_counts = np.zeros((len(pop.ids), pop.space.size))
    o_pos = {o: i for i, o in enumerate(pop.space.labels)}
    for j, o in samples:
        counts[id_pos[j]] += 1
        obs_counts[id_pos[j], o_pos[o]] += 1
    out = []
    for d in members:
        modeled = 0.0
        observed = 0.0
        for i, j in enumerate(pop.ids):
            if counts[i] == 0:
                continue
            vals = [float(d.evaluate(j, o, predictor)) for o in pop.space.labels]
            pt = [float(w) for w in predictor.values[j].weights]
            modeled += counts[i] * sum(a * b for a, b in zip(vals, pt))
            observed += sum(obs_counts[i, oi] * vals[oi] for oi in range(pop.space.size))
        out.append((modeled - observed) / n)
    return out


def wal_erm(family, cfg: WALConfig, samples, pop, predictor):
    """Empirical-risk-minimization weak agnostic learner.

    Returns the empirical-advantage maximizer over the family and its
    pointwise negations when that advantage exceeds cfg.threshold, else
    None.  Satisfies both weak-learner guarantees with probability at
    least 1 - beta at the default sample count.
    """
    members = family.members() if isinstance(family, DistinguisherFamily) else list(family)
    advs = empirical_advantages(members, pop, predictor, samples)
    best_i = max(range(len(members)), key=lambda i: abs(advs[i]))
    if abs(advs[best_i]) > cfg.threshold:
        d = members[best_i]
        if advs[best_i] < 0:
            return negate(d), -advs[best_i]
        return d, advs[best_i]
    return None


def construct_sampled(pop, family, epsilon, rule=None, beta=0.05,
                      rng: np.random.Generator | None = None, seed=None,
                      n_samples=None):
    """Sample-based construction through a weak agnostic learner.

    The returned transcript records every accepted distinguisher, the
    per-iteration sample counts, and the final exact audit.  Iterations
    are hard-capped at the quarter-advantage regret bound; exceeding the
    cap raises SampledRunFailureError carrying the transcript (this is
    the probability-beta failure path made explicit).
    """
    eps = float(epsilon)
    if rng is None:
        rng = np.random.default_rng(seed)
    if rule is None:
        rule = mwu_rule(pop.space, step_size=eps / 2)
    members = family.members()
    count = 2 * len(members)  # ERM searches members and their negations
    cfg = WALConfig.for_family(eps, beta, count, n_samples=n_samples)
    predictor = Predictor({j: rule.initial for j in pop.ids})
    ell = pop.space.size
    if rule.kind == "mwu":
        soft_cap = math.ceil(8 * math.log(ell) / eps ** 2)
        hard_cap = math.ceil(32 * math.log(ell) / eps ** 2)
    else:
        soft_cap = math.ceil(8 * ell / eps ** 2)
        hard_cap = math.ceil(32 * ell / eps ** 2)
    transcript = ConstructionTranscript(seed=seed, iteration_bound=soft_cap)
    t = 0
    while True:
        draws = sample(pop, rng, cfg.n_samples)
        transcript.sample_count += cfg.n_samples
        found = wal_erm(family, cfg, draws, pop, predictor)
        if transcript.iterations:
            transcript.iterations[-1].post_update_audit = \
                found[1] if found is not None else 0.0
        if found is None:
            transcript.succeeded = True
            break
        d, emp_adv = found
        t += 1
        if t > hard_cap:
            transcript.succeeded = False
            transcript.final_predictor = predictor
            raise SampledRunFailureError(
                f"exceeded the iteration cap {hard_cap}", transcript)
        predictor = _apply_update(pop, predictor, rule, d)
        transcript.iterations.append(IterationRecord(
            index=t, witness=dict(d.payload), advantage=emp_adv,
            samples_drawn=cfg.n_samples))
    transcript.final_predictor = predictor
    transcript.final_audit = audit_oi(pop, predictor, family, backend="rational").value
    return predictor, transcript


# ---------------------------------------------------------------------------
# Randomized distinguisher selection
# ---------------------------------------------------------------------------

SELECT_ROUNDS_FACTOR = 8          # rounds = ceil(8 ln(1/beta))
ANTI_CONCENTRATION_PROB = Fraction(1, 16)  # documented lower bound per round


def label_sample(j, o, predictor, event, grid: SimplexGrid, rng: np.random.Generator):
    """1[(1, o', rounded p_j) in E] - 1[(1, o, rounded p_j) in E] with o' ~ p_j.

    Event cells may be written (outcome, grid point) or, matching the
    family convention, (1, outcome, grid point).
    """
    d = predictor.values[j].as_exact()
    g = tuple(grid.round_dist(d).weights)
    ev = set()
    for cell in event:
        if len(cell) == 3:
            one, oo, gg = cell
            if one != 1:
                raise DomainError("labeling events live over the y = 1 slice")
            ev.add((oo, tuple(gg)))
        else:
            oo, gg = cell
            ev.add((oo, tuple(gg)))
    weights = [float(w) for w in predictor.values[j].weights]
    labels = predictor.values[j].space.labels
    o_prime = labels[int(rng.choice(len(labels), p=np.array(weights) / sum(weights)))]
    return int((o_prime, g) in ev) - int((o, g) in ev)


class ErmOverHypotheses:
    """ERM weak agnostic learner over a 0/1 hypothesis class.

    Searches the class together with its pointwise complements, so the
    complement-closure assumption of the selection lemma holds regardless
    of how the class was specified.  Labeled data is (individual, y) with
    y in [-1, 1]; a hypothesis is returned when its empirical correlation
    E[c_x y] exceeds 3 eps / 4.
    """

    def __init__(self, cls: HypothesisClass):
        search = list(cls.hypotheses)
        seen = {tuple(sorted(h.values.items())) for h in search}
        for h in cls.hypotheses:
            comp = h.complement()
            key = tuple(sorted(comp.values.items()))
            if key not in seen:
                seen.add(key)
                search.append(comp)
        self.search = search

    @property
    def search_size(self):
        return len(self.search)

    def __call__(self, eps, labeled):
        if not labeled:
            return None
        n = len(labeled)
        agg = {}
        for x, y in labeled:
            agg[x] = agg.get(x, 0.0) + y
        return self.from_aggregates(eps, agg, n)

    def from_aggregates(self, eps, agg, n):
        """Same ERM on per-individual label sums: E[c_x y] = sum_j c_j agg_j / n."""
        best = None
        for h in self.search:
            corr = sum(h.values[j] * v for j, v in agg.items()) / n
            if best is None or corr > best[1]:
                best = (h, corr)
        if best[1] > 3 * eps / 4:
            return best[0]
        return None


def select_distinguisher_randomized(pop, predictor, cls: HypothesisClass, eps_prime,
                                    beta, rng: np.random.Generator,
                                    grid: SimplexGrid, wal_over_cls=None):
    """Randomized event selection: returns an mc-family member or None.

    If some mc-family member has advantage above 8 sqrt(outcomes * |grid|)
    times eps_prime, a member with advantage above eps_prime / 2 is
    returned with probability at least 1 - beta; the class is accessed
    only through the weak agnostic learner.
    """
    if not pop.space.is_binary or not cls.is_binary:
        raise DomainError("randomized selection requires binary outcomes and hypotheses")
    epsp = float(eps_prime)
    if wal_over_cls is None:
        wal_over_cls = ErmOverHypotheses(cls)
    rounds = math.ceil(SELECT_ROUNDS_FACTOR * math.log(1 / beta))
    search_size = getattr(wal_over_cls, "search_size", 2 * len(cls.hypotheses))
    n_per_round = math.ceil(
        8 * math.log(2 * search_size * rounds / beta) / (epsp / 2) ** 2)

    cells = [(o, tuple(g.weights)) for o in pop.space.labels for g in grid.iter_points()]
    pred_exact = predictor.as_exact()
    rounded = {j: tuple(grid.round_dist(pred_exact.values[j]).weights) for j in pop.ids}

    weights = np.array([float(pop.weight[j]) for j in pop.ids])
    weights = weights / weights.sum()
    p_true_one = np.array([[float(w) for w in pop.p_true[j].weights] for j in pop.ids])
    cum_true = np.cumsum(p_true_one, axis=1)
    p_mod = np.array([[float(w) for w in predictor.values[j].weights] for j in pop.ids])
    cum_mod = np.cumsum(p_mod, axis=1)
    cell_index = {c: i for i, c in enumerate(cells)}
    cell_of = np.array(
        [[cell_index[(o, rounded[j])] for o in pop.space.labels] for j in pop.ids])

    for _ in range(rounds):
        member_bits = rng.integers(0, 2, size=len(cells))
        event = {c for c, b in zip(cells, member_bits) if b}
        in_event = member_bits.astype(np.int8)
        idx = rng.choice(len(pop.ids), size=n_per_round, p=weights)
        u = rng.random(n_per_round)
        o_star = (cum_true[idx] < u[:, None]).sum(axis=1)
        o_star = np.minimum(o_star, pop.space.size - 1)
        u2 = rng.random(n_per_round)
        o_prime = (cum_mod[idx] < u2[:, None]).sum(axis=1)
        o_prime = np.minimum(o_prime, pop.space.size - 1)
        y = in_event[cell_of[idx, o_prime]] - in_event[cell_of[idx, o_star]]
        if isinstance(wal_over_cls, ErmOverHypotheses):
            # aggregate labels per individual so the ERM is O(|C| * |X|)
            agg_arr = np.bincount(idx, weights=y.astype(float), minlength=len(pop.ids))
            agg = {j: float(agg_arr[i]) for i, j in enumerate(pop.ids)}
            c = wal_over_cls.from_aggregates(epsp, agg, n_per_round)
        else:
            pairs = [(pop.ids[i], float(v)) for i, v in zip(idx.tolist(), y.tolist())]
            c = wal_over_cls(epsp, pairs)
        if c is not None:
            ev3 = {(1, o, g) for (o, g) in event}
            d = mc_event_distinguisher(c, ev3, grid)
            return d
    return None


# ---------------------------------------------------------------------------
# Low-degree construction and VC helpers
# ---------------------------------------------------------------------------


def vc_dimension(cls: HypothesisClass, limit: int = 16) -> int:
    """Brute-force VC dimension of a 0/1 class over an explicit domain.

    Exponential search; refuses domains larger than `limit` points.
    """
    ids = sorted({j for h in cls for j in h.values})
    if len(ids) > limit:
        raise DomainError(f"VC brute force capped at {limit} domain points")
    best = 0
    for d in range(1, len(ids) + 1):
        found = False
        for subset in itertools.combinations(ids, d):
            patterns = {tuple(h.values[j] for j in subset) for h in cls}
            if len(patterns) == 2 ** d:
                found = True
                break
        if found:
            best = d
        else:
            break
    return best


def low_degree_sample_count(epsilon, beta, vc, ell, degree) -> int:
    """Per-call draws for the low-degree learner: VC of the class plus the
    log of the (outcome, monomial) choices, at the usual Hoeffding scaling."""
    m_k = len(monomial_multisets(ell, degree))
    return math.ceil(
        8 * (vc + math.log(2 * ell * m_k / beta)) / (float(epsilon) / 2) ** 2)


def construct_low_degree(pop, cls, degree, epsilon, mode="exact", rng=None,
                         beta=0.1, vc_bound=None, rule=None):
    """Constructor against the low-degree family; exact or sampled mode."""
    family = make_family("lowdegree", hypotheses=cls, degree=degree,
                         outcome_space=pop.space)
    if mode == "exact":
        return construct_exact(pop, family, epsilon, rule=rule)
    if mode != "sampled":
        raise DomainError(f"unknown mode {mode!r}")
    vc = vc_bound if vc_bound is not None else vc_dimension(cls)
    n = low_degree_sample_count(epsilon, beta, vc, pop.space.size, degree)
    return construct_sampled(pop, family, epsilon, rule=rule, beta=beta, rng=rng,
                             n_samples=n)
