"""Loss families, post-processing, and omniprediction audits.

A loss assigns a cost in [0, 1] to every (outcome, action) pair.  The
post-processing of a predicted distribution v picks the action minimizing
the expected loss under v, first action in order on ties.  A predictor is
an omnipredictor for a loss family and hypothesis class with slack eps if
its post-processed actions lose at most eps more than any hypothesis:

    E[loss(true outcome, post(p_i))] <= E[loss(true outcome, c_i)] + eps.

The audit evaluates this gap exactly for every (loss, hypothesis) pair.
Because losses are [0,1]-bounded, the gap is at most the calibration
audit plus the multi-accuracy audit, exactly; `omni_bound_check` verifies
that inequality on any instance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .audits import AuditReport, audit_calibration, audit_multi_accuracy
from .core import OutcomeDist, OutcomeSpace, exactify
from .errors import DomainError, RangeMismatchError
from .population import HypothesisClass, PopulationInstance, Predictor


@dataclass(frozen=True)
class LossFunction:
    name: str
    space: OutcomeSpace
    actions: tuple  # finite, ordered
    table: dict  # (outcome label, action) -> cost in [0, 1]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        for o in self.space.labels:
            for y in self.actions:
                if (o, y) not in self.table:
                    raise DomainError(f"loss {self.name}: missing entry ({o!r}, {y!r})")
                v = exactify(self.table[(o, y)])
                if not (0 <= v <= 1):
                    raise DomainError(f"loss {self.name}: entry ({o},{y}) outside [0,1]")

    def cost(self, outcome, action):
        return self.table[(outcome, action)]


def zero_one_loss(space: OutcomeSpace) -> LossFunction:
    """Actions are the outcomes themselves; cost 0 on a match, 1 otherwise."""
    table = {(o, y): Fraction(0) if o == y else Fraction(1)
             for o in space.labels for y in space.labels}
    return LossFunction("zero-one", space, space.labels, table)


def post_process(loss: LossFunction, dist: OutcomeDist):
    """argmin over actions of the expected cost under dist; first action on ties."""
    best = None
    for y in loss.actions:
        exp = sum(exactify(w) * exactify(loss.cost(o, y))
                  for o, w in zip(dist.space.labels, dist.weights))
        if best is None or exp < best[1]:
            best = (y, exp)
    return best[0]


def _action_map(losses, cls: HypothesisClass) -> dict:
    """Match hypothesis range values to loss actions.

    Values must appear in every loss's action set, either directly or via
    their canonical string form (so 0/1-valued hypotheses compose with
    losses whose actions are the labels "0"/"1").
    """
    out = {}
    for loss in losses:
        actions = set(loss.actions)
        for y in cls.range_values:
            if y in actions:
                out[(loss.name, y)] = y
            elif str(y) in actions:
                out[(loss.name, y)] = str(y)
            else:
                raise RangeMismatchError(
                    f"hypothesis value {y!r} is not an action of loss {loss.name}")
    return out


def omni_audit(pop: PopulationInstance, predictor: Predictor, losses,
               cls: HypothesisClass) -> AuditReport:
    """max over (loss, hypothesis) of the post-processing regret, clipped at 0.

    The breakdown keeps the signed per-pair gaps; the report value clips
    below at zero so it compares directly against a slack eps.
    """
    act_of = _action_map(losses, cls)
    predictor.check_total(pop)
    pred = predictor.as_exact()
    breakdown = {}
    witness = None
    best = None
    for loss in losses:
        post_cache = {}
        post_loss = Fraction(0)
        for j in pop.ids:
            d = pred.values[j]
            if d not in post_cache:
                post_cache[d] = post_process(loss, d)
            y = post_cache[d]
            w = exactify(pop.weight[j])
            post_loss += w * sum(
                exactify(t) * exactify(loss.cost(o, y))
                for o, t in zip(pop.space.labels, pop.p_true[j].weights))
        for h in cls:
            h_loss = Fraction(0)
            for j in pop.ids:
                w = exactify(pop.weight[j])
                y = act_of[(loss.name, h.values[j])]
                h_loss += w * sum(
                    exactify(t) * exactify(loss.cost(o, y))
                    for o, t in zip(pop.space.labels, pop.p_true[j].weights))
            gap = post_loss - h_loss
            breakdown[(loss.name, h.name)] = gap
            if best is None or gap > best:
                best = gap
                witness = (loss.name, h.name)
    value = max(best, Fraction(0))
    return AuditReport("omniprediction", value, witness, breakdown)


def omni_bound_check(pop, predictor, losses, cls) -> dict:
    """Verify omni_audit <= calibration + multi-accuracy, exactly, and report
    all three numbers."""
    omni = omni_audit(pop, predictor, losses, cls)
    cal = audit_calibration(pop, predictor)
    ma = audit_multi_accuracy(pop, predictor, cls)
    holds = omni.value <= cal + ma.value
    return {
        "omni_audit": omni.value,
        "calibration": cal,
        "multi_accuracy": ma.value,
        "bound_holds": holds,
        "witness": omni.witness,
    }
