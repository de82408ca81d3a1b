"""JSON schemas and exact-number string handling.

All numbers in emitted JSON are strings so exact rationals survive the
round trip: a value is written as a plain decimal when its denominator is
a product of 2s and 5s, and as "p/q" otherwise.  The parser accepts both
forms (and plain integers).  Every emitted artifact re-loads to an equal
in-memory object under the rational backend.
"""

from __future__ import annotations

import json
from fractions import Fraction

from .audits import AuditReport
from .core import OutcomeDist, OutcomeSpace
from .errors import InputError
from .graph import DiGraph, VertexPartition
from .omni import LossFunction
from .population import Hypothesis, HypothesisClass, PopulationInstance, Predictor


def number_to_string(x) -> str:
    if isinstance(x, bool):
        raise InputError("booleans are not numbers here")
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, Fraction):
        den = x.denominator
        twos = 0
        while den % 2 == 0:
            den //= 2
            twos += 1
        fives = 0
        while den % 5 == 0:
            den //= 5
            fives += 1
        if den == 1:
            shift = max(twos, fives)
            scaled = x.numerator * 10 ** shift // x.denominator
            s = str(abs(scaled)).rjust(shift + 1, "0")
            sign = "-" if scaled < 0 else ""
            if shift == 0:
                return f"{sign}{s}"
            return f"{sign}{s[:-shift]}.{s[-shift:]}"
        return f"{x.numerator}/{x.denominator}"
    raise InputError(f"cannot serialize number {x!r}")


def parse_number(s) -> Fraction:
    if isinstance(s, (int, Fraction)) and not isinstance(s, bool):
        return Fraction(s)
    if isinstance(s, float):
        return Fraction(s)
    try:
        return Fraction(str(s).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise InputError(f"cannot parse number {s!r}: {e}") from None


def jsonify(obj):
    """Recursively convert library values into JSON-encodable structures."""
    if obj is None or isinstance(obj, (bool, str, int)):
        if isinstance(obj, int) and not isinstance(obj, bool):
            return str(obj) if abs(obj) > 2**53 else obj
        return obj
    if isinstance(obj, float):
        return repr(obj)
    if isinstance(obj, Fraction):
        return number_to_string(obj)
    if isinstance(obj, OutcomeDist):
        return {str(o): (repr(w) if isinstance(w, float) else number_to_string(Fraction(w)))
                for o, w in zip(obj.space.labels, obj.weights)}
    if isinstance(obj, dict):
        return {_key(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj, key=repr) if isinstance(obj, (set, frozenset)) else obj
        return [jsonify(v) for v in items]
    if hasattr(obj, "__dict__"):
        return {k: jsonify(v) for k, v in vars(obj).items()}
    return repr(obj)


def _key(k) -> str:
    if isinstance(k, str):
        return k
    if isinstance(k, Fraction):
        return number_to_string(k)
    if isinstance(k, tuple):
        return "|".join(_key(x) for x in k)
    return str(k)


# ---------------------------------------------------------------------------
# Population instances
# ---------------------------------------------------------------------------


def dist_to_json(d: OutcomeDist) -> dict:
    return {str(o): number_to_string(w if isinstance(w, Fraction) else Fraction(w))
            for o, w in zip(d.space.labels, d.weights)}


def dist_from_json(space: OutcomeSpace, doc: dict) -> OutcomeDist:
    return OutcomeDist.from_mapping(space, {o: parse_number(v) for o, v in doc.items()})


def _value_token(v):
    """Hypothesis values: numeric strings parse to Fractions, others stay strings."""
    if isinstance(v, str):
        try:
            f = Fraction(v)
        except (ValueError, ZeroDivisionError):
            return v
        return int(f) if f.denominator == 1 else f
    if isinstance(v, (int, Fraction)):
        return v
    raise InputError(f"bad hypothesis value {v!r}")


def instance_to_json(pop: PopulationInstance, cls: HypothesisClass | None = None,
                     predictor: Predictor | None = None) -> dict:
    doc = {
        "outcomes": [str(o) for o in pop.space.labels],
        "individuals": [
            {
                "id": str(j),
                "weight": number_to_string(Fraction(pop.weight[j])),
                "p_true": dist_to_json(pop.p_true[j]),
            }
            for j in pop.ids
        ],
    }
    if cls is not None:
        doc["hypotheses"] = [
            {
                "name": h.name,
                "range": [number_to_string(v) if isinstance(v, (int, Fraction)) else str(v)
                          for v in h.range_values],
                "values": {str(j): number_to_string(v) if isinstance(v, (int, Fraction))
                           else str(v) for j, v in h.values.items()},
            }
            for h in cls.hypotheses
        ]
        doc["closed_under_complement"] = cls.closed_under_complement
    if predictor is not None:
        doc["predictor"] = {str(j): dist_to_json(d) for j, d in predictor.values.items()}
    return doc


def instance_from_json(doc: dict):
    """Returns (population, hypothesis class or None, predictor or None)."""
    try:
        space = OutcomeSpace(tuple(doc["outcomes"]))
        ids = tuple(ind["id"] for ind in doc["individuals"])
        weight = {ind["id"]: parse_number(ind["weight"]) for ind in doc["individuals"]}
        p_true = {ind["id"]: dist_from_json(space, ind["p_true"])
                  for ind in doc["individuals"]}
        pop = PopulationInstance(space=space, ids=ids, weight=weight, p_true=p_true)
        cls = None
        if doc.get("hypotheses"):
            hyps = []
            for h in doc["hypotheses"]:
                rng = tuple(_value_token(v) for v in h["range"])
                values = {j: _value_token(v) for j, v in h["values"].items()}
                hyps.append(Hypothesis(h["name"], rng, values))
            cls = HypothesisClass(tuple(hyps),
                                  closed_under_complement=doc.get("closed_under_complement",
                                                                  False))
        predictor = None
        if doc.get("predictor"):
            predictor = Predictor({j: dist_from_json(space, d)
                                   for j, d in doc["predictor"].items()})
        return pop, cls, predictor
    except (KeyError, TypeError) as e:
        raise InputError(f"malformed instance document: {e}") from None


def predictor_to_json(predictor: Predictor) -> dict:
    return {str(j): dist_to_json(d) for j, d in predictor.values.items()}


def predictor_from_json(space: OutcomeSpace, doc: dict) -> Predictor:
    return Predictor({j: dist_from_json(space, d) for j, d in doc.items()})


# ---------------------------------------------------------------------------
# Graphs, partitions, losses, reports
# ---------------------------------------------------------------------------


def graph_to_json(g: DiGraph) -> dict:
    return {"n": g.n, "edges": sorted([u, v] for u, v in g.edges)}


def graph_from_json(doc: dict) -> DiGraph:
    try:
        return DiGraph(int(doc["n"]), frozenset((int(u), int(v)) for u, v in doc["edges"]))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed graph document: {e}") from None


def graph_from_text(text: str) -> DiGraph:
    """Whitespace edge list: first token is the vertex count, then u v pairs."""
    tokens = text.split()
    if not tokens:
        raise InputError("empty graph text")
    try:
        n = int(tokens[0])
        rest = [int(t) for t in tokens[1:]]
    except ValueError as e:
        raise InputError(f"bad graph text: {e}") from None
    if len(rest) % 2:
        raise InputError("odd number of edge endpoints in graph text")
    return DiGraph(n, frozenset(zip(rest[0::2], rest[1::2])))


def partition_to_json(p: VertexPartition) -> list:
    return [list(part) for part in p.parts]


def partition_from_json(doc) -> VertexPartition:
    try:
        return VertexPartition(tuple(tuple(int(v) for v in part) for part in doc))
    except TypeError as e:
        raise InputError(f"malformed partition document: {e}") from None


def losses_from_json(space: OutcomeSpace, doc) -> list:
    """Loss list: [{name, actions, table: {outcome: {action: value}}}]."""
    out = []
    try:
        for entry in doc:
            actions = tuple(entry["actions"])
            table = {}
            for o, row in entry["table"].items():
                for y, v in row.items():
                    table[(o, y)] = parse_number(v)
            out.append(LossFunction(entry["name"], space, actions, table))
    except (KeyError, TypeError) as e:
        raise InputError(f"malformed loss document: {e}") from None
    return out


def losses_to_json(losses) -> list:
    return [
        {
            "name": loss.name,
            "actions": [str(a) for a in loss.actions],
            "table": {
                str(o): {str(y): number_to_string(Fraction(loss.table[(o, y)]))
                         for y in loss.actions}
                for o in loss.space.labels
            },
        }
        for loss in losses
    ]


def report_to_json(report: AuditReport) -> dict:
    return {
        "kind": report.kind,
        "value": jsonify(report.value),
        "witness": jsonify(report.witness),
        "breakdown": jsonify(report.breakdown),
    }


def dump(doc, path=None) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
