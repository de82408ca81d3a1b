import math

import numpy as np
import pytest

from multifair import (
    LossTable,
    OutcomeDist,
    OutcomeSpace,
    binary_space,
    measure_regret,
    mwu_rule,
    pgd_rule,
    project_simplex,
    regret_bound,
    update,
)
from multifair.errors import DomainError


def space_of(ell):
    return binary_space() if ell == 2 else OutcomeSpace(tuple(str(i) for i in range(ell)))


def test_mwu_zero_and_constant_loss_fixed_points():
    space = space_of(3)
    d = OutcomeDist(space, (0.2, 0.3, 0.5))
    rule = mwu_rule(space, 0.5)
    out0 = update(rule, d, LossTable(space, (0, 0, 0)))
    outc = update(rule, d, LossTable(space, (0.7, 0.7, 0.7)))
    for a, b in zip(out0.weights, d.weights):
        assert abs(a - b) < 1e-12
    for a, b in zip(outc.weights, d.weights):
        assert abs(a - b) < 1e-12


def test_mwu_closed_form_step():
    space = binary_space()
    out = update(mwu_rule(space, 1.0), OutcomeDist.uniform(space), LossTable(space, (1, 0)))
    e = math.e
    assert abs(out.weights[0] - 1 / (1 + e)) < 1e-12
    assert abs(out.weights[1] - e / (1 + e)) < 1e-12


def test_mwu_stays_strictly_positive():
    space = space_of(4)
    rule = mwu_rule(space, 1.0)
    d = OutcomeDist.uniform(space)
    for _ in range(50):
        d = update(rule, d, LossTable(space, (1, 0, 1, 0)))
        assert all(w > 0 for w in d.weights)


def test_project_simplex_identity_and_examples():
    assert project_simplex([0.25, 0.75]) == (0.25, 0.75)
    assert project_simplex([1.5, 0.5]) == (1.0, 0.0)
    assert project_simplex([2.0, 0.0, 0.0]) == (1.0, 0.0, 0.0)
    # idempotent
    out = project_simplex([0.4, -0.2, 0.9])
    assert project_simplex(out) == pytest.approx(out)


def test_project_simplex_kkt_conditions():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=4) * 2
        p = project_simplex(x)
        assert abs(sum(p) - 1) < 1e-12
        assert all(v >= 0 for v in p)
        # support coordinates share one shift, zeros have x - theta <= 0
        shifts = [x[i] - p[i] for i in range(4) if p[i] > 0]
        theta = shifts[0]
        assert all(abs(s - theta) < 1e-9 for s in shifts)
        assert all(x[i] - theta <= 1e-9 for i in range(4) if p[i] == 0)


def test_project_simplex_matches_mesh_minimizer():
    rng = np.random.default_rng(1)
    steps = 100
    mesh = [(i / steps, j / steps, (steps - i - j) / steps)
            for i in range(steps + 1) for j in range(steps + 1 - i)]
    for _ in range(5):
        x = rng.normal(size=3) * 1.5
        p = project_simplex(x)
        best = min(mesh, key=lambda q: sum((a - b) ** 2 for a, b in zip(x, q)))
        assert sum((a - b) ** 2 for a, b in zip(p, best)) < 2e-3


def test_single_round_regret_at_most_one():
    space = binary_space()
    res = measure_regret(mwu_rule(space, 0.3), [LossTable(space, (1, 0))])
    assert res.avg_regret <= 1


def test_constant_losses_mwu_converges_to_best_arm():
    space = binary_space()
    t = 800
    eta = math.sqrt(8 * math.log(2) / t)
    losses = [LossTable(space, (1.0, 0.0))] * t
    res = measure_regret(mwu_rule(space, eta), losses)
    assert res.avg_regret < 0.1
    assert float(res.trajectory[-1].weights[1]) > 0.95


def test_alternating_losses_bound_form():
    space = binary_space()
    t = 400
    eta = math.sqrt(8 * math.log(2) / t)
    losses = [LossTable(space, (1.0, 0.0)) if i % 2 == 0 else LossTable(space, (0.0, 1.0))
              for i in range(t)]
    rule = mwu_rule(space, eta)
    res = measure_regret(rule, losses)
    bound = math.log(2) / (eta * t) + eta / 2
    assert res.avg_regret <= bound + 1e-9


def test_regret_bounds_random_sequences_both_rules():
    rng = np.random.default_rng(2)
    for _ in range(30):
        ell = int(rng.integers(2, 5))
        space = space_of(ell)
        t = int(rng.integers(1, 300))
        eta = float(rng.uniform(0.01, 1.0))
        losses = [LossTable(space, tuple(rng.random(ell))) for _ in range(t)]
        for make in (mwu_rule, pgd_rule):
            rule = make(space, eta)
            res = measure_regret(rule, losses)
            for o in space.labels:
                assert res.per_strategy[o] <= regret_bound(rule, losses, o) + 1e-9


def test_rule_validation():
    space = binary_space()
    with pytest.raises(DomainError):
        mwu_rule(space, 0.0)
    with pytest.raises(DomainError):
        mwu_rule(space, 0.5, initial=OutcomeDist.bernoulli(0))
    with pytest.raises(DomainError):
        LossTable(space, (0.5, 1.5))
    with pytest.raises(DomainError):
        measure_regret(mwu_rule(space, 0.1), [])
