import math
from fractions import Fraction as F

import numpy as np
import pytest

from multifair import (
    HypothesisClass,
    OutcomeDist,
    Predictor,
    SimplexGrid,
    WALConfig,
    audit_oi,
    binary_space,
    construct_exact,
    construct_low_degree,
    construct_sampled,
    fixture_two_point,
    indicator_all,
    label_sample,
    make_family,
    make_grid_with_denominator,
    mwu_rule,
    oi_advantage,
    pgd_rule,
    random_instance,
    sample,
    select_distinguisher_randomized,
    vc_dimension,
    wal_erm,
    wal_sample_count,
)
from multifair.errors import DomainError, InputError
from multifair.oi import Distinguisher


def identity_grid():
    return SimplexGrid.from_points(
        [OutcomeDist.bernoulli(F(0)), OutcomeDist.bernoulli(F(1))], eta=F(1, 2))


# ---------------------------------------------------------------------------
# exact construction
# ---------------------------------------------------------------------------


def test_exact_ground_truth_start_returns_unchanged():
    pop, cls, _ = fixture_two_point()
    fam = make_family("mc", hypotheses=cls, grid=identity_grid())
    gt = pop.ground_truth_predictor()
    out, tr = construct_exact(pop, fam, F(1, 20), rule=mwu_rule(pop.space, 0.05),
                              initial=gt)
    assert tr.iteration_count == 0
    assert out.values == gt.values


def test_exact_two_point_reaches_target():
    pop, cls, _ = fixture_two_point()
    fam = make_family("mc", hypotheses=cls, grid=identity_grid())
    out, tr = construct_exact(pop, fam, F(1, 20), rule=mwu_rule(pop.space, 0.05))
    assert tr.final_audit <= F(1, 20)


def test_exact_respects_iteration_bound_ell8():
    rng = np.random.default_rng(0)
    cap = math.ceil(2 * math.log(8) / 0.01)
    assert cap == 416
    for seed in range(4):
        pop, cls, _ = random_instance(np.random.default_rng(seed), 8, 8, 3)
        grid = make_grid_with_denominator(pop.space, 2)
        fam = make_family("mc", hypotheses=cls, grid=grid)
        out, tr = construct_exact(pop, fam, F(1, 10), rule=mwu_rule(pop.space, 0.1))
        assert tr.iteration_count <= cap
        assert tr.final_audit <= F(1, 10)
        assert audit_oi(pop, out, fam).value == tr.final_audit


def test_exact_pgd_also_terminates():
    pop, cls, _ = random_instance(np.random.default_rng(5), 6, 2, 2)
    fam = make_family("mc", hypotheses=cls, grid=identity_grid())
    rule = pgd_rule(pop.space, 0.1 / 2)
    out, tr = construct_exact(pop, fam, F(1, 10), rule=rule)
    assert tr.final_audit <= F(1, 10)
    assert tr.iteration_count <= math.ceil(2 * 2 / 0.01)


def test_transcript_length_bounds_description():
    pop, cls, _ = random_instance(np.random.default_rng(6), 6, 4, 3)
    grid = make_grid_with_denominator(pop.space, 2)
    fam = make_family("mc", hypotheses=cls, grid=grid)
    out, tr = construct_exact(pop, fam, F(1, 8), rule=mwu_rule(pop.space, 1 / 8))
    assert tr.iteration_count <= math.ceil(tr.iteration_bound) + 1
    assert len(tr.iterations) == tr.iteration_count


# ---------------------------------------------------------------------------
# weak agnostic learner
# ---------------------------------------------------------------------------


def test_wal_sample_count_formula():
    n = wal_sample_count(0.2, 0.1, 50)
    assert n == math.ceil(8 * math.log(2 * 50 / 0.1) / 0.01)


def test_wal_config_validation():
    with pytest.raises(DomainError):
        WALConfig(epsilon=0.2, beta=0.0, n_samples=10, threshold=0.15)
    with pytest.raises(DomainError):
        WALConfig(epsilon=0.2, beta=0.1, n_samples=10, threshold=0.25)
    cfg = WALConfig.for_family(0.2, 0.1, 50)
    assert cfg.threshold == pytest.approx(0.15)


def test_wal_erm_empty_samples():
    pop, cls, pred = fixture_two_point()
    fam = make_family("basic", hypotheses=cls, grid=identity_grid())
    cfg = WALConfig.for_family(0.2, 0.1, fam.member_count())
    with pytest.raises(InputError):
        wal_erm(fam, cfg, [], pop, pred)


def test_wal_erm_finds_planted_advantage():
    # family {A, 1-A} with true advantage 0.4 is found on most seeds
    pop, cls, pred = fixture_two_point()
    grid = identity_grid()

    def fn(j, o, p, _g=grid):
        # accepts iff prediction rounds to 1 and outcome is 1: advantage 1/4...
        return 1 if (o == "1" and _g.round_dist(p.values[j].as_exact()).p_one() == 1) else 0

    base = Distinguisher("planted", fn)
    fam = make_family("explicit", members=[base])
    true_adv = oi_advantage(pop, pred, base)
    assert true_adv == F(1, 4)
    cfg = WALConfig.for_family(0.2, 0.1, 2)
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        draws = sample(pop, rng, cfg.n_samples)
        found = wal_erm(fam, cfg, draws, pop, pred)
        if found is not None and abs(found[1]) > cfg.threshold:
            hits += 1
    assert hits >= 18


def test_wal_erm_mostly_silent_on_ground_truth():
    pop, cls, _ = fixture_two_point()
    gt = pop.ground_truth_predictor()
    fam = make_family("basic", hypotheses=cls, grid=identity_grid())
    cfg = WALConfig.for_family(0.2, 0.1, 2 * fam.member_count())
    quiet = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        draws = sample(pop, rng, cfg.n_samples)
        found = wal_erm(fam, cfg, draws, pop, gt)
        if found is None or abs(oi_advantage(pop, gt, found[0])) <= 0.1:
            quiet += 1
    assert quiet >= 18


# ---------------------------------------------------------------------------
# sampled construction
# ---------------------------------------------------------------------------


def test_sampled_ground_truth_start_immediate():
    pop, cls, _ = fixture_two_point()
    fam = make_family("basic", hypotheses=cls, grid=identity_grid())
    # uniform start equals the fixture truth, so the learner finds nothing
    out, tr = construct_sampled(pop, fam, 0.2, beta=0.05,
                                rng=np.random.default_rng(0), seed=0)
    assert tr.iteration_count == 0
    assert tr.succeeded


def test_sampled_records_sample_counts():
    rng = np.random.default_rng(123)
    pop, cls, _ = random_instance(rng, 8, 4, 6)
    grid = make_grid_with_denominator(pop.space, 2)
    fam = make_family("basic", hypotheses=cls, grid=grid)
    n_expected = wal_sample_count(0.15, 0.05, 2 * fam.member_count())
    out, tr = construct_sampled(pop, fam, 0.15, beta=0.05,
                                rng=np.random.default_rng(7), seed=7)
    assert tr.final_audit <= F(15, 100) or not tr.succeeded
    for rec in tr.iterations:
        assert rec.samples_drawn == n_expected
    assert tr.sample_count >= n_expected  # at least the final silent call


def test_sampled_iteration_cap_formula():
    # the recorded soft cap is the halved-advantage form 8 ln(l) / eps^2
    rng = np.random.default_rng(9)
    pop, cls, _ = random_instance(rng, 6, 4, 3)
    grid = make_grid_with_denominator(pop.space, 2)
    fam = make_family("basic", hypotheses=cls, grid=grid)
    out, tr = construct_sampled(pop, fam, 0.15, beta=0.05,
                                rng=np.random.default_rng(11), seed=11)
    assert tr.iteration_bound == math.ceil(8 * math.log(4) / 0.15 ** 2)
    assert tr.iteration_count <= tr.iteration_bound


# ---------------------------------------------------------------------------
# label and randomized selection
# ---------------------------------------------------------------------------


def test_label_empty_and_full_events():
    pop, _, pred = fixture_two_point()
    grid = identity_grid()
    rng = np.random.default_rng(0)
    assert label_sample("0", "1", pred, set(), grid, rng) == 0
    full = {(1, o, tuple(g.weights)) for o in pop.space.labels
            for g in grid.iter_points()}
    assert label_sample("0", "1", pred, full, grid, rng) == 0


def test_label_deterministic_case():
    pop, _, pred = fixture_two_point()
    grid = identity_grid()
    event = {(1, "1", (F(0), F(1))), (1, "1", (F(1), F(0)))}
    rng = np.random.default_rng(1)
    # individual "1" predicts Bernoulli(1): the modeled draw is always "1"
    for _ in range(10):
        assert label_sample("1", "0", pred, event, grid, rng) == 1


def test_select_distinguisher_round_count():
    # rounds = ceil(8 ln(1/beta))
    assert math.ceil(8 * math.log(1 / 0.1)) == 19


def test_select_distinguisher_fixture_and_ground_truth():
    pop, cls, pred = fixture_two_point()
    grid = identity_grid()
    eps_prime = F(1, 32)  # 0.5 / (8 sqrt(2 |G|)) with |G| = 2
    hits = 0
    for seed in range(6):
        rng = np.random.default_rng(seed)
        d = select_distinguisher_randomized(pop, pred, cls, eps_prime, 0.1, rng, grid)
        if d is not None and oi_advantage(pop, pred, d) > 0:
            hits += 1
    assert hits >= 5
    gt = pop.ground_truth_predictor()
    quiet = 0
    for seed in range(6):
        rng = np.random.default_rng(50 + seed)
        d = select_distinguisher_randomized(pop, gt, cls, eps_prime, 0.1, rng, grid)
        if d is None or abs(oi_advantage(pop, gt, d)) <= eps_prime / 2:
            quiet += 1
    assert quiet >= 5


def test_select_requires_binary():
    rng = np.random.default_rng(0)
    pop, cls, pred = random_instance(rng, 4, 3, 2)
    with pytest.raises(DomainError):
        select_distinguisher_randomized(pop, pred, cls, F(1, 8), 0.1, rng,
                                        make_grid_with_denominator(pop.space, 2))


# ---------------------------------------------------------------------------
# low-degree construction and VC helper
# ---------------------------------------------------------------------------


def test_vc_dimension_bruteforce():
    rng = np.random.default_rng(2)
    pop, _, _ = random_instance(rng, 4, 2, 1)
    from multifair import Hypothesis
    ids = list(pop.ids)
    # all 16 boolean functions on 4 points shatter everything: VC = 4
    full = HypothesisClass(tuple(
        Hypothesis(f"h{k}", (0, 1), {ids[i]: (k >> i) & 1 for i in range(4)})
        for k in range(16)))
    assert vc_dimension(full) == 4
    single = HypothesisClass((indicator_all(pop),))
    assert vc_dimension(single) == 0


def test_low_degree_exact_k1_marginal_matching():
    rng = np.random.default_rng(3)
    pop, _, _ = random_instance(rng, 6, 4, 1)
    cls = HypothesisClass((indicator_all(pop),))
    out, tr = construct_low_degree(pop, cls, 1, F(1, 10))
    fam = make_family("lowdegree", hypotheses=cls, degree=1, outcome_space=pop.space)
    assert audit_oi(pop, out, fam).value <= F(1, 10)
    truth = pop.outcome_marginal()
    for o in range(pop.space.size):
        got = sum(F(pop.weight[j]) * F(out.values[j].weights[o]) for j in pop.ids)
        assert abs(got - F(truth.weights[o])) <= F(1, 10)


def test_low_degree_ground_truth_immediate():
    rng = np.random.default_rng(4)
    pop, cls, _ = random_instance(rng, 5, 2, 2)
    fam = make_family("lowdegree", hypotheses=cls, degree=2, outcome_space=pop.space)
    gt = pop.ground_truth_predictor()
    out, tr = construct_exact(pop, fam, F(1, 10), rule=mwu_rule(pop.space, 0.1),
                              initial=gt)
    assert tr.iteration_count == 0


def test_low_degree_iteration_bound_scales_with_log_ell():
    eps = F(1, 5)
    counts = {}
    for ell in (4, 8):
        pop, cls, _ = random_instance(np.random.default_rng(ell), 6, ell, 2)
        out, tr = construct_low_degree(pop, cls, 2, eps)
        cap = math.ceil(2 * math.log(ell) / float(eps) ** 2)
        assert tr.iteration_count <= cap
        counts[ell] = cap
    assert counts[8] / counts[4] == pytest.approx(math.log(8) / math.log(4), abs=0.02)


def test_sampled_failure_path_carries_transcript(monkeypatch):
    import multifair.construct as construct_mod
    from multifair.errors import SampledRunFailureError

    pop, cls, pred = fixture_two_point()
    fam = make_family("basic", hypotheses=cls, grid=identity_grid())
    stubborn = fam.members()[0]

    def always_fires(family, cfg, samples, pop_, predictor):
        return stubborn, 1.0

    monkeypatch.setattr(construct_mod, "wal_erm", always_fires)
    with pytest.raises(SampledRunFailureError) as exc:
        construct_mod.construct_sampled(pop, fam, 0.5, beta=0.05,
                                        rng=np.random.default_rng(0), seed=0)
    tr = exc.value.transcript
    assert tr is not None and not tr.succeeded
    assert tr.iteration_count > 0


def test_pgd_accepts_arbitrary_start():
    pop, cls, _ = random_instance(np.random.default_rng(21), 5, 2, 2)
    fam = make_family("mc", hypotheses=cls, grid=identity_grid())
    start = Predictor({j: OutcomeDist.bernoulli(F(9, 10)) for j in pop.ids})
    rule = pgd_rule(pop.space, 0.05)
    out, tr = construct_exact(pop, fam, F(1, 10), rule=rule, initial=start)
    assert tr.final_audit <= F(1, 10)


def test_mwu_transcripts_not_longer_than_pgd_on_suite():
    # at 8 outcomes the entropy geometry converges in fewer updates
    eps = F(1, 8)
    mwu_total = 0
    pgd_total = 0
    for seed in range(6):
        pop, cls, _ = random_instance(np.random.default_rng(400 + seed), 8, 8, 3)
        grid = make_grid_with_denominator(pop.space, 2)
        fam = make_family("mc", hypotheses=cls, grid=grid)
        _, tr_m = construct_exact(pop, fam, eps,
                                  rule=mwu_rule(pop.space, float(eps)))
        _, tr_p = construct_exact(pop, fam, eps,
                                  rule=pgd_rule(pop.space, float(eps) / 8))
        mwu_total += tr_m.iteration_count
        pgd_total += tr_p.iteration_count
    assert mwu_total <= pgd_total


def test_low_degree_sampled_mode_counts():
    from multifair.construct import low_degree_sample_count
    from multifair.oi import monomial_multisets
    rng = np.random.default_rng(77)
    pop, cls, _ = random_instance(rng, 5, 2, 2)
    vc = vc_dimension(cls)
    n = low_degree_sample_count(0.2, 0.1, vc, 2, 2)
    m_k = len(monomial_multisets(2, 2))
    assert n == math.ceil(8 * (vc + math.log(2 * 2 * m_k / 0.1)) / 0.01)
    out, tr = construct_low_degree(pop, cls, 2, 0.2, mode="sampled",
                                   rng=np.random.default_rng(1), beta=0.1)
    for rec in tr.iterations:
        assert rec.samples_drawn == n
    fam = make_family("lowdegree", hypotheses=cls, degree=2, outcome_space=pop.space)
    assert audit_oi(pop, out, fam).value <= F(2, 10) or not tr.succeeded


def test_post_update_audit_snapshots_recorded():
    pop, cls, _ = random_instance(np.random.default_rng(88), 6, 4, 3)
    grid = make_grid_with_denominator(pop.space, 2)
    fam = make_family("mc", hypotheses=cls, grid=grid)
    out, tr = construct_exact(pop, fam, F(1, 8), rule=mwu_rule(pop.space, 1 / 8))
    if tr.iterations:
        assert all(r.post_update_audit is not None for r in tr.iterations)
        assert tr.iterations[-1].post_update_audit == tr.final_audit
