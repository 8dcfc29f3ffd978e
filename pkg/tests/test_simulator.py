import itertools

import numpy as np
import pytest

from ctxgreedy.policies import PolicyConfig
from ctxgreedy.simulator import (CtrSeries, EnvironmentConfig, GoldClustering, b_grid,
                                 best_threshold, compare_policies, decoy_environment_config,
                                 generate_environment, run_policy, run_trials,
                                 series_from_records, sweep_to_csv, threshold_sweep)
from ctxgreedy.situation import (CriticalSituationSet, SimilarityWeights, Situation,
                                 criticality)
from ctxgreedy.taxonomy import Dimension, Taxonomy
from ctxgreedy.usermodel import CaseBase, DocumentStats
from oracles import situation_sim_oracle
from planted import planted_world

UNIT = SimilarityWeights()


@pytest.fixture(scope="module")
def env():
    return generate_environment(EnvironmentConfig())


# -- environment -------------------------------------------------------------------

def test_environment_is_deterministic():
    a = generate_environment(EnvironmentConfig(seed=5))
    b = generate_environment(EnvironmentConfig(seed=5))
    assert a.situations == b.situations
    assert a.documents == b.documents
    assert a.click_table.tobytes() == b.click_table.tobytes()
    assert [t.to_text() for t in a.taxonomies] == [t.to_text() for t in b.taxonomies]
    assert a.bootstrap_case_base().to_csv() == b.bootstrap_case_base().to_csv()
    c = generate_environment(EnvironmentConfig(seed=6))
    assert c.click_table.tobytes() != a.click_table.tobytes()


def test_config_echo():
    e = generate_environment(EnvironmentConfig(situation_count=100, docs_per_situation=15,
                                               best_docs=2, poor_docs=5))
    assert len(e.situations) == 100
    assert len(set(e.situations)) == 100
    for c in e.clusters:
        assert len(c.documents) == 15
    for s, docs in e.bootstrap_case_base().items():
        assert len(docs) == 15


def test_default_environment_shape(env):
    crit = [c for c in env.clusters if c.critical]
    assert len(env.clusters) >= 5 and len(crit) >= 2
    for c in env.clusters:
        probs = np.sort(c.click_probs)
        assert probs[-1] - np.median(probs) >= 0.4
        assert ((0 <= c.click_probs) & (c.click_probs <= 1)).all()
    # every variant is at least as close to its own prototype as to any other
    tax = env.taxonomies
    from ctxgreedy.situation import situation_sim
    for s in env.situations[::17]:
        own = env.clusters[env.situation_cluster[s]].prototype
        sims = {c.prototype: situation_sim(s, c.prototype, UNIT, tax) for c in env.clusters}
        assert sims[own] == max(sims.values())


def test_invalid_environment_configs():
    for bad in (dict(p_best=1.5), dict(situation_count=0), dict(best_docs=20, poor_docs=20),
                dict(critical_clusters=9), dict(critical_layout="middle")):
        with pytest.raises(ValueError):
            EnvironmentConfig(**bad)


def test_bernoulli_click_model():
    """Forced exploitation of a 0.8 document clicks 0.8 +- 0.03 of the time."""
    cfg = EnvironmentConfig(clusters=2, critical_clusters=1, situation_count=2,
                            docs_per_situation=3, best_docs=1, poor_docs=2, p_best=0.8,
                            p_poor=0.0, p_foreign=0.0, new_situation_rate=0.0)
    e = generate_environment(cfg)
    best = [c.documents[c.tiers.index("best")] for c in e.clusters]
    e.click_table[1, e.doc_index[best[1]]] = 0.1
    entries = []
    for c, b in zip(e.clusters, best):
        docs = {d: DocumentStats() for d in c.documents}
        docs[b] = DocumentStats(1, 1)
        entries.append((c.variants[0], docs))
    cb = CaseBase(entries)
    records, _ = run_trials(e, PolicyConfig.exploit(), cb, None, 20000, 1, seed=3)
    for k, rate in ((0, 0.8), (1, 0.1)):
        mine = [r for r in records if e.situation_cluster[r.situation] == k]
        assert all(r.recommended == [best[k]] for r in mine)
        assert len(mine) >= 9000
        assert abs(np.mean([r.rewards[0] for r in mine]) - rate) <= 0.03


# -- trial loop --------------------------------------------------------------------

def test_checkpoints_and_denominator(env):
    records, series = run_trials(env, PolicyConfig.eps_greedy(0.5), env.bootstrap_case_base(),
                                 None, 10000, 10, seed=1)
    assert [it for it, _ in series.checkpoints] == list(range(1000, 10001, 1000))
    assert series.recommendations[-1] == 100000
    assert all(len(r.recommended) == len(r.rewards) == 10 for r in records)
    again = series_from_records(records, 1000)
    assert again == series
    clicks = sum(sum(r.rewards) for r in records)
    assert series.final == clicks / 100000


def test_uneven_horizon_gets_final_checkpoint(env):
    _, series = run_trials(env, PolicyConfig.exploit(), env.bootstrap_case_base(), None,
                           2500, 3, seed=0)
    assert [it for it, _ in series.checkpoints] == [1000, 2000, 2500]


def test_always_click_environment():
    cfg = EnvironmentConfig(p_best=1.0, p_regular=(1.0, 1.0), p_poor=1.0, p_foreign=1.0,
                            situation_count=50)
    e = generate_environment(cfg)
    _, series = run_trials(e, PolicyConfig.eps_greedy(0.3), e.bootstrap_case_base(), None,
                           3000, 10, seed=0)
    assert all(ctr == 1.0 for _, ctr in series.checkpoints)


def test_exploitation_vs_full_exploration():
    cfg = EnvironmentConfig(clusters=1, critical_clusters=0, situation_count=1,
                            docs_per_situation=2, best_docs=1, poor_docs=1, p_best=0.9,
                            p_poor=0.1, new_situation_rate=0.0)
    e = generate_environment(cfg)
    c = e.clusters[0]
    good = c.documents[c.tiers.index("best")]

    def seeded():
        docs = {d: DocumentStats() for d in c.documents}
        docs[good] = DocumentStats(1, 1)
        return CaseBase([(c.variants[0], docs)])
    _, s_exploit = run_trials(e, PolicyConfig.exploit(), seeded(), None, 10000, 1, seed=4)
    _, s_explore = run_trials(e, PolicyConfig.eps_greedy(1.0), seeded(), None, 10000, 1, seed=4)
    assert s_exploit.final == pytest.approx(0.9, abs=0.02)
    assert s_explore.final == pytest.approx(0.5, abs=0.02)
    assert s_exploit.final - s_explore.final >= 0.3


def test_run_trials_preconditions(env):
    with pytest.raises(ValueError):
        run_trials(env, PolicyConfig.exploit(), CaseBase(), None, 10, 1, seed=0)
    with pytest.raises(ValueError):
        run_trials(env, PolicyConfig.contextual(), env.bootstrap_case_base(), None, 10, 1, seed=0)
    with pytest.raises(ValueError):
        run_trials(env, PolicyConfig.exploit(), env.bootstrap_case_base(), None, 0, 1, seed=0)


def test_runs_are_reproducible(env):
    for cfg in (PolicyConfig.eg(), PolicyConfig.contextual(), PolicyConfig.eps_greedy(0.5)):
        a = run_policy(env, "p", cfg, 1500, 10, seed=9, keep_records=True)
        b = run_policy(env, "p", cfg, 1500, 10, seed=9, keep_records=True)
        assert a.records == b.records
        assert a.case_base.to_csv() == b.case_base.to_csv()


def test_common_random_numbers(env):
    """Two greedy policies under different names see the same stream and clicks."""
    a = run_policy(env, "greedy_a", PolicyConfig.exploit(), 2000, 10, seed=2, keep_records=True)
    b = run_policy(env, "greedy_b", PolicyConfig.eps_greedy(0.0), 2000, 10, seed=2,
                   keep_records=True)
    assert a.records == b.records
    c = run_policy(env, "greedy_a", PolicyConfig.eps_greedy(0.5), 2000, 10, seed=2,
                   keep_records=True)
    assert [r.situation for r in c.records] == [r.situation for r in a.records]


def test_contextual_epsilon_zero_iff_critical(env):
    res = run_policy(env, "contextual", PolicyConfig.contextual(2.4), 3000, 10, seed=5,
                     keep_records=True)
    replay = CriticalSituationSet(env.critical_seeds(), 2.4)
    critical_trials = 0
    for r in res.records:
        crit = criticality(r.situation, replay, UNIT, env.taxonomies)
        assert (r.epsilon_used == 0.0) == crit.is_critical
        if crit.is_critical:
            critical_trials += 1
            replay.add(r.situation)
        else:
            assert r.epsilon_used == pytest.approx(crit.epsilon)
    assert critical_trials == sum(r.epsilon_used == 0.0 for r in res.records)
    assert replay.members == res.critical_set.members
    assert res.critical_growth == len(replay) - len(env.critical_seeds())


# -- comparison --------------------------------------------------------------------

def test_single_policy_single_seed(env):
    cfg = PolicyConfig.eps_greedy(0.5)
    table = compare_policies(env, {"e": cfg}, 2000, 10, [3])
    direct = run_policy(env, "e", cfg, 2000, 10, 3)
    assert table.runs[("e", 3)].series == direct.series
    assert table.mean_final("e") == direct.series.final


def test_comparison_csv(env):
    roster = {"zeta": PolicyConfig.exploit(), "alpha": PolicyConfig.eps_greedy(0.9)}
    a = compare_policies(env, roster, 2000, 5, [1, 0], checkpoint_interval=500).to_csv()
    b = compare_policies(env, roster, 2000, 5, [1, 0], checkpoint_interval=500).to_csv()
    assert a == b
    rows = [line.split(",") for line in a.splitlines()]
    assert rows[0] == ["policy", "seed", "iteration", "avg_ctr"]
    keys = [(p, int(s), int(i)) for p, s, i, _ in rows[1:]]
    assert keys == sorted(keys)
    assert len(keys) == 2 * 2 * 4
    assert all(0.0 <= float(r[3]) <= 1.0 for r in rows[1:])


def test_compare_requires_inputs(env):
    with pytest.raises(ValueError):
        compare_policies(env, {}, 10, 1, [0])
    with pytest.raises(ValueError):
        compare_policies(env, {"x": PolicyConfig.exploit()}, 10, 1, [])


def test_ctr_series_checks():
    s = CtrSeries()
    s.add(10, 3, 10)
    with pytest.raises(ValueError):
        s.add(10, 4, 20)
    assert s.at(10) == 0.3
    with pytest.raises(KeyError):
        s.at(20)


# -- threshold sweep ---------------------------------------------------------------

def _chain(dim):
    parents = {"R": None}
    for branch in "XY":
        prev = "R"
        for k in range(1, 6):
            parents[f"{branch}{k}"] = prev
            prev = f"{branch}{k}"
    return Taxonomy(dim, parents)


def test_perfect_separation():
    from ctxgreedy.situation import ContextTaxonomies
    tax = ContextTaxonomies(*(_chain(d) for d in Dimension))
    s, t = Situation("X5", "X5", "X5"), Situation("Y5", "Y5", "Y5")
    gold = GoldClustering([s, s, s, t, t], list("aaabb"))
    pts = threshold_sweep(gold, UNIT, tax, b_grid(0, 3, 0.1))
    for p in pts:
        if p.threshold_b > 1.0:
            assert p.precision == 1.0 and p.predicted_pairs == 4
    assert pts[0].precision == pytest.approx(4 / 10)


def test_b_zero_is_same_group_fraction():
    tax, gold, _ = planted_world(groups=3, per_group=4)
    (p,) = threshold_sweep(gold, UNIT, tax, [0.0])
    assert p.predicted_pairs == 66
    assert p.precision == pytest.approx(3 * 6 / 66)


def test_planted_sweep_against_oracle():
    tax, gold, maps = planted_world()
    grid = b_grid(0, 3, 0.1)
    pts = threshold_sweep(gold, UNIT, tax, grid)
    pairs = [(situation_sim_oracle(maps, (1, 1, 1), a, b), la == lb)
             for (a, la), (b, lb) in itertools.combinations(zip(gold.situations, gold.labels), 2)]
    for p in pts:
        chosen = [same for sim, same in pairs if sim >= p.threshold_b - 1e-12]
        assert p.predicted_pairs == len(chosen)
        assert p.precision == pytest.approx(sum(chosen) / len(chosen) if chosen else 0.0)
    inter = max(sim for sim, same in pairs if not same)
    intra = max(sim for sim, same in pairs if same)
    best = best_threshold(pts)
    assert inter < best.threshold_b <= intra
    assert best.precision == 1.0


def test_precision_piecewise_constant():
    tax, gold, maps = planted_world(groups=4, per_group=5)
    fine = b_grid(0, 3, 0.01)
    pts = threshold_sweep(gold, UNIT, tax, fine)
    sims = sorted({round(situation_sim_oracle(maps, (1, 1, 1), a, b), 9)
                   for a, b in itertools.combinations(gold.situations, 2)})
    for p, q in zip(pts, pts[1:]):
        if p.precision != q.precision:
            assert any(p.threshold_b - 1e-9 <= s < q.threshold_b for s in sims)


def test_sweep_errors_and_csv():
    tax, gold, _ = planted_world(groups=2, per_group=2)
    with pytest.raises(ValueError):
        threshold_sweep(GoldClustering([], []), UNIT, tax, [1.0])
    with pytest.raises(ValueError):
        threshold_sweep(gold, UNIT, tax, [3.5])
    with pytest.raises(ValueError):
        GoldClustering([Situation("a", "b", "c")], [])
    pts = threshold_sweep(gold, UNIT, tax, b_grid(0, 3, 0.1))
    lines = sweep_to_csv(pts).splitlines()
    assert lines[0] == "threshold_b,precision,predicted_pairs"
    assert len(lines) == 32
    assert pts[-1].vacuous and pts[-1].precision == 0.0


def test_b_grid():
    assert len(b_grid(0, 3, 0.1)) == 31
    assert b_grid(0, 3, 0.1)[24] == 2.4
    assert b_grid(0, 1, 0.5) == [0.0, 0.5, 1.0]


def test_decoy_config():
    cfg = decoy_environment_config()
    e = generate_environment(cfg)
    for c in e.clusters:
        decoys = [p for p, t in zip(c.click_probs, c.tiers) if t == "regular"]
        best = [p for p, t in zip(c.click_probs, c.tiers) if t == "best"]
        assert decoys and all(p == 0.3 for p in decoys)
        assert best and all(p == 0.8 for p in best)
    for _, docs in e.bootstrap_case_base().items():
        seeded = [d for d, s in docs.items() if s.recommendations]
        assert all(docs[d].clicks == 1 for d in seeded) and len(seeded) == 10
