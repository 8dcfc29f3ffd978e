"""Synthetic environment and replay harness for the recommendation trial loop.

Each trial draws a situation from the environment stream, retrieves the
nearest past situation from the case base, lets the policy pick N documents
among that situation's documents, draws Bernoulli clicks from the ground
truth of the situation's cluster and records the rewards under the current
situation.
"""

from __future__ import annotations

import csv
import io
import itertools
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .policies import (EGState, PolicyConfig, PolicyKind, SelectionContext,
                       contextual_select, effective_epsilon, select_documents)
from .situation import (ContextTaxonomies, CriticalSituationSet, SimilarityWeights,
                        Situation, SituationIndex, UNIT_WEIGHTS)
from .taxonomy import Dimension, Taxonomy, generate_taxonomy
from .usermodel import CaseBase, DocumentStats

LAYOUTS = ("head", "tail", "random")


@dataclass(frozen=True)
class EnvironmentConfig:
    """Shape of a synthetic environment.

    Documents of a cluster fall in three tiers: ``best_docs`` at ``p_best``,
    ``poor_docs`` at ``p_poor`` and the rest drawn uniformly from
    ``p_regular``. The layout decides where the best documents sit in id
    order: ``head`` puts them first, ``tail`` after the regular documents.
    """

    seed: int = 20121001
    taxonomy_branching: tuple[int, ...] = (3, 3, 4)
    clusters: int = 8
    critical_clusters: int = 4
    perturbed_dims: tuple[int, ...] = (1, 1, 2)
    situation_count: int = 400
    docs_per_situation: int = 30
    best_docs: int = 2
    poor_docs: int = 18
    p_best: float = 0.95
    p_regular: tuple[float, float] = (0.3, 0.5)
    p_poor: float = 0.02
    p_foreign: float = 0.02
    critical_layout: str = "head"
    other_layout: str = "tail"
    prior_clicks: int = 0
    prior_recommendations: int = 0
    new_situation_rate: float = 0.5
    cluster_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "taxonomy_branching", tuple(int(b) for b in self.taxonomy_branching))
        object.__setattr__(self, "perturbed_dims", tuple(int(k) for k in self.perturbed_dims))
        object.__setattr__(self, "p_regular", tuple(float(p) for p in self.p_regular))
        if self.cluster_weights is not None:
            object.__setattr__(self, "cluster_weights", tuple(float(w) for w in self.cluster_weights))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if len(self.taxonomy_branching) < 2 or any(b < 1 for b in self.taxonomy_branching):
            out.append("taxonomy_branching needs >= 2 levels of positive fan-out")
        if self.clusters < 1:
            out.append("clusters must be >= 1")
        if not 0 <= self.critical_clusters <= self.clusters:
            out.append("critical_clusters must lie in [0, clusters]")
        if any(not 1 <= k <= 3 for k in self.perturbed_dims) or not self.perturbed_dims:
            out.append("perturbed_dims entries must lie in [1, 3]")
        if self.situation_count < 1:
            out.append("situation_count must be >= 1")
        if self.docs_per_situation < 1:
            out.append("docs_per_situation must be >= 1")
        if self.best_docs < 0 or self.poor_docs < 0 or self.best_docs + self.poor_docs > self.docs_per_situation:
            out.append("best_docs + poor_docs must not exceed docs_per_situation")
        for name in ("p_best", "p_poor", "p_foreign"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                out.append(f"{name} must lie in [0, 1]")
        lo, hi = self.p_regular if len(self.p_regular) == 2 else (-1, -1)
        if not 0.0 <= lo <= hi <= 1.0:
            out.append("p_regular must be 'low, high' with 0 <= low <= high <= 1")
        for name in ("critical_layout", "other_layout"):
            if getattr(self, name) not in LAYOUTS:
                out.append(f"{name} must be one of {LAYOUTS}")
        if self.prior_clicks < 0 or self.prior_recommendations < self.prior_clicks:
            out.append("prior counts need 0 <= prior_clicks <= prior_recommendations")
        if not 0.0 <= self.new_situation_rate <= 1.0:
            out.append("new_situation_rate must lie in [0, 1]")
        if self.cluster_weights is not None:
            if len(self.cluster_weights) != self.clusters:
                out.append("cluster_weights needs one weight per cluster")
            elif any(w < 0 for w in self.cluster_weights) or sum(self.cluster_weights) <= 0:
                out.append("cluster_weights must be >= 0 with a positive sum")
        return out


def decoy_environment_config(**overrides) -> EnvironmentConfig:
    """Greedy trap: every cluster lists ten decoys (click prob 0.3) that
    already hold early wins ahead of ten unseen documents at 0.8."""
    params = dict(clusters=5, critical_clusters=2, situation_count=200,
                  docs_per_situation=20, best_docs=10, poor_docs=0, p_best=0.8,
                  p_regular=(0.3, 0.3), critical_layout="tail", other_layout="tail",
                  prior_clicks=1, prior_recommendations=1)
    params.update(overrides)
    return EnvironmentConfig(**params)


@dataclass
class Cluster:
    name: str
    prototype: Situation
    critical: bool
    documents: list[str]
    click_probs: np.ndarray
    tiers: list[str]
    variants: list[Situation] = field(default_factory=list)


@dataclass
class Environment:
    config: EnvironmentConfig
    taxonomies: ContextTaxonomies
    clusters: list[Cluster]
    situations: list[Situation]
    situation_cluster: dict[Situation, int]
    documents: list[str]
    click_table: np.ndarray  # clusters x documents

    def __post_init__(self):
        self.doc_index = {d: i for i, d in enumerate(self.documents)}

    def critical_seeds(self) -> list[Situation]:
        return [c.prototype for c in self.clusters if c.critical]

    def bootstrap_case_base(self) -> CaseBase:
        """One entry per cluster prototype, carrying the configured prior counts
        on the first regular-tier documents."""
        cfg = self.config
        entries = []
        for c in self.clusters:
            docs = {d: DocumentStats() for d in c.documents}
            if cfg.prior_recommendations:
                for d, tier in zip(c.documents, c.tiers):
                    if tier == "regular":
                        docs[d] = DocumentStats(cfg.prior_clicks, cfg.prior_recommendations)
            entries.append((c.prototype, docs))
        return CaseBase(entries)

    def click_probability(self, situation: Situation, doc: str) -> float:
        return float(self.click_table[self.situation_cluster[situation], self.doc_index[doc]])

    def situation_stream(self, length: int, rng: np.random.Generator) -> list[int]:
        """Indices into ``situations``.

        Each trial picks a cluster by weight, then an unseen variant with
        probability ``new_situation_rate`` (always, for a cluster with no
        seen variant yet), otherwise a uniformly chosen seen variant.
        """
        cfg = self.config
        k = len(self.clusters)
        weights = np.asarray(cfg.cluster_weights if cfg.cluster_weights else [1.0] * k, dtype=float)
        weights = weights / weights.sum()
        position = {s: i for i, s in enumerate(self.situations)}
        unseen = [[position[v] for v in c.variants] for c in self.clusters]
        seen: list[list[int]] = [[] for _ in range(k)]
        draws = rng.random((length, 3))
        cdf = np.cumsum(weights)
        out = []
        for u_cluster, u_new, u_pick in draws:
            c = min(int(np.searchsorted(cdf, u_cluster * cdf[-1], side="right")), k - 1)
            if unseen[c] and (not seen[c] or u_new < cfg.new_situation_rate):
                s = unseen[c].pop(int(u_pick * len(unseen[c])))
                seen[c].append(s)
            else:
                s = seen[c][int(u_pick * len(seen[c]))]
            out.append(s)
        return out

    def gold_clustering(self, size: int, rng: np.random.Generator) -> "GoldClustering":
        """Labelled sample of distinct situations; labels are cluster names."""
        size = min(size, len(self.situations))
        picks = sorted(rng.choice(len(self.situations), size=size, replace=False))
        sample = [self.situations[i] for i in picks]
        labels = [self.clusters[self.situation_cluster[s]].name for s in sample]
        return GoldClustering(sample, labels)


def _regions(t: Taxonomy) -> list[str]:
    """Internal concepts with at least one leaf child."""
    parents = {t.parent(c) for c in t if t.parent(c) is not None}
    return sorted({t.parent(c) for c in t if c not in parents and t.parent(c) is not None},
                  key=lambda c: (t.depth(c), c))


def _group(t: Taxonomy, region: str) -> str:
    p = t.parent(region)
    return region if p is None else p


def _layout(rng: np.random.Generator, cfg: EnvironmentConfig, layout: str
            ) -> tuple[np.ndarray, list[str]]:
    n_regular = cfg.docs_per_situation - cfg.best_docs - cfg.poor_docs
    best = [(cfg.p_best, "best")] * cfg.best_docs
    poor = [(cfg.p_poor, "poor")] * cfg.poor_docs
    regular = [(float(p), "regular")
               for p in rng.uniform(cfg.p_regular[0], cfg.p_regular[1], size=n_regular)]
    if layout == "head":
        docs = best + regular + poor
    elif layout == "tail":
        rest = best + poor
        docs = regular + [rest[i] for i in rng.permutation(len(rest))]
    else:
        everything = best + regular + poor
        docs = [everything[i] for i in rng.permutation(len(everything))]
    return np.array([p for p, _ in docs]), [tier for _, tier in docs]


def generate_environment(cfg: EnvironmentConfig,
                         taxonomies: ContextTaxonomies | None = None,
                         critical_situations: Sequence[Situation] | None = None) -> Environment:
    """Build taxonomies (unless given), situation clusters and the click model.

    Critical clusters occupy distinct taxonomy groups; every other cluster
    copies a critical cluster's regions and moves ``perturbed_dims`` of its
    dimensions to regions in other groups, so it stays recognisably close
    to, but below, the critical archetype. Expert-declared
    ``critical_situations`` replace the generated critical archetypes.
    """
    rng = np.random.default_rng(cfg.seed)
    if critical_situations is not None and taxonomies is None:
        raise ValueError("critical situations need the taxonomies they refer to")
    if taxonomies is None:
        taxonomies = ContextTaxonomies(*(generate_taxonomy(dim, cfg.taxonomy_branching)
                                         for dim in Dimension))
    regions = [_regions(t) for t in taxonomies]
    if any(not r for r in regions):
        raise ValueError("every taxonomy needs at least one internal concept")

    def pick_region(dim: int, avoid_groups: set[str]) -> str:
        pool = [r for r in regions[dim] if _group(taxonomies[dim], r) not in avoid_groups]
        pool = pool or regions[dim]
        return pool[int(rng.integers(len(pool)))]

    protos: list[tuple[str, str, str]] = []
    used_groups: list[set[str]] = [set(), set(), set()]
    if critical_situations is not None:
        for s in dict.fromkeys(Situation(*c) for c in critical_situations):
            taxonomies.validate(s)
            for dim in range(3):
                used_groups[dim].add(_group(taxonomies[dim], s[dim]))
            protos.append(tuple(s))
        n_crit = len(protos)
    else:
        n_crit = cfg.critical_clusters
        for _ in range(n_crit):
            triple = []
            for dim in range(3):
                r = pick_region(dim, used_groups[dim])
                used_groups[dim].add(_group(taxonomies[dim], r))
                triple.append(r)
            protos.append(tuple(triple))
    n_clusters = max(cfg.clusters, n_crit)
    perturb = itertools.cycle(cfg.perturbed_dims)
    attempts = 0
    while len(protos) < n_clusters:
        attempts += 1
        if attempts > 1000 * n_clusters:
            raise ValueError("taxonomies too small for the requested number of clusters")
        if n_crit:
            base = list(protos[(len(protos) - n_crit) % n_crit])
            dims = rng.permutation(3)[:next(perturb)]
        else:
            base = [None, None, None]
            dims = range(3)
        for dim in dims:
            # leave the groups of every critical archetype on that dimension
            base[dim] = pick_region(int(dim), used_groups[dim])
        triple = tuple(base)
        if triple not in protos:
            protos.append(triple)

    if cfg.cluster_weights is not None and len(cfg.cluster_weights) != n_clusters:
        raise ValueError(f"cluster_weights needs {n_clusters} entries")
    clusters = []
    documents = []
    per_cluster = np.full(n_clusters, cfg.situation_count // n_clusters)
    per_cluster[: cfg.situation_count % n_clusters] += 1
    for k, proto in enumerate(protos):
        critical = k < n_crit
        docs = [f"doc{k:02d}_{j:03d}" for j in range(cfg.docs_per_situation)]
        documents.extend(docs)
        probs, tiers = _layout(rng, cfg, cfg.critical_layout if critical else cfg.other_layout)
        combos = list(itertools.product(*(taxonomies[d].leaves_under(proto[d]) for d in range(3))))
        take = max(1, min(int(per_cluster[k]), len(combos)))
        chosen = sorted(rng.choice(len(combos), size=take, replace=False))
        clusters.append(Cluster(
            name=f"{'critical' if critical else 'cluster'}{k:02d}",
            prototype=Situation(*proto),
            critical=critical,
            documents=docs,
            click_probs=probs,
            tiers=tiers,
            variants=[Situation(*combos[i]) for i in chosen],
        ))

    situations = []
    situation_cluster = {}
    for k, c in enumerate(clusters):
        for v in c.variants:
            situations.append(v)
            situation_cluster[v] = k
        situation_cluster.setdefault(c.prototype, k)
    doc_index = {d: i for i, d in enumerate(documents)}
    table = np.full((len(clusters), len(documents)), cfg.p_foreign)
    for k, c in enumerate(clusters):
        for d, p in zip(c.documents, c.click_probs):
            table[k, doc_index[d]] = p
    return Environment(cfg, taxonomies, clusters, situations, situation_cluster, documents, table)


@dataclass
class TrialRecord:
    iteration: int
    situation: Situation
    epsilon_used: float
    recommended: list[str]
    rewards: list[int]


@dataclass
class CtrSeries:
    """Cumulative average CTR at each checkpoint."""

    checkpoints: list[tuple[int, float]] = field(default_factory=list)
    clicks: list[int] = field(default_factory=list)
    recommendations: list[int] = field(default_factory=list)

    def add(self, iteration: int, clicks: int, recommendations: int) -> None:
        if self.checkpoints and iteration <= self.checkpoints[-1][0]:
            raise ValueError("checkpoint iterations must increase")
        ctr = clicks / recommendations if recommendations else 0.0
        self.checkpoints.append((iteration, ctr))
        self.clicks.append(clicks)
        self.recommendations.append(recommendations)

    @property
    def final(self) -> float:
        return self.checkpoints[-1][1] if self.checkpoints else 0.0

    def at(self, iteration: int) -> float:
        for it, ctr in self.checkpoints:
            if it == iteration:
                return ctr
        raise KeyError(f"no checkpoint at iteration {iteration}")


def series_from_records(records: Sequence[TrialRecord], interval: int) -> CtrSeries:
    series = CtrSeries()
    clicks = recs = 0
    for rec in records:
        clicks += sum(rec.rewards)
        recs += len(rec.rewards)
        if rec.iteration % interval == 0 or rec is records[-1]:
            series.add(rec.iteration, clicks, recs)
    return series


@dataclass
class RunResult:
    name: str
    seed: int
    series: CtrSeries
    records: list[TrialRecord] | None
    critical_growth: int
    case_base: CaseBase
    critical_set: CriticalSituationSet | None


def _stream_rngs(seed: int, policy_key: int):
    return (np.random.default_rng([seed, 0]),
            np.random.default_rng([seed, 1]),
            np.random.default_rng([seed, 2, policy_key]))


def policy_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def run_trials(env: Environment, policy: PolicyConfig, cb: CaseBase,
               sc: CriticalSituationSet | None, T: int, N: int, seed: int,
               checkpoint_interval: int = 1000, weights: SimilarityWeights = UNIT_WEIGHTS,
               key: int = 0, keep_records: bool = True
               ) -> tuple[list[TrialRecord], CtrSeries]:
    """Run T trials; ``cb`` and ``sc`` are updated in place.

    Situation stream and click draws depend only on ``seed`` (common random
    numbers across policies); policy randomness comes from a stream keyed by
    ``(seed, key)``.
    """
    if T < 1 or N < 1:
        raise ValueError("T and N must be >= 1")
    if checkpoint_interval < 1:
        raise ValueError("checkpoint_interval must be >= 1")
    if len(cb) == 0:
        raise ValueError("case base must hold at least one situation before the first trial")
    contextual = policy.kind is PolicyKind.CONTEXTUAL
    if contextual:
        if sc is None or not sc.members:
            raise ValueError("contextual policy needs a non-empty critical situation set")
        sc.check_threshold(weights)
    taxonomies = env.taxonomies
    stream_rng, click_rng, policy_rng = _stream_rngs(seed, key)
    stream = env.situation_stream(T, stream_rng)
    past = SituationIndex(weights, taxonomies, cb.situations)
    eg = policy.new_eg_state() if policy.kind is PolicyKind.EG else None
    doc_index = env.doc_index
    table = env.click_table
    n_docs = len(env.documents)

    records: list[TrialRecord] = []
    series = CtrSeries()
    clicks_total = recs_total = 0
    for t in range(1, T + 1):
        current = env.situations[stream[t - 1]]
        row = table[env.situation_cluster[current]]
        # Task 1: nearest past situation
        i, _ = past.best(current)
        nearest = past.situations[i]
        if current not in cb:
            cb.seed_from(current, nearest)
            past.append(current)
        # Task 2: choose documents
        ctx = SelectionContext(cb.candidate_documents(nearest), N, t, policy_rng)
        if contextual:
            docs, sc = contextual_select(current, sc, cb, nearest, ctx, weights, taxonomies)
            eps = effective_epsilon(policy, ctx)
        else:
            eps = effective_epsilon(policy, ctx, eg)
            docs = select_documents(ctx, eps)
        # Task 3: reward and update under the current situation
        u = click_rng.random(n_docs)
        rewards = []
        for d in docs:
            j = doc_index[d]
            r = 1 if u[j] < row[j] else 0
            rewards.append(r)
            cb.record_feedback(current, d, bool(r))
        if eg is not None:
            # one binary reward per trial: the click outcome of a random slot
            slot = int(policy_rng.random() * len(rewards))
            eg.update(eg.last_index, rewards[slot])
        clicks_total += sum(rewards)
        recs_total += len(rewards)
        if keep_records:
            records.append(TrialRecord(t, current, eps, docs, rewards))
        if t % checkpoint_interval == 0 or t == T:
            series.add(t, clicks_total, recs_total)
    return records, series


def run_policy(env: Environment, name: str, policy: PolicyConfig, T: int, N: int, seed: int,
               checkpoint_interval: int = 1000, weights: SimilarityWeights = UNIT_WEIGHTS,
               critical_seeds: Sequence[Situation] | None = None,
               keep_records: bool = False) -> RunResult:
    cb = env.bootstrap_case_base()
    seeds = env.critical_seeds() if critical_seeds is None else list(critical_seeds)
    sc = CriticalSituationSet(list(seeds), policy.threshold_b) if seeds else None
    start = len(sc) if sc is not None else 0
    records, series = run_trials(env, policy, cb, sc, T, N, seed, checkpoint_interval,
                                 weights, key=policy_key(name), keep_records=keep_records)
    growth = (len(sc) - start) if (sc is not None and policy.kind is PolicyKind.CONTEXTUAL) else 0
    return RunResult(name, seed, series, records if keep_records else None, growth, cb, sc)


COMPARISON_HEADER = ["policy", "seed", "iteration", "avg_ctr"]


@dataclass
class Comparison:
    runs: dict[tuple[str, int], RunResult]

    @property
    def policies(self) -> list[str]:
        return sorted({name for name, _ in self.runs})

    @property
    def seeds(self) -> list[int]:
        return sorted({seed for _, seed in self.runs})

    def final(self, name: str, seed: int) -> float:
        return self.runs[(name, seed)].series.final

    def mean_final(self, name: str) -> float:
        return float(np.mean([self.final(name, s) for s in self.seeds]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COMPARISON_HEADER)
        for name in self.policies:
            for seed in self.seeds:
                run = self.runs.get((name, seed))
                if run is None:
                    continue
                for it, ctr in run.series.checkpoints:
                    writer.writerow([name, seed, it, f"{ctr:.10f}"])
        return buf.getvalue()


def compare_policies(env: Environment, policies: Mapping[str, PolicyConfig], T: int, N: int,
                     seeds: Iterable[int], checkpoint_interval: int = 1000,
                     weights: SimilarityWeights = UNIT_WEIGHTS,
                     critical_seeds: Sequence[Situation] | None = None,
                     keep_records: bool = False) -> Comparison:
    """Run every policy on every seed; the seed fixes the situation stream and clicks."""
    seeds = list(seeds)
    if not policies:
        raise ValueError("no policies to compare")
    if not seeds:
        raise ValueError("no seeds given")
    runs = {}
    for name, cfg in policies.items():
        for seed in seeds:
            runs[(name, seed)] = run_policy(env, name, cfg, T, N, seed, checkpoint_interval,
                                            weights, critical_seeds, keep_records)
    return Comparison(runs)


@dataclass
class GoldClustering:
    situations: list[Situation]
    labels: list[str]

    def __post_init__(self):
        if len(self.situations) != len(self.labels):
            raise ValueError("every gold situation needs exactly one label")


@dataclass(frozen=True)
class SweepPoint:
    threshold_b: float
    precision: float
    predicted_pairs: int

    @property
    def vacuous(self) -> bool:
        return self.predicted_pairs == 0


SWEEP_HEADER = ["threshold_b", "precision", "predicted_pairs"]


def pairwise_similarities(situations: Sequence[Situation], w: SimilarityWeights,
                          taxonomies: ContextTaxonomies) -> np.ndarray:
    index = SituationIndex(w, taxonomies, situations)
    return np.vstack([index.scores(s) for s in situations]) if situations else np.empty((0, 0))


def threshold_sweep(gold: GoldClustering, w: SimilarityWeights, taxonomies: ContextTaxonomies,
                    b_values: Iterable[float]) -> list[SweepPoint]:
    """Pairwise precision of "similar iff sim >= B" against the gold groups.

    A threshold with no predicted pair scores precision 0.
    """
    if not gold.situations:
        raise ValueError("gold clustering is empty")
    b_values = [float(b) for b in b_values]
    for b in b_values:
        if not 0.0 <= b <= w.total + 1e-12:
            raise ValueError(f"threshold {b} outside [0, {w.total}]")
    sims = pairwise_similarities(gold.situations, w, taxonomies)
    iu = np.triu_indices(len(gold.situations), k=1)
    pair_sims = sims[iu]
    labels = np.asarray(gold.labels, dtype=object)
    same = labels[iu[0]] == labels[iu[1]]
    out = []
    for b in b_values:
        predicted = pair_sims >= b
        n_pred = int(predicted.sum())
        tp = int((predicted & same).sum())
        out.append(SweepPoint(b, tp / n_pred if n_pred else 0.0, n_pred))
    return out


def best_threshold(points: Sequence[SweepPoint]) -> SweepPoint:
    """Highest precision; the smallest threshold wins ties."""
    if not points:
        raise ValueError("empty sweep")
    return max(points, key=lambda p: (p.precision, -p.threshold_b))


def sweep_to_csv(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for p in points:
        writer.writerow([f"{p.threshold_b:.4f}", f"{p.precision:.10f}", p.predicted_pairs])
    return buf.getvalue()


def b_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid, rounded to dodge float drift at the endpoints."""
    if step <= 0:
        raise ValueError("step must be > 0")
    n = int(np.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 10) for k in range(n + 1)]
