"""Exploration/exploitation policies built around epsilon-greedy list selection.

Every policy reduces to choosing an exploration probability for the current
trial; :func:`select_documents` then fills the N slots of the recommended
list, exploiting (highest CTR) or exploring (uniform pick) slot by slot.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .situation import (ContextTaxonomies, CriticalSituationSet, SimilarityWeights,
                        Situation, criticality, exploration_epsilon, register_critical)
from .usermodel import CaseBase, DocumentStats


class PolicyKind(str, enum.Enum):
    EXPLOIT = "exploit"
    EPS_GREEDY = "eps_greedy"
    EPS_BEGINNING = "eps_beginning"
    EPS_DECREASING_RATIO = "eps_decreasing_ratio"
    EPS_DECREASING_STEP = "eps_decreasing_step"
    EG = "eg"
    CONTEXTUAL = "contextual"


DEFAULT_EG_CANDIDATES = tuple(round(0.1 * k, 1) for k in range(10))


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class PolicyConfig:
    """One policy and its parameters.

    Only the fields relevant to ``kind`` are read; use the classmethod
    constructors rather than filling fields by hand.
    """

    kind: PolicyKind
    epsilon: float = 0.0
    epsilon0: float = 1.0
    total_iterations: int = 1
    step: float = 0.01
    period: int = 100
    eg_candidates: tuple[float, ...] = DEFAULT_EG_CANDIDATES
    eg_floor: float = 0.1
    eg_rate: float = 0.1
    threshold_b: float = 2.4

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        object.__setattr__(self, "eg_candidates", tuple(float(c) for c in self.eg_candidates))
        _check_unit("epsilon", self.epsilon)
        _check_unit("epsilon0", self.epsilon0)
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if not self.eg_candidates:
            raise ValueError("eg_candidates must not be empty")
        for c in self.eg_candidates:
            _check_unit("eg candidate", c)
        if not (0.0 < self.eg_floor < 1.0):
            raise ValueError("eg_floor must lie in (0, 1)")
        if not self.eg_rate > 0:
            raise ValueError("eg_rate must be > 0")
        if not self.threshold_b > 0:
            raise ValueError("threshold_b must be > 0")

    @classmethod
    def exploit(cls) -> "PolicyConfig":
        return cls(PolicyKind.EXPLOIT)

    @classmethod
    def eps_greedy(cls, epsilon: float) -> "PolicyConfig":
        return cls(PolicyKind.EPS_GREEDY, epsilon=epsilon)

    @classmethod
    def eps_beginning(cls, epsilon: float, total_iterations: int) -> "PolicyConfig":
        return cls(PolicyKind.EPS_BEGINNING, epsilon=epsilon, total_iterations=total_iterations)

    @classmethod
    def eps_decreasing_ratio(cls, epsilon0: float) -> "PolicyConfig":
        return cls(PolicyKind.EPS_DECREASING_RATIO, epsilon0=epsilon0)

    @classmethod
    def eps_decreasing_step(cls, start: float = 0.99, step: float = 0.01,
                            period: int = 100) -> "PolicyConfig":
        return cls(PolicyKind.EPS_DECREASING_STEP, epsilon=start, step=step, period=period)

    @classmethod
    def eg(cls, candidates: Sequence[float] = DEFAULT_EG_CANDIDATES, floor: float = 0.1,
           rate: float = 0.1) -> "PolicyConfig":
        return cls(PolicyKind.EG, eg_candidates=tuple(candidates), eg_floor=floor, eg_rate=rate)

    @classmethod
    def contextual(cls, threshold_b: float = 2.4) -> "PolicyConfig":
        return cls(PolicyKind.CONTEXTUAL, threshold_b=threshold_b)

    def new_eg_state(self) -> "EGState":
        return EGState(self.eg_candidates, floor=self.eg_floor, rate=self.eg_rate)


@dataclass
class SelectionContext:
    candidates: Mapping[str, DocumentStats]
    n: int
    iteration: int
    rng: np.random.Generator
    epsilon_inputs: tuple[float, float] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("list size n must be >= 1")
        if self.iteration < 1:
            raise ValueError("iteration index starts at 1")


class EGState:
    """Exponentiated-gradient weights over a finite set of epsilon values.

    Sampling probabilities mix the normalised weights with a uniform floor:
    ``p_i = (1 - floor) * w_i / sum(w) + floor / K``. Weights are held as
    logarithms so long runs of rewards cannot overflow.
    """

    def __init__(self, candidate_epsilons: Sequence[float], floor: float = 0.1,
                 rate: float = 0.1, weights: Sequence[float] | None = None):
        self.candidate_epsilons = [float(c) for c in candidate_epsilons]
        if not self.candidate_epsilons:
            raise ValueError("EG needs at least one candidate epsilon")
        for c in self.candidate_epsilons:
            _check_unit("eg candidate", c)
        if not (0.0 < floor < 1.0):
            raise ValueError("exploration floor must lie in (0, 1)")
        if not rate > 0:
            raise ValueError("learning rate must be > 0")
        self.exploration_floor = float(floor)
        self.learning_rate = float(rate)
        k = len(self.candidate_epsilons)
        if weights is None:
            self._log_w = np.zeros(k)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (k,) or np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite, positive, one per candidate")
            self._log_w = np.log(w)
        self.last_index: int | None = None

    def __len__(self) -> int:
        return len(self.candidate_epsilons)

    @property
    def log_weights(self) -> np.ndarray:
        return self._log_w.copy()

    @property
    def weights(self) -> np.ndarray:
        """Weights rescaled so the largest is 1 (the distribution is scale-free)."""
        return np.exp(self._log_w - self._log_w.max())

    def probabilities(self) -> np.ndarray:
        w = self.weights
        k = len(w)
        return (1.0 - self.exploration_floor) * w / w.sum() + self.exploration_floor / k

    def sample(self, rng: np.random.Generator) -> int:
        cdf = np.cumsum(self.probabilities())
        i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        self.last_index = min(i, len(cdf) - 1)
        return self.last_index

    def update(self, index: int, reward: int) -> "EGState":
        if not (0 <= index < len(self.candidate_epsilons)):
            raise IndexError(f"candidate index {index} out of range")
        if reward not in (0, 1):
            raise ValueError("reward must be 0 or 1")
        if reward:
            p = self.probabilities()[index]
            self._log_w[index] += self.learning_rate * reward / p
        return self


def eg_update(eg: EGState, chosen_epsilon_index: int, reward: int) -> EGState:
    return eg.update(chosen_epsilon_index, reward)


def effective_epsilon(cfg: PolicyConfig, ctx: SelectionContext, eg: EGState | None = None) -> float:
    """Exploration probability of ``cfg`` at trial ``ctx.iteration``.

    For EG this samples a candidate (recorded in ``eg.last_index``) from the
    context's generator.
    """
    t = ctx.iteration
    kind = cfg.kind
    if kind is PolicyKind.EXPLOIT:
        return 0.0
    if kind is PolicyKind.EPS_GREEDY:
        return cfg.epsilon
    if kind is PolicyKind.EPS_BEGINNING:
        return 1.0 if t <= cfg.epsilon * cfg.total_iterations else 0.0
    if kind is PolicyKind.EPS_DECREASING_RATIO:
        return min(1.0, cfg.epsilon0 / t)
    if kind is PolicyKind.EPS_DECREASING_STEP:
        value = cfg.epsilon - cfg.step * ((t - 1) // cfg.period)
        return min(cfg.epsilon, max(0.0, value))
    if kind is PolicyKind.EG:
        if eg is None:
            raise ValueError("EG policy requires an EGState")
        return eg.candidate_epsilons[eg.sample(ctx.rng)]
    if kind is PolicyKind.CONTEXTUAL:
        if ctx.epsilon_inputs is None:
            raise ValueError("contextual policy requires (nearest_critical_sim, threshold_b)")
        sim, b = ctx.epsilon_inputs
        return exploration_epsilon(sim, b)
    raise ValueError(f"unknown policy kind {kind}")


def rank_by_ctr(candidates: Mapping[str, DocumentStats]) -> list[str]:
    """Document ids by descending CTR, ties broken by ascending id."""
    return sorted(candidates, key=lambda d: (-candidates[d].ctr, d))


def select_documents(ctx: SelectionContext, epsilon: float) -> list[str]:
    """Fill ``min(n, |candidates|)`` slots without replacement.

    Each slot draws q uniform on (0, 1]; ``q > epsilon`` takes the best
    remaining document by CTR, otherwise a uniformly random remaining one.
    """
    if not ctx.candidates:
        raise ValueError("no candidate documents")
    _check_unit("epsilon", epsilon)
    remaining = rank_by_ctr(ctx.candidates)
    k = min(ctx.n, len(remaining))
    draws = ctx.rng.random(2 * k)
    chosen = []
    for slot in range(k):
        q = 1.0 - draws[2 * slot]
        if q > epsilon:
            chosen.append(remaining.pop(0))
        else:
            j = int(draws[2 * slot + 1] * len(remaining))
            chosen.append(remaining.pop(j))
    return chosen


def contextual_select(current: Situation, sc: CriticalSituationSet, cb: CaseBase,
                      nearest_past: Situation, ctx: SelectionContext,
                      w: SimilarityWeights, taxonomies: ContextTaxonomies
                      ) -> tuple[list[str], CriticalSituationSet]:
    """Exploit in critical situations, explore in proportion to dissimilarity otherwise.

    Sets ``ctx.candidates`` from the case base and ``ctx.epsilon_inputs`` to
    the (nearest critical similarity, B) pair that fixed the epsilon.
    """
    crit = criticality(current, sc, w, taxonomies)
    ctx.candidates = cb.candidate_documents(nearest_past)
    ctx.epsilon_inputs = (crit.nearest_critical_sim, sc.threshold_b)
    if crit.is_critical:
        register_critical(sc, current)
        return select_documents(ctx, 0.0), sc
    return select_documents(ctx, crit.epsilon), sc


def standard_roster(total_iterations: int = 10000, threshold_b: float = 2.4,
                 beginning_epsilon: float = 0.1) -> dict[str, PolicyConfig]:
    """The seven policies compared in the CTR experiment."""
    return {
        "exploit": PolicyConfig.exploit(),
        "eps_greedy_0.5": PolicyConfig.eps_greedy(0.5),
        "eps_greedy_0.9": PolicyConfig.eps_greedy(0.9),
        "eps_beginning": PolicyConfig.eps_beginning(beginning_epsilon, total_iterations),
        "eps_decreasing": PolicyConfig.eps_decreasing_step(0.99, 0.01, 100),
        "eg": PolicyConfig.eg(),
        "contextual": PolicyConfig.contextual(threshold_b),
    }
