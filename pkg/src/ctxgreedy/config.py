"""Run-config files: ``[environment]``, ``[policy.<name>]`` and ``[sweep]`` sections.

Parsing collects every problem it finds (with file and line) instead of
stopping at the first, so ``validate`` can report them all at once.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .policies import PolicyConfig, PolicyKind
from .simulator import EnvironmentConfig, b_grid
from .situation import (ContextTaxonomies, SimilarityWeights, Situation,
                        parse_critical_situations)
from .taxonomy import Dimension, TaxonomyError, load_taxonomy

ENV_KEYS = {
    # run protocol
    "iterations", "list_size", "seeds", "checkpoint_interval",
    "alpha_location", "alpha_time", "alpha_social",
    # input files
    "location_taxonomy", "time_taxonomy", "social_taxonomy", "critical_seed",
    # synthetic environment
    "seed", "taxonomy_branching", "clusters", "critical_clusters", "perturbed_dims",
    "situation_count", "docs_per_situation", "best_docs", "poor_docs", "p_best",
    "p_regular", "p_poor", "p_foreign", "critical_layout", "other_layout",
    "prior_clicks", "prior_recommendations", "new_situation_rate", "cluster_weights",
}
POLICY_KEYS = {"policy", "epsilon", "epsilon0", "total_iterations", "step", "period",
               "eg_candidates", "eg_floor", "eg_rate", "threshold_b"}
SWEEP_KEYS = {"b_start", "b_stop", "b_step", "gold_size", "gold_seed"}

_INT_ENV = {"seed", "clusters", "critical_clusters", "situation_count", "docs_per_situation",
            "best_docs", "poor_docs", "prior_clicks", "prior_recommendations"}
_FLOAT_ENV = {"p_best", "p_poor", "p_foreign", "new_situation_rate"}
_INT_LIST_ENV = {"taxonomy_branching", "perturbed_dims"}
_FLOAT_LIST_ENV = {"p_regular", "cluster_weights"}


@dataclass
class ConfigIssue:
    path: str
    line: int | None
    message: str

    def __str__(self) -> str:
        where = f"{self.path}:{self.line}" if self.line else self.path
        return f"{where}: {self.message}"


class ConfigError(Exception):
    def __init__(self, issues: list[ConfigIssue]):
        self.issues = issues
        super().__init__("\n".join(str(i) for i in issues))


@dataclass
class SweepConfig:
    b_values: list[float]
    gold_size: int = 200
    gold_seed: int = 0


@dataclass
class RunConfig:
    path: Path
    environment: EnvironmentConfig
    policies: dict[str, PolicyConfig]
    iterations: int = 10000
    list_size: int = 10
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    checkpoint_interval: int = 1000
    weights: SimilarityWeights = field(default_factory=SimilarityWeights)
    taxonomies: ContextTaxonomies | None = None
    critical_seeds: list[Situation] | None = None
    sweep: SweepConfig | None = None

    def with_seed(self, seed: int) -> "RunConfig":
        fields = {k: getattr(self.environment, k) for k in self.environment.__dataclass_fields__}
        fields["seed"] = seed
        out = RunConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        out.environment = EnvironmentConfig(**fields)
        return out


def _key_lines(text: str) -> tuple[dict[str, int], dict[tuple[str, str], int]]:
    sections: dict[str, int] = {}
    keys: dict[tuple[str, str], int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, lineno)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and current is not None:
            keys.setdefault((current, m.group(1).strip()), lineno)
    return sections, keys


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _parse_seeds(value: str) -> list[int]:
    out = []
    for part in _split(value):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty seed list")
    if any(s < 0 or s >= 2 ** 64 for s in out):
        raise ValueError("seeds must be unsigned 64-bit integers")
    return out


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a run-config file; raises ConfigError listing every issue."""
    path = Path(path)
    issues: list[ConfigIssue] = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([ConfigIssue(str(path), None, f"cannot read config: {exc.strerror or exc}")])
    except UnicodeDecodeError:
        raise ConfigError([ConfigIssue(str(path), None, "config is not valid UTF-8")])

    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       comment_prefixes=("#", ";"), default_section="\x00")
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError([ConfigIssue(str(path), line, exc.message.splitlines()[0])])

    section_lines, key_lines = _key_lines(text)
    src = str(path)

    def issue(section: str, key: str | None, message: str) -> None:
        line = key_lines.get((section, key)) if key else section_lines.get(section)
        label = f"[{section}] {key}" if key else f"[{section}]"
        issues.append(ConfigIssue(src, line or section_lines.get(section), f"{label}: {message}"))

    for section in parser.sections():
        if section not in ("environment", "sweep") and not section.startswith("policy."):
            issue(section, None, "unknown section")

    # [environment]
    env = dict(parser["environment"]) if parser.has_section("environment") else {}
    if not parser.has_section("environment"):
        issues.append(ConfigIssue(src, None, "missing [environment] section"))
    env_kwargs: dict = {}
    run_kwargs: dict = {}
    alphas = {}
    files = {}
    for key, value in env.items():
        if key not in ENV_KEYS:
            issue("environment", key, "unknown key")
            continue
        try:
            if key in _INT_ENV:
                env_kwargs[key] = int(value)
            elif key in _FLOAT_ENV:
                env_kwargs[key] = float(value)
            elif key in _INT_LIST_ENV:
                env_kwargs[key] = tuple(int(v) for v in _split(value))
            elif key in _FLOAT_LIST_ENV:
                env_kwargs[key] = tuple(float(v) for v in _split(value))
            elif key in ("critical_layout", "other_layout"):
                env_kwargs[key] = value.strip()
            elif key in ("iterations", "list_size", "checkpoint_interval"):
                run_kwargs[key] = int(value)
                if run_kwargs[key] < 1:
                    raise ValueError("must be >= 1")
            elif key == "seeds":
                run_kwargs["seeds"] = _parse_seeds(value)
            elif key.startswith("alpha_"):
                alphas[key[len("alpha_"):]] = float(value)
            else:
                files[key] = value.strip()
        except ValueError as exc:
            issue("environment", key, f"invalid value {value!r} ({exc})")

    environment = None
    try:
        environment = EnvironmentConfig(**env_kwargs)
    except (ValueError, TypeError) as exc:
        issues.append(ConfigIssue(src, section_lines.get("environment"), f"[environment]: {exc}"))

    weights = SimilarityWeights()
    try:
        weights = SimilarityWeights(**alphas)
    except ValueError as exc:
        issue("environment", next(iter(f"alpha_{k}" for k in alphas), None), str(exc))

    # taxonomy and critical-situation files, relative to the config file
    taxonomies = None
    tax_paths = {d: files.get(f"{d.value}_taxonomy") for d in Dimension}
    if any(tax_paths.values()):
        loaded = []
        for dim, rel in tax_paths.items():
            if not rel:
                issue("environment", None, f"{dim.value}_taxonomy missing (all three or none)")
                continue
            tpath = (path.parent / rel)
            try:
                loaded.append(load_taxonomy(tpath.read_text(encoding="utf-8"), dim))
            except OSError as exc:
                issue("environment", f"{dim.value}_taxonomy", f"cannot read {tpath}: {exc.strerror}")
            except TaxonomyError as exc:
                issues.append(ConfigIssue(str(tpath), exc.line, str(exc).split(": ", 1)[-1]
                                          if exc.line else str(exc)))
        if len(loaded) == 3:
            taxonomies = ContextTaxonomies(*loaded)

    critical = None
    # a taxonomy that failed to load has already been reported
    tax_failed = taxonomies is None and any(tax_paths.values())
    if files.get("critical_seed") and not tax_failed:
        cpath = path.parent / files["critical_seed"]
        try:
            ctext = cpath.read_text(encoding="utf-8")
        except OSError as exc:
            issue("environment", "critical_seed", f"cannot read {cpath}: {exc.strerror}")
        else:
            try:
                critical = parse_critical_situations(ctext, taxonomies)
            except TaxonomyError as exc:
                issues.append(ConfigIssue(str(cpath), exc.line, str(exc).split(": ", 1)[-1]))
            else:
                if taxonomies is None:
                    issue("environment", "critical_seed", "needs the three taxonomy files")
                elif not critical:
                    issues.append(ConfigIssue(str(cpath), None, "no critical situations listed"))

    iterations = run_kwargs.get("iterations", 10000)

    # [policy.<name>]
    policies: dict[str, PolicyConfig] = {}
    for section in parser.sections():
        if not section.startswith("policy."):
            continue
        name = section[len("policy."):]
        values = dict(parser[section])
        bad = False
        for key in values:
            if key not in POLICY_KEYS:
                issue(section, key, "unknown key")
                bad = True
        kind_text = values.get("policy")
        if kind_text is None:
            issue(section, None, "missing 'policy' key")
            continue
        try:
            kind = PolicyKind(kind_text.strip())
        except ValueError:
            issue(section, "policy", f"unknown policy {kind_text!r}; expected one of "
                  + ", ".join(k.value for k in PolicyKind))
            continue
        kwargs: dict = {"kind": kind}
        if kind is PolicyKind.EPS_BEGINNING:
            kwargs["total_iterations"] = iterations
        if kind is PolicyKind.EPS_DECREASING_STEP:
            kwargs["epsilon"] = 0.99
        for key, value in values.items():
            if key == "policy" or key not in POLICY_KEYS:
                continue
            try:
                if key in ("total_iterations", "period"):
                    kwargs[key] = int(value)
                elif key == "eg_candidates":
                    kwargs[key] = tuple(float(v) for v in _split(value))
                else:
                    kwargs[key] = float(value)
            except ValueError:
                issue(section, key, f"invalid value {value!r}")
                bad = True
        b = kwargs.get("threshold_b")
        if b is not None and not (0 < b <= weights.total):
            issue(section, "threshold_b",
                  f"threshold_b={b} must lie in (0, {weights.total:g}] (sum of similarity weights)")
            bad = True
        if bad:
            continue
        try:
            policies[name] = PolicyConfig(**kwargs)
        except ValueError as exc:
            issue(section, None, str(exc))
    if not policies and not any(s.startswith("policy.") for s in parser.sections()):
        issues.append(ConfigIssue(src, None, "no [policy.<name>] sections"))

    # [sweep]
    sweep = None
    if parser.has_section("sweep"):
        values = dict(parser["sweep"])
        kw: dict = {}
        for key, value in values.items():
            if key not in SWEEP_KEYS:
                issue("sweep", key, "unknown key")
                continue
            try:
                kw[key] = int(value) if key in ("gold_size", "gold_seed") else float(value)
            except ValueError:
                issue("sweep", key, f"invalid value {value!r}")
        start, stop, step = kw.get("b_start", 0.0), kw.get("b_stop", weights.total), kw.get("b_step", 0.1)
        if not (0 <= start <= stop <= weights.total + 1e-12):
            issue("sweep", None, f"threshold range must lie within [0, {weights.total:g}]")
        elif step <= 0:
            issue("sweep", "b_step", "must be > 0")
        else:
            gold_size = kw.get("gold_size", 200)
            if gold_size < 1:
                issue("sweep", "gold_size", "gold sample is empty (gold_size must be >= 1)")
            sweep = SweepConfig(b_grid(start, stop, step), gold_size, kw.get("gold_seed", 0))

    if issues:
        raise ConfigError(issues)
    return RunConfig(
        path=path, environment=environment, policies=policies,
        iterations=iterations,
        list_size=run_kwargs.get("list_size", 10),
        seeds=run_kwargs.get("seeds", list(range(10))),
        checkpoint_interval=run_kwargs.get("checkpoint_interval", 1000),
        weights=weights, taxonomies=taxonomies, critical_seeds=critical, sweep=sweep,
    )
