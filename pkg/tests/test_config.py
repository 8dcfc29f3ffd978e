import shutil
from pathlib import Path

import pytest

from ctxgreedy.config import ConfigError, load_run_config
from ctxgreedy.policies import PolicyKind
from ctxgreedy.situation import Situation

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_shipped_configs_load():
    std = load_run_config(CONFIGS / "standard.ini")
    assert len(std.policies) == 7
    assert std.seeds == list(range(10))
    assert (std.iterations, std.list_size, std.checkpoint_interval) == (10000, 10, 1000)
    assert std.sweep is not None and len(std.sweep.b_values) == 31
    expert = load_run_config(CONFIGS / "expert" / "run.ini")
    assert expert.critical_seeds == [Situation("Restaurant", "Midday", "Client"),
                                     Situation("Company", "Morning", "Manager")]
    assert expert.taxonomies.location.depth("Le_Bistrot") == 4
    load_run_config(CONFIGS / "decoy.ini")


def test_defaults_and_policy_fields(tmp_path):
    cfg = load_run_config(write(tmp_path, """
[environment]
iterations = 500
seeds = 3, 5-7
alpha_social = 0.5

[policy.begin]
policy = eps_beginning
epsilon = 0.2

[policy.step]
policy = eps_decreasing_step

[policy.eg]
policy = eg
eg_candidates = 0.1, 0.4
eg_rate = 0.2
"""))
    assert cfg.seeds == [3, 5, 6, 7]
    assert cfg.weights.total == 2.5
    assert cfg.policies["begin"].total_iterations == 500
    assert cfg.policies["step"].epsilon == 0.99
    assert cfg.policies["eg"].eg_candidates == (0.1, 0.4)
    assert cfg.policies["eg"].kind is PolicyKind.EG
    assert cfg.sweep is None
    assert cfg.with_seed(99).environment.seed == 99
    assert cfg.environment.seed != 99


def test_every_issue_is_reported_with_lines(tmp_path):
    path = write(tmp_path, """[environment]
iterations = 100
colour = blue

[policy.a]
policy = eps_greedy
epsilon = lots

[policy.b]
policy = sometimes

[extras]
x = 1
""")
    with pytest.raises(ConfigError) as err:
        load_run_config(path)
    text = [str(i) for i in err.value.issues]
    assert any(":3:" in t and "colour" in t and "unknown key" in t for t in text)
    assert any(":7:" in t and "epsilon" in t for t in text)
    assert any(":10:" in t and "sometimes" in t for t in text)
    assert any(":12:" in t and "unknown section" in t for t in text)


def test_threshold_outside_weight_total(tmp_path):
    path = write(tmp_path, """[environment]
alpha_time = 0

[policy.ctx]
policy = contextual
threshold_b = 2.4
""")
    with pytest.raises(ConfigError) as err:
        load_run_config(path)
    (issue,) = err.value.issues
    assert "threshold_b" in issue.message and issue.line == 6


def test_taxonomy_cycle_names_file_and_line(tmp_path):
    bundle = tmp_path / "bundle"
    shutil.copytree(CONFIGS / "expert", bundle)
    tax = bundle / "taxonomies" / "time.tax"
    tax.write_text(tax.read_text() + "Loop_A\tLoop_B\nLoop_B\tLoop_A\n")
    with pytest.raises(ConfigError) as err:
        load_run_config(bundle / "run.ini")
    (issue,) = err.value.issues
    assert issue.path.endswith("time.tax")
    assert issue.line in (26, 27)
    assert "cycle" in issue.message


def test_bad_critical_seed(tmp_path):
    bundle = tmp_path / "bundle"
    shutil.copytree(CONFIGS / "expert", bundle)
    (bundle / "critical.tsv").write_text("Restaurant\tMidday\tNobody\n")
    with pytest.raises(ConfigError) as err:
        load_run_config(bundle / "run.ini")
    (issue,) = err.value.issues
    assert issue.path.endswith("critical.tsv") and issue.line == 1


def test_empty_gold_names_sweep(tmp_path):
    path = write(tmp_path, """[environment]
[policy.x]
policy = exploit
[sweep]
gold_size = 0
""")
    with pytest.raises(ConfigError) as err:
        load_run_config(path)
    assert any("[sweep]" in str(i) and "gold" in str(i) for i in err.value.issues)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.ini")
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "not an ini file\n"))
