from __future__ import annotations

import csv
import io
import json
import textwrap

import numpy as np
import pytest

from tpmab.cli import main
from tpmab.config import ConfigError, parse_config
from tpmab.ingest import format_sessions, read_pool, simulate_sessions

SMALL = """\
schema = 1

[experiment]
scenario = "setting2-100-10"
horizon = 400
runs = 3
seed = 5

[[policies]]
name = "delayed-ucb1"

[[policies]]
name = "tp-ucb-fr"

[[policies]]
name = "tp-ucb-ew"
eta = 5

[bounds]
horizons = [100, 1000, 10000]
"""


def _write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_run_writes_tables_and_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    for out in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["manifest.json", "summary.json", "trajectory_Delayed-UCB1.csv",
                     "trajectory_TP-UCB-EW_5.csv", "trajectory_TP-UCB-FR_10.csv"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.reader(open(tmp_path / "a" / "trajectory_TP-UCB-FR_10.csv")))
    assert rows[0] == ["checkpoint_round", "mean_regret", "ci_half_width", "runs"]
    assert rows[-1][0] == "400" and rows[-1][3] == "3"
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["policies"][0]["regret_percent"] == pytest.approx(100.0)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seeds"]["base"] == 5
    assert set(manifest["outputs"]) == set(names) - {"manifest.json"}


def test_run_overrides(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--runs", "2", "--seed", "9"]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["overrides"] == {"seed": 9, "runs": 2}
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["runs"] == 2


def test_unknown_policy_names_the_entry(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL.replace('name = "tp-ucb-fr"', 'name = "thompson"'))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "policies[1].name" in capsys.readouterr().err


@pytest.mark.parametrize(
    "edit, path",
    [
        (("runs = 3", "runs = 0"), "experiment.runs"),
        (("horizon = 400", "horizon = 50"), "experiment.horizon"),
        (("seed = 5", "seed = 5\ncolour = 1"), "experiment.colour"),
        (("schema = 1", "schema = 2"), "schema"),
        (("eta = 5", "eta = 3"), "policies[2].eta"),
        (('scenario = "setting2-100-10"', 'scenario = "nowhere"'), "experiment.scenario"),
        (("seed = 5", 'seed = "five"'), "experiment.seed"),
    ],
)
def test_config_errors_carry_field_path(edit, path):
    with pytest.raises(ConfigError) as err:
        parse_config(SMALL.replace(*edit))
    assert err.value.path == path


def test_inline_environment_config():
    text = textwrap.dedent("""\
        schema = 1
        [experiment]
        horizon = 100
        [environment]
        num_arms = 2
        tau_max = 4
        alpha = 2
        max_reward = [4.0, 8.0]
        a = [[1.0, 2.0], [2.0, 1.0]]
        b = 3.0
        [[policies]]
        name = "ucb1"
        """)
    cfg = parse_config(text)
    assert cfg.environment.spec.max_reward == (4.0, 8.0)
    with pytest.raises(ConfigError) as err:
        parse_config(text.replace("alpha = 2", "alpha = 3"))
    assert err.value.path == "environment"


def _bounds_csv(tmp_path, text):
    cfg = _write(tmp_path, text, "b.toml")
    out = tmp_path / "bounds.csv"
    assert main(["bounds", "--config", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    return rows[0], np.array(rows[1:], dtype=float)


def test_bounds_table_and_alpha_doubling(tmp_path):
    base = 'schema = 1\n[environment]\nnum_arms = 3\ntau_max = 40\nalpha = {a}\nmax_reward = 100.0\n' \
           'a = [[1.0], [2.0], [3.0]]\nb = 2.0\n[bounds]\nhorizons = [10, 100, 1000]\n'
    head, one = _bounds_csv(tmp_path, base.format(a=10))
    assert head == ["T", "lower_plain", "lower_smooth", "ub_fr", "ub_ew", "ub_ucb1", "ub_delayed"]
    _, two = _bounds_csv(tmp_path, base.format(a=20))
    np.testing.assert_allclose(two[:, 2], one[:, 2] / 2, rtol=1e-14)
    np.testing.assert_array_equal(two[:, 1], one[:, 1])


def test_bounds_setting1_to_stdout(tmp_path, capsys):
    cfg = _write(tmp_path, 'schema = 1\n[experiment]\nscenario = "setting1"\n[bounds]\nt_min = 10\nt_max = 1000\nper_decade = 2\n')
    assert main(["bounds", "--config", str(cfg)]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert len(rows[0]) == 7 and [r[0] for r in rows[1:]] == ["10", "32", "100", "316", "1000"]


def test_bounds_warn_on_tied_arm(tmp_path, capsys):
    text = 'schema = 1\n[environment]\nnum_arms = 3\ntau_max = 2\nalpha = 1\nmax_reward = 10.0\n' \
           'a = [[2.0], [2.0], [1.0]]\nb = 1.0\n[bounds]\nhorizons = [100]\n'
    cfg = _write(tmp_path, text)
    assert main(["bounds", "--config", str(cfg)]) == 0
    assert "share the optimal mean" in capsys.readouterr().err


def _fixture_csv(tmp_path, songs=20):
    probs = np.array([[0.3, 0.2, 0.2, 0.2, 0.1]] * 3 + [[0.1, 0.1, 0.2, 0.3, 0.3]] * 3)
    recs = simulate_sessions(probs, 10, n_songs=songs, seed=1)
    path = tmp_path / "sessions.csv"
    path.write_text(format_sessions(recs))
    return path


def test_ingest_echoes_spec_and_writes_pool(tmp_path, capsys):
    src = _fixture_csv(tmp_path)
    out = tmp_path / "pool.txt"
    assert main(["ingest", str(src), "--out", str(out), "--top", "6", "--songs", "20"]) == 0
    text = capsys.readouterr().out
    assert "spec: K=6 tau_max=80 alpha=20 phi=4 R=80" in text
    pool = read_pool(out)
    assert pool.spec.tau_max == 80 and [len(v) for v in pool.vectors] == [10] * 6


def test_ingest_malformed_row(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("session_id,playlist_id,position,skip_level\ns1,p1,1,4\ns1,p1,2,9\n")
    assert main(["ingest", str(src), "--out", str(tmp_path / "p")]) == 1
    err = capsys.readouterr().err
    assert "line 3" in err
    assert not (tmp_path / "p").exists()


def test_ingest_too_few_playlists(tmp_path, capsys):
    src = _fixture_csv(tmp_path, songs=2)
    assert main(["ingest", str(src), "--songs", "2", "--top", "7"]) == 1
    assert "7 requested" in capsys.readouterr().err


def test_run_on_ingested_pool(tmp_path):
    src = _fixture_csv(tmp_path, songs=2)
    assert main(["ingest", str(src), "--out", str(tmp_path / "pool.txt"), "--songs", "2"]) == 0
    cfg = _write(tmp_path, 'schema = 1\n[experiment]\npool = "pool.txt"\nhorizon = 200\nruns = 2\n'
                           '[[policies]]\nname = "tp-ucb-fr"\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "trajectory_TP-UCB-FR_2.csv").exists()


def test_scenarios_listing(capsys):
    assert main(["scenarios"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["name", "K", "tau_max", "alpha", "best_mean"]
    names = {r[0] for r in rows[1:]}
    assert {"setting1", "setting2.1-100-10", "setting4-scenario10"} <= names
    setting1 = next(r for r in rows if r[0] == "setting1")
    assert setting1[1:4] == ["10", "100", "20"] and float(setting1[4]) == 500.0


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.toml")]) == 1
    assert "config error" in capsys.readouterr().err
