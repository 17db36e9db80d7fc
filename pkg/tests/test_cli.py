import math

import pytest

from robust_isr._validation import ConfigurationError
from robust_isr.cli import main
from robust_isr.config import apply_overrides, config_to_text, load_config, parse_config_text
from robust_isr.experiments import summarize_episodes
from robust_isr.sim import SimConfig, read_summary_csv, run_campaign

GOOD = """\
[topology]
family = grid
rows = 3
cols = 4

[reward]
gamma = 0.9
c_sense = 1.0, 1.0, 1.0, 0.1

[sim]
planner = static
horizon = 50
"""


def test_load_config_text():
    cfg = load_config(text=GOOD)
    assert cfg.reward.gamma == 0.9
    assert cfg.planner == "static" and cfg.horizon == 50
    assert cfg.topology.size == 12


def test_overrides_apply_after_file():
    cfg = load_config(text=GOOD, overrides=["sim.horizon=7", "reward.lambda_imm=3"])
    assert cfg.horizon == 7 and cfg.reward.lambda_imm == 3.0
    with pytest.raises(ConfigurationError):
        apply_overrides(parse_config_text(GOOD), ["horizon=7"])


def test_config_text_round_trip():
    cfg = load_config(text=GOOD)
    assert load_config(text=config_to_text(cfg)) == cfg


@pytest.mark.parametrize(
    "text,line,key",
    [
        ("[sim]\nhorizon = 10\nrho_lock = 1.5\n", 3, "rho_lock"),
        ("[sim]\nhorizon = ten\n", 2, "horizon"),
        ("[sim]\n\nspeed = 3\n", 3, "speed"),
        ("[reward]\ngamma = 1.0\n", 2, "gamma"),
        ("[topology]\nrows = 3\n", 2, "family"),
    ],
)
def test_config_errors_name_line_and_key(text, line, key):
    with pytest.raises(ConfigurationError) as exc:
        load_config(text=text)
    assert str(exc.value).startswith(f"line {line}:")
    if key:
        assert key in str(exc.value)


def test_unknown_section_and_missing_header():
    with pytest.raises(ConfigurationError, match="line 1"):
        load_config(text="[weather]\nrain = 1\n")
    with pytest.raises(ConfigurationError):
        load_config(text="horizon = 5\n")


def test_validate_prints_gamma(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "gamma = 0.98" in out
    assert "R_max = " in out and "value bound" in out


def test_validate_bad_rho_lock_exits_one(capsys):
    assert main(["validate", "--set", "sim.rho_lock=1.5"]) == 1
    err = capsys.readouterr().err
    assert "rho_lock" in err


def test_validate_config_file_line_error(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[sim]\nhorizon = 10\nrho_lock = 1.5\n")
    assert main(["validate", str(path)]) == 1
    assert "line 3" in capsys.readouterr().err


def test_validate_prototype_file(tmp_path, capsys):
    from robust_isr.threat_models import bundled_prototypes

    path = tmp_path / "protos.txt"
    path.write_text(bundled_prototypes("exp1").to_text())
    assert main(["validate", str(path)]) == 0
    assert "3 threat types" in capsys.readouterr().out


def test_missing_file_exits_one(capsys):
    assert main(["validate", "/nonexistent/file.ini"]) == 1
    assert main(["run", "-c", "/nonexistent/file.ini"]) == 1


def test_usage_error_exits_one(capsys):
    assert main(["preset", "exp7"]) == 1
    assert main([]) == 1


def test_run_writes_episodes(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--set", "sim.horizon=40", "-n", "2", "-o", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["episode_0000.csv", "episode_0001.csv", "summary.csv"]


def test_failed_episodes_exit_two(capsys):
    assert main(["run", "--set", "sim.horizon=5", "--set", "sim.max_iter=1", "--set", "sim.tol=1e-12"]) == 2


def test_gen_graph(tmp_path):
    path = tmp_path / "g.txt"
    assert main(["gen-graph", "-o", str(path)]) == 0
    edges = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    assert len(edges) == 17
    star = tmp_path / "star.ini"
    star.write_text("[topology]\nfamily = star\nn_leaves = 4\n")
    assert main(["gen-graph", "-c", str(star), "-o", str(path)]) == 0
    edges = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    assert len(edges) == 4


def test_preset_summarize_plot_round_trip(tmp_path, capsys):
    assert main(["preset", "exp1", "--seeds", "2", "-o", str(tmp_path), "--no-plots"]) == 0
    root = tmp_path / "exp1"
    assert (root / "manifest.json").is_file()
    assert main(["summarize", str(root), "-o", str(tmp_path / "again.csv")]) == 0
    stored = {s.planner: s for s in read_summary_csv(root / "summary.csv")}
    again = {s.planner: s for s in read_summary_csv(tmp_path / "again.csv")}
    for p, s in stored.items():
        for k, x in s.as_row().items():
            y = again[p].as_row()[k]
            assert (isinstance(x, float) and math.isnan(x) and math.isnan(y)) or x == y
    assert main(["plot", str(root)]) == 0
    assert len(list((root / "plots").glob("*.png"))) == 5


def test_summarize_matches_in_memory_campaign(tmp_path):
    cfg = SimConfig(horizon=60, planner="nominal")
    res = run_campaign(cfg, range(3))
    for lg in res.logs:
        lg.to_csv(tmp_path / f"episode_{lg.meta['episode']:04d}.csv")
    (back,) = summarize_episodes(tmp_path, check=False)
    for k, x in res.summary.as_row().items():
        y = back.as_row()[k]
        assert (isinstance(x, float) and math.isnan(x) and math.isnan(y)) or x == y


def test_summarize_empty_dir_exits_one(tmp_path, capsys):
    assert main(["summarize", str(tmp_path)]) == 1
