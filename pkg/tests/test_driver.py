"""Config parsing, presets, outputs, CSV round-trip, and the CLI."""

import json
import math
import os

import numpy as np
import pytest

from curveflow import ConfigError, parse_config
from curveflow.cli import main
from curveflow.config import RunConfig, config_from_mapping
from curveflow.driver import execute, lambda_study, resolve_problem, run
from curveflow.outputs import STEPS_HEADER, read_snapshot_points
from curveflow.presets import PRESETS, get_preset
from curveflow.splines import build_space


def write_config(path, text):
    path.write_text(text)
    return str(path)


# ------------------------------------------------------------------- parsing


def test_parse_preset_defaults(tmp_path):
    path = write_config(tmp_path / "run.cfg", "preset = willmore_star\n")
    config = parse_config(path)
    assert config.scheme == "willmore_tv"
    assert config.n_basis == 25
    assert config.degree == 3
    assert config.k0 == 4.0
    assert config.alpha0 == 10.0
    assert config.t_end == 0.1
    assert config.tau_cap == 1e-4
    assert config.uniform_dt is None
    assert config.effective_quad_order == 5


def test_parse_helfrich_defaults(tmp_path):
    path = write_config(tmp_path / "run.cfg", "preset = helfrich_star\n")
    config = parse_config(path)
    assert config.scheme == "helfrich_tv"
    assert config.t_end == 2.0
    assert config.n_basis == 30
    assert config.alpha0 == 1.0
    assert config.tau_cap == pytest.approx(1e-3)


def test_parse_overrides_and_comments(tmp_path):
    path = write_config(
        tmp_path / "run.cfg",
        "# a comment line\n"
        "preset = willmore_star\n"
        "t_end = 0.01   # trailing comment\n"
        "\n"
        "snapshot_stride = 10\n",
    )
    config = parse_config(path)
    assert config.t_end == 0.01
    assert config.snapshot_stride == 10


def test_parse_rejects_both_stepping_modes(tmp_path):
    path = write_config(
        tmp_path / "run.cfg",
        "preset = willmore_star\ntau_cap = 1e-4\nuniform_dt = 1e-3\n",
    )
    with pytest.raises(ConfigError):
        parse_config(path)


def test_explicit_uniform_dt_replaces_preset_tau(tmp_path):
    path = write_config(tmp_path / "run.cfg", "preset = willmore_star\nuniform_dt = 1e-3\n")
    config = parse_config(path)
    assert config.tau_cap is None
    assert config.uniform_dt == 1e-3


def test_parse_rejects_unknown_key(tmp_path):
    path = write_config(tmp_path / "run.cfg", "preset = willmore_star\nfrobnicate = 3\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config(path)


def test_parse_rejects_duplicate_and_malformed(tmp_path):
    path = write_config(tmp_path / "run.cfg", "preset = willmore_star\npreset = apw_star\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(path)
    path = write_config(tmp_path / "bad.cfg", "preset willmore_star\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config(path)
    path = write_config(tmp_path / "bad2.cfg", "preset = willmore_star\nt_end = fast\n")
    with pytest.raises(ConfigError, match="invalid value"):
        parse_config(path)


def test_config_requires_initial_curve_source():
    with pytest.raises(ConfigError):
        RunConfig(scheme="willmore_tv", n_basis=10, tau_cap=1e-4)


def test_resolve_problem_mapping():
    config = config_from_mapping({"preset": "helfrich_star"})
    problem = resolve_problem(config)
    assert problem.driving == "bending"
    assert problem.constraints == ("area", "length")
    assert problem.tangential

    config = config_from_mapping({"preset": "willmore_star", "scheme": "willmore_plain"})
    problem = resolve_problem(config)
    assert not problem.tangential
    assert problem.k0 == 4.0


# ------------------------------------------------------------------- presets


def test_preset_formulas_match_direct_transcription():
    # independent transcription of the published initial-curve formulas
    def star(u):
        f = 2 * math.pi * u + math.sin(4 * math.pi * u)
        r = 1 + 0.2 * math.sin(f) + 0.4 * math.cos(f)
        th = -(10 / math.pi) * (math.cos(2 * math.pi * u) + math.cos(6 * math.pi * u) / 9)
        return (r * math.cos(th), r * math.sin(th))

    def ellipse(u):
        th = 2 * math.pi * u - 0.4 * math.sin(4 * math.pi * u)
        return (2 * math.cos(th), math.sin(th))

    def lobed(u):
        r0, r1, eps = 0.5, 1.5, 0.1
        th0, th1 = 3 * math.pi / 4, math.pi
        f = 2 * math.pi * u + 0.5 * math.sin(4 * math.pi * u)
        r = (r1 - r0) * (math.cos(f) + 1) / 2 + r0 + eps * math.sin(8 * math.pi * u)
        th = (th0 + th1) * (math.sin(2 * math.pi * u) + 1) / 2 - th1
        return (r * math.cos(th), r * math.sin(th))

    def lobed_repar(u):
        return lobed(u - math.sin(2 * math.pi * u) / (3 * math.pi))

    oracles = {
        "willmore_star": star,
        "willmore_ellipse": ellipse,
        "apw_star": lobed,
        "helfrich_star": lobed_repar,
    }
    for name, oracle in oracles.items():
        preset = get_preset(name)
        for k in range(1000):
            u = k / 1000.0
            got = preset.curve(u)
            expected = oracle(u)
            assert abs(got[0] - expected[0]) < 1e-14
            assert abs(got[1] - expected[1]) < 1e-14


def test_presets_positively_oriented():
    for preset in PRESETS.values():
        pts = np.array([preset.curve(k / 2048) for k in range(2048)])
        x, y = pts[:, 0], pts[:, 1]
        shoelace = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert shoelace > 0, preset.name


# ------------------------------------------------------------------ run + io


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("short_run")
    config = config_from_mapping(
        {
            "preset": "willmore_star",
            "t_end": 1e-6,
            "output_dir": str(out),
            "snapshot_stride": 2,
            "svg": True,
        }
    )
    state = execute(config)
    return config, state, out


def test_run_writes_expected_files(short_run):
    config, state, out = short_run
    assert state.termination == "reached_t_end"
    steps = (out / "steps.csv").read_text().splitlines()
    assert steps[0] == STEPS_HEADER
    assert len(steps) == state.n + 2  # header + step 0 + n steps
    # willmore scheme leaves constraint columns empty
    first_step = steps[2].split(",")
    assert first_step[4] == "" and first_step[5] == ""
    assert first_step[6] != ""  # lambda0 present for tangential scheme
    assert first_step[11] == ""  # wall_ms withheld by default

    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"] == "reached_t_end"
    assert summary["exit_code"] == 0
    assert summary["steps"] == state.n
    assert "max_abs_lambda0" in summary

    snaps = sorted(os.listdir(out / "snapshots"))
    assert "step_0.csv" in snaps and "step_0.svg" in snaps
    assert f"step_{state.n}.csv" in snaps


def test_snapshot_roundtrip_control_points(short_run):
    config, state, out = short_run
    space = build_space(config.n_basis, config.degree, config.effective_quad_order)
    final = read_snapshot_points(out / "snapshots" / f"step_{state.n}.csv", space)
    assert np.array_equal(final.points, state.curve.points)


def test_svg_is_wellformed(short_run):
    _, state, out = short_run
    import xml.etree.ElementTree as ET

    tree = ET.parse(out / "snapshots" / "step_0.svg")
    tag = tree.getroot().tag
    assert tag.endswith("svg")


def test_csv_roundtrip_reproduces_next_step(tmp_path):
    # restart from a written snapshot and replay one step with the logged
    # increment: the next functional values must match to full precision
    out_a = tmp_path / "a"
    config_a = config_from_mapping(
        {
            "preset": "willmore_star",
            "uniform_dt": 2e-7,
            "t_end": 6e-7,  # 3 steps
            "output_dir": str(out_a),
            "snapshot_stride": 1,
        }
    )
    state_a = execute(config_a)
    assert state_a.n == 3

    out_b = tmp_path / "b"
    config_b = config_from_mapping(
        {
            "points_file": str(out_a / "snapshots" / "step_2.csv"),
            "scheme": "willmore_tv",
            "n_basis": 25,
            "degree": 3,
            "k0": 4.0,
            "alpha0": 10.0,
            "uniform_dt": 2e-7,
            "t_end": 2e-7,  # exactly one step
            "output_dir": str(out_b),
        }
    )
    state_b = execute(config_b)
    assert state_b.n == 1
    resumed = state_b.records[1].f0
    original = state_a.records[3].f0
    assert abs(resumed - original) <= 1e-12 * abs(original)


def test_determinism_bitwise_steps_csv(tmp_path):
    outputs = []
    for tag in ("one", "two"):
        out = tmp_path / tag
        config = config_from_mapping(
            {"preset": "willmore_star", "t_end": 5e-7, "output_dir": str(out)}
        )
        assert run(config) == 0
        outputs.append((out / "steps.csv").read_bytes())
    assert outputs[0] == outputs[1]


# ------------------------------------------------------------------- studies


def test_lambda_study_rows_and_dirs(tmp_path):
    config = config_from_mapping(
        {
            "preset": "willmore_ellipse",
            "t_end": 0.04,  # i = 0 gives dt = 4e-4, 100 steps
            "output_dir": str(tmp_path / "study"),
        }
    )
    results, code = lambda_study(config, 1, jobs=1)
    assert code == 0
    assert [row[0] for row in results] == [0, 1]
    assert results[0][1] == pytest.approx(0.04 / 100)
    assert results[1][1] == pytest.approx(0.04 / 200)
    table = (tmp_path / "study" / "lambda_study.csv").read_text().splitlines()
    assert table[0] == "i,dt,max_abs_lambda0"
    assert len(table) == 3
    assert (tmp_path / "study" / "run_i0" / "steps.csv").exists()
    assert (tmp_path / "study" / "run_i1" / "steps.csv").exists()


def test_lambda_study_requires_willmore_tv(tmp_path):
    config = config_from_mapping(
        {"preset": "helfrich_star", "output_dir": str(tmp_path / "x")}
    )
    with pytest.raises(ConfigError):
        lambda_study(config, 0)


def test_lambda_study_keeps_partial_table_on_failure(tmp_path):
    # an impossible Newton budget fails every case; the study aborts after
    # the first one but its table row survives
    config = config_from_mapping(
        {
            "preset": "willmore_ellipse",
            "t_end": 0.04,
            "max_iters": 1,
            "output_dir": str(tmp_path / "study"),
        }
    )
    results, code = lambda_study(config, 2, jobs=1)
    assert code == 2
    assert len(results) == 1
    table = (tmp_path / "study" / "lambda_study.csv").read_text().splitlines()
    assert len(table) == 2  # header + the failed first case


def test_lambda_floor_shrinks_with_spatial_resolution(tmp_path):
    # same fixed time step, doubled control-point count: the dissipation
    # multiplier drops by an order of magnitude, confirming that its
    # saturation floor is a spatial-discretization artifact.  Slow (~2 min):
    # two uniform-step runs of 1600 steps each.
    levels = {}
    for n_basis in (14, 28):
        config = config_from_mapping(
            {
                "preset": "willmore_ellipse",
                "n_basis": n_basis,
                "t_end": 1.0,
                "uniform_dt": 1.0 / (100 * 2**4),
                "output_dir": str(tmp_path / f"n{n_basis}"),
            }
        )
        state = execute(config)
        assert state.termination == "reached_t_end"
        levels[n_basis] = max(abs(r.lambda0) for r in state.records[1:])
    assert levels[28] < 0.5 * levels[14]


def test_run_breakdown_exit_code(tmp_path):
    # an impossible Newton budget turns the first step into a breakdown
    config = config_from_mapping(
        {
            "preset": "willmore_star",
            "max_iters": 1,
            "output_dir": str(tmp_path / "broken"),
        }
    )
    assert run(config) == 2
    summary = json.loads((tmp_path / "broken" / "summary.json").read_text())
    assert summary["termination"] == "breakdown"
    assert summary["failure"] == "NON_CONVERGENCE"
    assert summary["exit_code"] == 2


# ----------------------------------------------------------------------- cli


def test_cli_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"preset = willmore_star\nt_end = 5e-7\noutput_dir = {tmp_path / 'out'}\n"
    )
    assert main(["run", "--config", str(cfg)]) == 0

    bad = tmp_path / "bad.cfg"
    bad.write_text("preset = nope\n")
    assert main(["run", "--config", str(bad)]) == 4
    assert "config error" in capsys.readouterr().err


def test_cli_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.cfg")]) == 4
    assert "config error" in capsys.readouterr().err
