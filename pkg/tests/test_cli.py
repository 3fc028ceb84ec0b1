import hashlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renormlab import cli
from renormlab import errors as er
from renormlab.cli import ExperimentConfig


def write_config(path, **overrides):
    path.write_text(json.dumps(overrides))
    return str(path)


def run_cli(tmp_path, command, name="run", **overrides):
    cfg = write_config(tmp_path / f"{name}.json", **overrides)
    out = tmp_path / name
    code = cli.main([command, "--config", cfg, "--out", str(out)])
    return code, out


def read_json(path):
    return json.loads(path.read_text())


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


FAST_ROTATION = {"depths": {"ulambda_k": 8, "proportion_levels": 8, "discrepancy_levels": [5, 8]}}


# ---------------------------------------------------------------- configuration


def test_defaults_are_valid_and_echoed():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.to_dict()["numerics"] == cli.DEFAULTS["numerics"]
    assert cfg.rotation_number().value == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(eps=st.lists(st.floats(0.0, 0.49, exclude_max=True), min_size=1, max_size=4),
       tol=st.floats(1e-14, 1e-3), seed=st.integers(0, 2 ** 31))
def test_config_round_trip_bit_exact(eps, tol, seed):
    cfg = ExperimentConfig.from_dict({"eps": eps, "numerics": {"tol_fix": tol}, "seed": seed})
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert [x.hex() for x in back.eps] == [float(x).hex() for x in eps]
    assert back.numerics["tol_fix"].hex() == tol.hex()
    assert back.digest() == cfg.digest()


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"numerics": {"degre": 20}},
    {"rotation": {"preperiod": [], "period": [1, 0]}},
    {"rotation": {"preperiod": [], "period": []}},
    {"eps": []},
    {"eps": [0.7]},
    {"omega_bracket": [0.6, 0.2]},
    {"input": "sphere"},
    {"numerics": {"tol_fix": 0.0}},
    {"depths": {"renorm_steps": 99}},
    {"depths": {"universality_levels": [5, 3]}},
    {"seed": -1},
    {"numerics": 3},
])
def test_invalid_config_rejected(data):
    with pytest.raises(er.ConfigError):
        ExperimentConfig.from_dict(data)


def test_invalid_digits_exit_2_without_output(tmp_path):
    code, out = run_cli(tmp_path, "fixpoint", rotation={"preperiod": [], "period": [0]})
    assert code == 2
    assert not out.exists()


def test_malformed_json_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert cli.main(["fixpoint", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_missing_config_and_bad_threads(tmp_path):
    assert cli.main(["fixpoint", "--config", str(tmp_path / "none.json")]) == 2
    cfg = write_config(tmp_path / "c.json")
    assert cli.main(["fixpoint", "--config", cfg, "--threads", "0", "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_unknown_command_exit_2(tmp_path):
    assert cli.main(["frobnicate", "--config", write_config(tmp_path / "c.json")]) == 2


@pytest.mark.parametrize("exc, code", [
    (er.ConfigError, 2), (er.ArgumentError, 2),
    (er.CombinatoricsError, 3), (er.StructuralError, 3),
    (er.ConvergenceError, 4), (er.InversionError, 4), (er.ProjectionError, 4), (er.ConsistencyError, 4),
    (er.PrecisionError, 5), (er.DomainError, 5), (er.CompositionError, 5),
])
def test_error_class_exit_codes(tmp_path, monkeypatch, exc, code):
    def boom(cfg, writer, threads):
        raise exc("failure")
    monkeypatch.setitem(cli.HANDLERS, "fixpoint", boom)
    assert run_cli(tmp_path, "fixpoint")[0] == code


def test_seed_override(monkeypatch):
    cfg = ExperimentConfig.from_dict({"seed": 3})
    monkeypatch.delenv(cli.SEED_ENV, raising=False)
    assert cli.apply_seed_override(cfg).seed == 3
    monkeypatch.setenv(cli.SEED_ENV, "17")
    assert cli.apply_seed_override(cfg).seed == 17
    assert cfg.seed == 3
    for bad in ("x", "-2"):
        monkeypatch.setenv(cli.SEED_ENV, bad)
        with pytest.raises(er.ConfigError):
            cli.apply_seed_override(cfg)


def test_seed_override_reaches_manifest(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "41")
    code, out = run_cli(tmp_path, "rotation-checks", **FAST_ROTATION)
    assert code == 0
    assert read_json(out / "manifest.json")["config"]["seed"] == 41


# ---------------------------------------------------------------- run directories


@pytest.fixture(scope="module")
def rotation_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("rot")
    outs = []
    for name in ("a", "b"):
        code, out = run_cli(root, "rotation-checks", name=name, **FAST_ROTATION)
        assert code == 0
        outs.append(out)
    return outs


def test_manifest_contents(rotation_runs):
    out = rotation_runs[0]
    man = read_json(out / "manifest.json")
    cfg = ExperimentConfig.from_dict(FAST_ROTATION)
    assert man["command"] == "rotation-checks"
    assert man["config_sha256"] == cfg.digest()
    assert man["config"] == json.loads(cfg.to_json())
    assert man["version"] == cli.__version__
    wall = man["wall_time_s"]
    assert wall["value"] > 0 and float.fromhex(wall["hex"]) == wall["value"]
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert {"config.json", "ulambda.csv", "proportion.csv", "discrepancy.csv",
            "rotation_checks.json"} <= set(man["files"])


def test_manifest_hex_duplicates(rotation_runs):
    res = read_json(rotation_runs[0] / "manifest.json")["results"]
    leaves = [res["ulambda_A"], res["proportion_d"], res["proportion_rate"]]
    for leaf in leaves:
        assert float.fromhex(leaf["hex"]) == leaf["value"]


def test_rerun_bit_identical(rotation_runs):
    a, b = (read_json(o / "manifest.json") for o in rotation_runs)
    assert a["files"] == b["files"]
    for name in a["files"]:
        assert (rotation_runs[0] / name).read_bytes() == (rotation_runs[1] / name).read_bytes()


def test_rotation_checks_report(rotation_runs):
    summary = read_json(rotation_runs[0] / "rotation_checks.json")
    assert summary["ulambda_pass"] and summary["discrepancy_pass"]
    rows = read_csv(rotation_runs[0] / "discrepancy.csv")
    assert [int(r["m"]) for r in rows] == list(range(5, 9))


def test_full_precision_decimal(rotation_runs):
    for r in read_csv(rotation_runs[0] / "ulambda.csv"):
        assert float(repr(float(r["value"]))) == float(r["value"])
        assert r["value"] == repr(float(r["value"]))


def test_default_output_directory(tmp_path):
    cfg = write_config(tmp_path / "c.json", out_dir=str(tmp_path / "runs"), **FAST_ROTATION)
    assert cli.main(["rotation-checks", "--config", cfg]) == 0
    digest = ExperimentConfig.load(cfg).digest()[:12]
    assert (tmp_path / "runs" / f"rotation-checks-{digest}" / "manifest.json").exists()


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "renormlab.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "rigidity" in proc.stdout


# ---------------------------------------------------------------- subcommands


def test_fixpoint_golden(tmp_path):
    code, out = run_cli(tmp_path, "fixpoint")
    assert code == 0
    summary = read_json(out / "summary.json")
    assert summary["residual"] < 1e-9
    assert summary["unstable_eigenvalues"] == 1
    spectrum = read_csv(out / "spectrum.csv")
    assert len(spectrum) == 10
    assert sum(float(r["modulus"]) > 1.0 for r in spectrum) == 1
    assert (out / "pair.json").exists() and (out / "residual_log.csv").exists()


def test_renorm2d_depth_zero_echoes_input(tmp_path):
    code, out = run_cli(tmp_path, "renorm2d", input="embedded", depths={"renorm_steps": 0})
    assert code == 0
    man = read_json(out / "manifest.json")
    assert set(man["files"]) == {"config.json", "input_report.json"}
    rep = read_json(out / "input_report.json")
    assert len(rep) == 1 and rep[0]["y_norm"] == 0.0 and rep[0]["heights"] == [1, 1]


def test_renorm2d_commuting_input_pi_columns(tmp_path):
    code, out = run_cli(tmp_path, "renorm2d", input="embedded", depths={"renorm_steps": 2})
    assert code == 0
    rows = read_csv(out / "steps.csv")
    assert len(rows) == 2
    for r in rows:
        assert max(abs(float(r[k])) for k in "cdef") < 1e-10


def test_renorm2d_eps_sweep_squaring_trend(tmp_path):
    code, out = run_cli(tmp_path, "renorm2d", depths={"renorm_steps": 1})
    assert code == 0
    rows = [json.loads(l) for l in (out / "steps.jsonl").read_text().splitlines()]
    assert sorted(r["eps"] for r in rows) == [1e-4, 1e-3, 1e-2]
    ratios = [r["y_norm_ratio"] for r in rows]
    assert max(ratios) / min(ratios) < 3.0
    y = {r["eps"]: r["y_norm"] for r in rows}
    assert y[1e-2] > y[1e-3] > y[1e-4]


def test_attractor_eps_zero_degenerate(tmp_path, caplog):
    code, out = run_cli(tmp_path, "attractor", eps=[0.0],
                        depths={"atlas_level": 1, "jacobian_samples": 2000})
    assert code == 0
    stats = read_json(out / "stats_eps0e+00.json")
    assert stats["degenerate"] and "degenerate" in stats["notice"]
    assert stats["chi0"] is None
    rows = read_csv(out / "atlas_eps0e+00.csv")
    assert len(rows) == 34 and {r["side"] for r in rows} == {"A", "B"}
    assert list(rows[0]) == ["address", "side", "x", "y", "level"]
    assert "degenerate" in caplog.text


def test_attractor_stats_fields(tmp_path):
    code, out = run_cli(tmp_path, "attractor", eps=[1e-3],
                        depths={"atlas_level": 2, "jacobian_samples": 20_000, "lyapunov_samples": 20_000})
    assert code == 0
    stats = read_json(out / "stats_eps1e-03.json")
    assert {"b", "chi0", "chiminus", "fits"} <= set(stats)
    assert stats["b"] == pytest.approx(1e-3, rel=1e-5)
    assert stats["fits"]["conjugacy_residual"] <= stats["fits"]["max_cell_diameter"]
    cols = np.loadtxt(out / "scatter_eps1e-03.dat")
    assert cols.shape == (len(read_csv(out / "atlas_eps1e-03.csv")), 2)


def test_universality_comparison_table(tmp_path):
    code, out = run_cli(tmp_path, "universality", eps=[1e-3],
                        depths={"atlas_level": 1, "universality_levels": [2, 5], "jacobian_samples": 20_000})
    assert code == 0
    rows = read_csv(out / "lnb_comparison.csv")
    assert list(rows[0]) == ["eps", "lnb_slope", "lnb_average_jacobian", "rel_diff", "pass",
                             "f_min", "f_max", "profile_vs_f"]
    assert float(rows[0]["rel_diff"]) < 0.03 and rows[0]["pass"] == "True"
    fits = read_csv(out / "slope_fits.csv")
    assert [int(r["k"]) for r in fits] == [2, 3, 4, 5]


def test_rigidity_report(tmp_path):
    code, out = run_cli(tmp_path, "rigidity", eps=[1e-2, 1e-3],
                        depths={"atlas_level": 2, "jacobian_samples": 20_000,
                                "lyapunov_samples": 1000, "holder_pairs": 50_000})
    assert code == 0
    rep = read_json(out / "rigidity.json")
    assert {"kappa_hat", "bound", "PASS"} <= set(rep)
    assert rep["PASS"] == (rep["kappa_hat"] <= rep["bound"] + 0.05)
    b1, b2 = rep["b"]
    assert rep["bound"] == pytest.approx(1 / 3 + 2 / 3 * math.log(b1) / math.log(b2), rel=1e-12)
    assert rep["kappa_identity"] == pytest.approx(1.0, abs=0.02)


def test_rigidity_needs_two_eps(tmp_path):
    assert run_cli(tmp_path, "rigidity", eps=[1e-3])[0] == 2
