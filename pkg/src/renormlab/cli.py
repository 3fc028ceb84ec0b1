"""Experiment harness: JSON configuration, subcommands and reproducible run directories.

Usage: renormlab <fixpoint|renorm2d|attractor|universality|rigidity|rotation-checks>
       --config <path> [--out <dir>] [--threads N]
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import attractor as at
from . import funcalc as fc
from . import pairs1d as p1
from . import pairs2d as p2
from . import rotation as rot
from .errors import ConfigError, RenormError

log = logging.getLogger("renormlab")

COMMANDS = ("fixpoint", "renorm2d", "attractor", "universality", "rigidity", "rotation-checks")
SEED_ENV = "RENORMLAB_SEED"

DEFAULTS: dict[str, Any] = {
    "rotation": {"preperiod": [], "period": [1]},
    "eps": [1e-2, 1e-3, 1e-4],
    "omega_bracket": [0.0, 1.0],
    "input": "annulus",
    "numerics": {
        "degree": 20,
        "tol_fix": 1e-9,
        "newton_steps": 30,
        "spectrum_modes": 10,
        "tune_depth": 16,
        "tune_tol": 1e-11,
        "ky": fc.KY_DEFAULT,
        "linearizer_tol": at.LINEARIZER_TOL,
    },
    "depths": {
        "renorm_steps": 6,
        "atlas_level": 2,
        "jacobian_samples": 100_000,
        "lyapunov_samples": 100_000,
        "universality_levels": [2, 6],
        "holder_pairs": 200_000,
        "ulambda_k": 20,
        "proportion_levels": 12,
        "discrepancy_levels": [5, 12],
    },
    "seed": 0,
    "out_dir": "runs",
}

# overflow-safe ranges for depth parameters
DEPTH_LIMITS = {
    "renorm_steps": (0, 12),
    "atlas_level": (1, 3),
    "jacobian_samples": (1, 10_000_000),
    "lyapunov_samples": (100, 10_000_000),
    "holder_pairs": (100, 10_000_000),
    "ulambda_k": (1, 40),
    "proportion_levels": (2, 40),
}


# ---------------------------------------------------------------------------
# configuration


def _merge(defaults: dict, given: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path}{key} must be an object")
            out[key] = _merge(defaults[key], val, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ExperimentConfig:
    rotation: dict
    eps: list[float]
    omega_bracket: list[float]
    input: str
    numerics: dict
    depths: dict
    seed: int
    out_dir: str

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        merged = _merge(DEFAULTS, data)
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_json(text)

    def to_dict(self) -> dict:
        return {"rotation": copy.deepcopy(self.rotation), "eps": list(self.eps),
                "omega_bracket": list(self.omega_bracket), "input": self.input,
                "numerics": copy.deepcopy(self.numerics), "depths": copy.deepcopy(self.depths),
                "seed": self.seed, "out_dir": self.out_dir}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def rotation_number(self) -> rot.RotationNumber:
        return rot.RotationNumber(tuple(self.rotation["preperiod"]), tuple(self.rotation["period"]))

    def validate(self) -> None:
        try:
            self.rotation_number()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid rotation digits: {exc}") from None
        digits = list(self.rotation["preperiod"]) + list(self.rotation["period"])
        if not self.rotation["period"] or any(not isinstance(d, int) or d < 1 for d in digits):
            raise ConfigError("rotation digits must be positive integers with a nonempty period")
        if not isinstance(self.eps, list) or not self.eps:
            raise ConfigError("eps must be a nonempty list")
        for e in self.eps:
            if not isinstance(e, (int, float)) or not 0.0 <= e < 0.5:
                raise ConfigError(f"eps {e!r} outside [0, 0.5)")
        lo, hi = (float(v) for v in self.omega_bracket)
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError("omega_bracket must satisfy 0 ≤ lo < hi ≤ 1")
        if self.input not in ("annulus", "embedded"):
            raise ConfigError("input must be 'annulus' or 'embedded'")
        for key in ("tol_fix", "tune_tol", "linearizer_tol"):
            if not float(self.numerics[key]) > 0.0:
                raise ConfigError(f"tolerance {key} must be positive")
        for key in ("degree", "newton_steps", "spectrum_modes", "tune_depth", "ky"):
            v = self.numerics[key]
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"numerics.{key} must be a positive integer")
        for key, (a, b) in DEPTH_LIMITS.items():
            v = self.depths[key]
            if not isinstance(v, int) or not a <= v <= b:
                raise ConfigError(f"depths.{key} must be an integer in [{a}, {b}]")
        for key in ("universality_levels", "discrepancy_levels"):
            v = self.depths[key]
            if (len(v) != 2 or not all(isinstance(t, int) for t in v) or not 1 <= v[0] < v[1]
                    or v[1] > 12 * (1 if key == "universality_levels" else 3)):
                raise ConfigError(f"depths.{key} must be an increasing integer pair in range")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")


def apply_seed_override(cfg: ExperimentConfig) -> ExperimentConfig:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return cfg
    try:
        seed = int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if seed < 0:
        raise ConfigError(f"{SEED_ENV} must be nonnegative")
    cfg = copy.deepcopy(cfg)
    cfg.seed = seed
    return cfg


# ---------------------------------------------------------------------------
# run directory


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _hex_tree(obj):
    """Numeric leaves as {"value", "hex"} for the manifest."""
    if isinstance(obj, dict):
        return {k: _hex_tree(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_hex_tree(v) for v in obj]
    if isinstance(obj, float):
        return {"value": obj, "hex": obj.hex()}
    return obj


class RunWriter:
    """Flat files of one run; tracks their sha256 for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}
        root.mkdir(parents=True, exist_ok=True)

    def _record(self, name: str, data: bytes) -> None:
        (self.root / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj) -> None:
        self._record(name, (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode())

    def jsonl(self, name: str, rows: Sequence[dict]) -> None:
        text = "".join(json.dumps(_jsonable(r), sort_keys=True) + "\n" for r in rows)
        self._record(name, text.encode())

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_csv_cell(v) for v in row))
        self._record(name, ("\n".join(lines) + "\n").encode())

    def columns(self, name: str, header: Sequence[str], cols: Sequence[np.ndarray]) -> None:
        """Whitespace-separated columns with a comment header (gnuplot-ready)."""
        data = np.column_stack([np.asarray(c, dtype=float) for c in cols])
        lines = ["# " + " ".join(header)] + [" ".join(repr(float(v)) for v in row) for row in data]
        self._record(name, ("\n".join(lines) + "\n").encode())


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_manifest(writer: RunWriter, cfg: ExperimentConfig, command: str, wall: float,
                   results: dict) -> None:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "version": __version__,
        "wall_time_s": {"value": wall, "hex": float(wall).hex()},
        "files": dict(sorted(writer.files.items())),
        "results": _hex_tree(_jsonable(results)),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (writer.root / "manifest.json").write_text(text)


def _map_cells(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# shared pipelines


def fixed_point(cfg: ExperimentConfig) -> p1.FixedPointResult:
    rho = cfg.rotation_number()
    seed = p1.arnold_seed(rho)
    return p1.newton_fixed_point(seed, rho, deg=cfg.numerics["degree"], tol_fix=cfg.numerics["tol_fix"],
                                 max_steps=cfg.numerics["newton_steps"])


def critical_pair(cfg: ExperimentConfig, eps: float) -> tuple[p2.Pair2D, p2.CriticalTuning]:
    return p2.tune_critical_pair(float(eps), cfg.rotation_number(), depth=cfg.numerics["tune_depth"],
                                 tol=cfg.numerics["tune_tol"], ky=cfg.numerics["ky"],
                                 bracket=tuple(cfg.omega_bracket))


def _orbit(cfg: ExperimentConfig, eps: float, steps: int) -> at.RenormOrbit:
    z, _ = critical_pair(cfg, eps)
    return at.renormalization_orbit(z, steps, cfg.numerics["ky"])


# ---------------------------------------------------------------------------
# subcommands


def cmd_fixpoint(cfg: ExperimentConfig, writer: RunWriter, threads: int) -> dict:
    res = fixed_point(cfg)
    writer.json("pair.json", p1.pair_to_record(res.pair))
    writer.csv("residual_log.csv", ["step", "residual"],
               [(i, float(np.max(np.abs(np.atleast_1d(h))))) for i, h in enumerate(res.history)])
    sp = p1.spectrum(res, n_modes=cfg.numerics["spectrum_modes"])
    ev = np.asarray(sp["eigenvalues"])
    writer.csv("spectrum.csv", ["index", "re", "im", "modulus"],
               [(i, float(v.real), float(v.imag), float(abs(v))) for i, v in enumerate(ev)])
    mods = np.abs(ev)
    unstable = int(np.count_nonzero(mods > 1.0))
    gap = float(np.min(np.abs(mods - 1.0))) if mods.size else math.nan
    lam = [float(s) for s in res.scales]
    further = [int(round(p1.height(z))) for z in p1.renormalization_orbit(res.pair, 10)[1:]]
    writer.csv("lambda.csv", ["step", "lambda"], list(enumerate(lam)))
    summary = {"residual": float(res.residual), "unstable_eigenvalues": unstable, "modulus_gap": gap,
               "lambda": lam[-1] if lam else math.nan, "heights": [int(h) for h in res.heights],
               "further_heights": further,
               "leading_modulus": float(mods.max()) if mods.size else math.nan}
    writer.json("summary.json", summary)
    return summary


def _invariant_report(z: p2.Pair2D) -> dict:
    return {"heights": list(p2.heights_2d(z)), "y_norm": p2.y_norm(z),
            "commutator_jets": p2.commutator_jets_2d(z).tolist()}


def _renorm_cell(cfg: ExperimentConfig, eps: float, fp_seed: p1.Pair1D | None) -> tuple[list[dict], dict]:
    if fp_seed is not None:
        z = p2.embed_iota(fp_seed)
    else:
        z, _ = critical_pair(cfg, eps)
    report = {"eps": float(eps), **_invariant_report(z)}
    rows = []
    prev = p2.y_norm(z)
    for step in range(1, cfg.depths["renorm_steps"] + 1):
        z = p2.renormalize2d(z, cfg.numerics["ky"])
        yn = float(z.meta["y_norm"])
        par = z.meta["params"]
        rows.append({"eps": float(eps), "step": step, "lambda": float(z.meta["lambda"]),
                     "r0": int(z.meta["r0"]), "r1": int(z.meta["r1"]), "y_norm": yn,
                     "y_norm_ratio": yn / prev ** 2 if prev > 0.0 else math.nan,
                     "c": par.c, "d": par.d, "e": par.e, "f": par.f, "pi_max": par.max_abs()})
        prev = yn
    return rows, report


def cmd_renorm2d(cfg: ExperimentConfig, writer: RunWriter, threads: int) -> dict:
    embedded = cfg.input == "embedded"
    seed = p1.arnold_seed(cfg.rotation_number()) if embedded else None
    cells = [0.0] if embedded else list(cfg.eps)
    out = _map_cells(lambda e: _renorm_cell(cfg, e, seed), cells, threads)
    rows = [r for cell_rows, _ in out for r in cell_rows]
    reports = [rep for _, rep in out]
    writer.json("input_report.json", reports)
    if cfg.depths["renorm_steps"] == 0:
        return {"depth": 0, "inputs": reports}
    writer.jsonl("steps.jsonl", rows)
    cols = ["eps", "step", "lambda", "r0", "r1", "y_norm", "y_norm_ratio", "c", "d", "e", "f"]
    writer.csv("steps.csv", cols, [[r[c] for c in cols] for r in rows])
    first = [r["y_norm_ratio"] for r in rows if r["step"] == 1]
    spread = max(first) / min(first) if first and min(first) > 0 else math.nan
    return {"cells": len(cells), "max_pi_param": max(r["pi_max"] for r in rows),
            "first_step_ratio_spread": spread}


def _atlas_cell(cfg: ExperimentConfig, eps: float) -> dict:
    level = cfg.depths["atlas_level"]
    orbit = _orbit(cfg, eps, level * at.PERIOD)
    atlas = at.attractor_points(orbit, level)
    stats = at.average_jacobian(orbit, atlas, cfg.depths["jacobian_samples"])
    res, diam = at.conjugacy_residual(orbit, atlas, seed=cfg.seed)
    out = {"eps": float(eps), "orbit": orbit, "atlas": atlas, "stats": stats,
           "conjugacy_residual": res, "max_diameter": diam, "lyapunov": None}
    if not stats.degenerate:
        out["lyapunov"] = at.lyapunov_exponents(orbit.pairs[0], cfg.depths["lyapunov_samples"])
    return out


def _write_atlas(writer: RunWriter, tag: str, atlas: at.AttractorAtlas) -> None:
    rows = [("".join(str(v) for v in a) or "-", s, float(x), float(y), atlas.level)
            for a, s, x, y in zip(atlas.address_keys(), atlas.sides, atlas.points[0], atlas.points[1])]
    writer.csv(f"atlas_{tag}.csv", ["address", "side", "x", "y", "level"], rows)
    writer.columns(f"scatter_{tag}.dat", ["x", "y"], [atlas.points[0], atlas.points[1]])


def _increment_rate(increments: Sequence[float]) -> float:
    inc = np.asarray(increments, dtype=float)
    if inc.size < 2 or np.any(inc <= 0.0):
        return math.nan
    return float(np.exp(np.polyfit(np.arange(inc.size), np.log(inc), 1)[0]))


def cmd_attractor(cfg: ExperimentConfig, writer: RunWriter, threads: int) -> dict:
    cells = _map_cells(lambda e: _atlas_cell(cfg, e), list(cfg.eps), threads)
    results = {}
    for c in cells:
        tag = f"eps{c['eps']:.0e}"
        _write_atlas(writer, tag, c["atlas"])
        st: at.JacobianStats = c["stats"]
        ly = c["lyapunov"]
        entry = {"eps": c["eps"], "b": st.b, "log_b": st.log_b, "log_b_cells": st.log_b_cells,
                 "degenerate": st.degenerate,
                 "chi0": ly.chi0 if ly else None, "chiminus": ly.chi_minus if ly else None,
                 "chi0_halfwidth": ly.chi0_halfwidth if ly else None,
                 "fits": {"increments": c["atlas"].increments,
                          "increment_rate": _increment_rate(c["atlas"].increments),
                          "conjugacy_residual": c["conjugacy_residual"],
                          "max_cell_diameter": c["max_diameter"]}}
        if st.degenerate:
            entry["notice"] = "Jacobian vanishes on the attractor: average Jacobian b is degenerate"
            log.warning("eps=%g: %s", c["eps"], entry["notice"])
        writer.json(f"stats_{tag}.json", entry)
        results[tag] = entry
    return results


def _universality_cell(cfg: ExperimentConfig, eps: float, lin: at.LinearizerResult,
                       fp_pair: p1.Pair1D, probe: np.ndarray) -> dict:
    k0, k1 = cfg.depths["universality_levels"]
    level = cfg.depths["atlas_level"]
    orbit = _orbit(cfg, eps, max(k1, level * at.PERIOD))
    rep = at.universality_fit(orbit, range(k0, k1 + 1), linearizer=lin, xi_star=fp_pair.xi, probe=probe)
    atlas = at.attractor_points(orbit, level)
    st = at.average_jacobian(orbit, atlas, cfg.depths["jacobian_samples"])
    return {"eps": float(eps), "report": rep, "stats": st}


def cmd_universality(cfg: ExperimentConfig, writer: RunWriter, threads: int) -> dict:
    fp = fixed_point(cfg)
    zs = at.renormalization_orbit(p2.embed_iota(fp.pair), 2, cfg.numerics["ky"])
    lin = at.scaling_and_linearizer(zs, 1, fixed_point=True, tol=cfg.numerics["linearizer_tol"])
    probe = at.probe_grid(zs.pairs[0], 41)
    cells = _map_cells(lambda e: _universality_cell(cfg, e, lin, fp.pair, probe), list(cfg.eps), threads)
    table = []
    for c in cells:
        rep, st = c["report"], c["stats"]
        rel = abs(rep.log_b_slope - st.log_b) / abs(st.log_b)
        table.append((c["eps"], rep.log_b_slope, st.log_b, rel, rel < 0.03, rep.f_min, rep.f_max,
                      rep.profile_vs_f))
    writer.csv("lnb_comparison.csv", ["eps", "lnb_slope", "lnb_average_jacobian", "rel_diff", "pass",
                                      "f_min", "f_max", "profile_vs_f"], table)
    writer.columns("profiles.dat", ["x"] + [f"profile_eps{c['eps']:.0e}" for c in cells] + ["f_ratio"],
                   [probe] + [c["report"].profiles[-1] for c in cells] + [cells[0]["report"].f_ratio])
    fits = [(c["eps"], int(k), float(n), float(v)) for c in cells
            for k, n, v in zip(c["report"].levels, c["report"].word_lengths, c["report"].log_norms)]
    writer.csv("slope_fits.csv", ["eps", "k", "word_length", "log_norm"], fits)
    writer.csv("linearizer.csv", ["period", "lambda_product", "sigma_product", "lprime_defect"],
               [(i, float(a), float(b), float(d)) for i, (a, b, d) in
                enumerate(zip(lin.lambda_products, lin.sigma_products, lin.lprime_defect))])
    dists = {}
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            dists[f"{cells[i]['eps']:.0e}/{cells[j]['eps']:.0e}"] = at.profile_distance(
                cells[i]["report"], cells[j]["report"])
    summary = {"rows": [dict(zip(["eps", "lnb_slope", "lnb_average_jacobian", "rel_diff", "pass"], r[:5]))
                        for r in table],
               "lprime_defect": float(np.max(lin.lprime_defect)),
               "functional_residual": lin.functional_residual, "v_prime_min": lin.v_prime_min,
               "profile_distances": dists}
    writer.json("universality.json", summary)
    return summary


def cmd_rigidity(cfg: ExperimentConfig, writer: RunWriter, threads: int) -> dict:
    if len(cfg.eps) < 2:
        raise ConfigError("rigidity needs two eps values")
    e1, e2 = float(cfg.eps[0]), float(cfg.eps[1])
    cells = _map_cells(lambda e: _atlas_cell(cfg, e), [e1, e2], threads)
    a1, a2 = cells[0]["atlas"], cells[1]["atlas"]
    b1, b2 = cells[0]["stats"].b, cells[1]["stats"].b
    n = cfg.depths["holder_pairs"]
    fwd = at.holder_estimate(a1, a2, n, seed=cfg.seed)
    back = at.holder_estimate(a2, a1, n, seed=cfg.seed)
    same = at.holder_estimate(a1, a1, n, seed=cfg.seed)
    hi, lo = (b1, b2) if b1 > b2 else (b2, b1)
    kappa = fwd.kappa if b1 > b2 else back.kappa
    bound = at.holder_bound(hi, lo)
    report = {"eps": [e1, e2], "b": [b1, b2], "kappa_hat": kappa, "kappa_forward": fwd.kappa,
              "kappa_backward": back.kappa, "reciprocity_product": fwd.kappa * back.kappa,
              "kappa_identity": same.kappa, "bound": bound, "slack": 0.05,
              "PASS": bool(kappa <= bound + 0.05), "scales": fwd.scales, "pairs": fwd.pairs}
    writer.json("rigidity.json", report)
    writer.csv("holder_windows.csv", ["window_center_log_d_tilde", "slope"],
               list(zip(fwd.window_centers, fwd.slopes)))
    return report


def cmd_rotation_checks(cfg: ExperimentConfig, writer: RunWriter, threads: int) -> dict:
    rho = cfg.rotation_number()
    ul = rot.ulambda_check(rho, 1, cfg.depths["ulambda_k"])
    writer.csv("ulambda.csv", ["k", "value", "bound"], [(r["k"], r["value"], r["bound"]) for r in ul["rows"]])
    pl = rot.proportion_limit(rho, cfg.depths["proportion_levels"])
    writer.csv("proportion.csv", ["l", "ratio", "residual"], [(r["l"], r["ratio"], r["residual"]) for r in pl["rows"]])
    lo, hi = cfg.depths["discrepancy_levels"]
    disc = []
    for m in range(lo, hi + 1):
        b = rot.discrepancy_bound(rho, m)
        d = rot.orbit_discrepancy(rho, b["N"])
        disc.append((m, b["N"], d, b["bound"], d <= b["bound"]))
    writer.csv("discrepancy.csv", ["m", "N", "discrepancy", "bound", "pass"], disc)
    summary = {"ulambda_A": ul["A"], "ulambda_pass": ul["pass"], "proportion_d": pl["d"],
               "proportion_rate": pl["rate"], "discrepancy_pass": all(r[-1] for r in disc)}
    writer.json("rotation_checks.json", summary)
    return summary


HANDLERS: dict[str, Callable[[ExperimentConfig, RunWriter, int], dict]] = {
    "fixpoint": cmd_fixpoint,
    "renorm2d": cmd_renorm2d,
    "attractor": cmd_attractor,
    "universality": cmd_universality,
    "rigidity": cmd_rigidity,
    "rotation-checks": cmd_rotation_checks,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="renormlab", description="Renormalization experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", help="run directory (default: <out_dir>/<command>-<config hash>)")
    ap.add_argument("--threads", type=int, default=1)
    return ap


def run(command: str, cfg: ExperimentConfig, out: str | None = None, threads: int = 1) -> Path:
    root = Path(out) if out else Path(cfg.out_dir) / f"{command}-{cfg.digest()[:12]}"
    writer = RunWriter(root)
    t0 = time.perf_counter()
    writer.json("config.json", cfg.to_dict())
    results = HANDLERS[command](cfg, writer, threads)
    write_manifest(writer, cfg, command, time.perf_counter() - t0, results)
    return root


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = apply_seed_override(ExperimentConfig.load(args.config))
        root = run(args.command, cfg, args.out, args.threads)
    except RenormError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    log.info("wrote %s", root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
