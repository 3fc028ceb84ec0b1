"""End-to-end acceptance checks, one test per criterion, each printing a PASS/FAIL line."""
import json
import math
import time

import numpy as np
import pytest

from renormlab import attractor as at
from renormlab import cli
from renormlab import pairs1d as p1
from renormlab import pairs2d as p2
from renormlab import rotation as rot
from renormlab.rotation import RotationNumber

GOLDEN = RotationNumber.golden()
SILVER = RotationNumber.periodic([2])


@pytest.fixture
def verdict(capsys):
    def report(n: int, checks: dict) -> None:
        ok = all(passed for passed, _ in checks.values())
        detail = "; ".join(f"{name}={val}" + ("" if passed else " (fail)")
                           for name, (passed, val) in checks.items())
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail
    return report


def fmt(x: float) -> str:
    return f"{x:.3g}"


def fd_jacobian(fun, v, h=1e-5):
    cols = []
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        cols.append((fun(v + e) - fun(v - e)) / (2 * h))
    return np.column_stack(cols)


@pytest.fixture(scope="module")
def timed_fixed_point():
    t0 = time.perf_counter()
    res = p1.newton_fixed_point(p1.arnold_seed(GOLDEN), GOLDEN)
    return res, time.perf_counter() - t0


def test_criterion_1_fixed_point(verdict, timed_fixed_point):
    res, wall = timed_fixed_point
    heights = [int(round(p1.height(z))) for z in p1.renormalization_orbit(res.pair, 10)[1:]]
    verdict(1, {"residual<1e-9": (res.residual < 1e-9, fmt(res.residual)),
                "heights==1": (heights == [1] * 10, heights),
                "runtime<300s": (wall < 300.0, fmt(wall))})


def test_criterion_2_spectrum(verdict, timed_fixed_point):
    sp = p1.spectrum(timed_fixed_point[0], n_modes=10)
    mods = np.sort(np.abs(np.asarray(sp["eigenvalues"])))[::-1][:10]
    gap = float(np.min(np.abs(mods - 1.0)))
    verdict(2, {"unstable==1": (int(np.count_nonzero(mods > 1.0)) == 1, fmt(mods[0])),
                "gap>0.05": (gap > 0.05, fmt(gap))})


def test_criterion_3_commutator_preservation(verdict, critical_pairs):
    omega = p1.tune_omega(p1.ArnoldLift, GOLDEN, 20)
    z = p1.pair_from_circle_map(p1.ArnoldLift(omega), -1, GOLDEN.digits(6))
    jets1 = []
    for _ in range(4):
        z = p1.renormalize(z)
        jets1.append(float(np.max(np.abs(p1.commutator_jet(z)))))
    jets2, params = [], []
    for eps, (w, _) in critical_pairs.items():
        for _ in range(2):
            w = p2.renormalize2d(w)
            jets2.append(float(np.max(np.abs(p2.commutator_jets_direct(w)))))
            params.append(w.meta["params"].max_abs())
    verdict(3, {"1D jets<1e-8": (max(jets1) < 1e-8, fmt(max(jets1))),
                "2D jets<1e-8": (max(jets2) < 1e-8, fmt(max(jets2))),
                "Pi params<1e-10": (max(params) < 1e-10, fmt(max(params)))})


def test_criterion_4_jet_map_jacobian(verdict, critical_pairs, rng):
    base = critical_pairs[1e-3][0]
    worst = 0.0
    for _ in range(20):
        z = p2.add_to_b(base, p2.ProjectionParams.from_array(rng.uniform(-1e-3, 1e-3, 4)))
        data = p2.jet_data(z)
        v = rng.uniform(-1e-3, 1e-3, 4)
        ana = p2.jet_map_jacobian(data, p2.ProjectionParams.from_array(v))
        num = fd_jacobian(lambda w: p2.jets_closed_form(data, p2.ProjectionParams.from_array(w)), v)
        worst = max(worst, float(np.max(np.abs(ana - num) / np.abs(ana))))
    verdict(4, {"max rel diff<1e-6": (worst < 1e-6, fmt(worst))})


def test_criterion_5_dissipation_decay(verdict, sweep_pairs):
    ratios = {eps: p2.y_norm(p2.renormalize2d(z)) / p2.y_norm(z) ** 2 for eps, z in sweep_pairs.items()}
    spread = max(ratios.values()) / min(ratios.values())
    verdict(5, {"ratio spread<3": (spread < 3.0, fmt(spread))})


def test_criterion_6_rotation_estimates(verdict):
    ul_g = rot.ulambda_check(GOLDEN, 1, 20)
    ul_s = rot.ulambda_check(SILVER, 1, 20)
    pl = rot.proportion_limit(GOLDEN, 12)
    res = [r for r in pl["rows"] if r["residual"] > 1e-13]
    slope = float(np.polyfit([r["l"] for r in res], np.log([r["residual"] for r in res]), 1)[0])
    disc = []
    for m in range(5, 13):
        b = rot.discrepancy_bound(GOLDEN, m)
        disc.append(rot.orbit_discrepancy(GOLDEN, b["N"]) <= b["bound"])
    verdict(6, {"ulambda golden": (ul_g["pass"] and math.isfinite(ul_g["A"]), fmt(ul_g["A"])),
                "ulambda silver": (ul_s["pass"] and math.isfinite(ul_s["A"]), fmt(ul_s["A"])),
                "proportion geometric": (slope < 0.0, fmt(slope)),
                "discrepancy<=bound": (all(disc), sum(disc))})


def test_criterion_7_average_jacobian(verdict, orbits, atlases, critical_pairs):
    eps = 1e-3
    orbit = orbits[eps]
    q_a, q_b = orbit.pairs[0].meta["q"]
    rho = GOLDEN.value
    oracle = eps ** ((q_a + rho * q_b) / (1.0 + rho))
    st = at.average_jacobian(orbit, atlases[(eps, 3)])
    rel = abs(st.b / oracle - 1.0)
    ly = at.lyapunov_exponents(critical_pairs[eps][0], 100_000)
    chi_rel = abs(ly.chi_minus - st.log_b) / abs(st.log_b)
    verdict(7, {"b rel<1e-5": (rel < 1e-5, fmt(rel)),
                "|chi0|<0.02": (abs(ly.chi0) < 0.02, fmt(ly.chi0)),
                "chi- rel<2%": (chi_rel < 0.02, fmt(chi_rel))})


def test_criterion_8_universality(verdict, orbits, atlases, harmonic_pair, linearizer, fixed_point,
                                  fixed_point_orbit):
    probe = at.probe_grid(fixed_point_orbit.pairs[0])
    orbit = orbits[1e-3]
    rep = at.universality_fit(orbit, range(2, 7), linearizer=linearizer, xi_star=fixed_point.pair.xi,
                              probe=probe)
    log_b = at.average_jacobian(orbit, atlases[(1e-3, 3)]).log_b
    slope_rel = abs(rep.log_b_slope / log_b - 1.0)
    other = at.universality_fit(at.renormalization_orbit(harmonic_pair[0], 6), range(2, 7), probe=probe)
    dist = at.profile_distance(rep, other)
    lp = float(np.max(linearizer.lprime_defect))
    bounded = 0.0 < rep.f_min <= rep.f_max < math.inf
    verdict(8, {"slope rel<3%": (slope_rel < 0.03, fmt(slope_rel)),
                "profile dist<2%": (dist < 0.02, fmt(dist)),
                "f bounded": (bounded, f"[{fmt(rep.f_min)}, {fmt(rep.f_max)}]"),
                "l'(0)-lambda^3<1e-7": (lp < 1e-7, fmt(lp))})


def test_criterion_9_rigidity(verdict, tmp_path):
    cfg = tmp_path / "rigidity.json"
    cfg.write_text(json.dumps({"eps": [1e-2, 1e-3]}))
    t0 = time.perf_counter()
    code = cli.main(["rigidity", "--config", str(cfg), "--out", str(tmp_path / "run"), "--threads", "4"])
    wall = time.perf_counter() - t0
    rep = json.loads((tmp_path / "run" / "rigidity.json").read_text()) if code == 0 else {}
    ident = rep.get("kappa_identity", math.nan)
    kappa, bound = rep.get("kappa_hat", math.nan), rep.get("bound", math.nan)
    verdict(9, {"exit 0": (code == 0, code),
                "kappa(Z,Z)=1+-2%": (abs(ident - 1.0) <= 0.02, fmt(ident)),
                "kappa<=bound+0.05": (kappa <= bound + 0.05, f"{fmt(kappa)} vs {fmt(bound)}"),
                "runtime<1800s": (wall < 1800.0, fmt(wall))})


def test_criterion_10_microscope(verdict, orbits, atlases):
    orbit = orbits[1e-3]
    norms = [float(np.max(at.branch_maps(orbit, lvl).sup_norms)) for lvl in (1, 2)]
    inc = np.asarray(atlases[(1e-3, 3)].increments)
    rate = math.exp(float(np.polyfit(np.arange(inc.size), np.log(inc), 1)[0]))
    verdict(10, {"branch norm<1/2": (max(norms) < 0.5, fmt(max(norms))),
                 "increment rate<0.8": (rate < 0.8, fmt(rate))})
