import json
import math
from fractions import Fraction

import numpy as np
import pytest

from renormlab import funcalc as fc
from renormlab import pairs1d as p1
from renormlab.errors import ArgumentError, CombinatoricsError
from renormlab.rotation import RotationNumber

GOLDEN = RotationNumber.golden()
THETA = (math.sqrt(5.0) - 1.0) / 2.0
TOL_COMM = 1e-9


def cf_convergents(digits):
    """(p_j, q_j) for j = 0..len(digits), with (p_0, q_0) = (0, 1), by brute-force fractions."""
    out = [(0, 1)]
    for j in range(1, len(digits) + 1):
        x = Fraction(0)
        for r in reversed(digits[:j]):
            x = 1 / (r + x)
        out.append((x.numerator, x.denominator))
    return out


def probe(f, n=25):
    return f.domain.grid(n)[2:-2]


@pytest.fixture(scope="module")
def arnold_pair():
    """Pair (f̄ − 0, f̄⁰ − 1) of the tuned critical Arnold map: commuting to fit precision."""
    omega = p1.tune_omega(p1.ArnoldLift, GOLDEN, 20)
    return p1.pair_from_circle_map(p1.ArnoldLift(omega), -1, GOLDEN.digits(6))


# ---------------------------------------------------------------- height


def test_rigid_golden_height_one():
    assert p1.height(p1.rigid_pair(GOLDEN)) == 1


def test_rigid_height_two():
    assert p1.height(p1.rigid_pair(RotationNumber((2,), (1,)))) == 2


def test_height_infinite_for_attracting_fixed_point():
    # η(x) = 0.5 + 0.9(x − 0.5): the orbit of ξ(0) = 1 converges to 0.5 and never crosses 0
    eta = fc.from_power([0.05, 0.9], p1.nbhd(1.0))
    xi = fc.from_power([1.0, 1.0], p1.nbhd(-0.5))
    assert p1.height(p1.Pair1D(eta, xi)) == math.inf


def test_infinite_height_not_renormalizable():
    eta = fc.from_power([0.05, 0.9], p1.nbhd(1.0))
    xi = fc.from_power([1.0, 1.0], p1.nbhd(-0.5))
    with pytest.raises(CombinatoricsError):
        p1.prerenormalize(p1.Pair1D(eta, xi))


def test_rigid_pair_rejects_bad_value():
    with pytest.raises(ArgumentError):
        p1.rigid_pair(1.5)


# ---------------------------------------------------------------- prerenormalization


def test_prerenormalize_rigid_golden_is_affine():
    rho = GOLDEN.value
    pre = p1.prerenormalize(p1.rigid_pair(GOLDEN))
    x = probe(pre.eta)
    assert np.max(np.abs(fc.evaluate(pre.eta, x) - (x + 1.0 - rho))) < 1e-14
    x = probe(pre.xi)
    assert np.max(np.abs(fc.evaluate(pre.xi, x) - (x - rho))) < 1e-14


def test_prerenormalize_height_two_pointwise(arnold_seed):
    silver = RotationNumber.periodic([2])
    z = p1.arnold_seed(silver, depth=12, renorms=2)
    assert p1.height(z) == 2
    pre = p1.prerenormalize(z)
    x = probe(pre.eta, 14)
    ref = z.apply("XEE", x)
    assert np.max(np.abs(fc.evaluate(pre.eta, x) - ref)) < 1e-12


def test_prerenormalize_preserves_commuting(arnold_pair):
    pre = p1.prerenormalize(arnold_pair)
    assert np.max(np.abs(p1.commutator_jet(arnold_pair))) < TOL_COMM
    assert np.max(np.abs(p1.commutator_jet(pre))) < TOL_COMM


# ---------------------------------------------------------------- renormalization


def test_renormalize_rigid_golden_is_self_similar():
    z = p1.rigid_pair(GOLDEN)
    rz = p1.renormalize(z)
    assert rz.meta["lambda"] == pytest.approx(-THETA, abs=1e-14)
    assert p1.pair_distance(z, rz) < 1e-13


def test_renormalize_keeps_commuting(arnold_pair):
    assert np.max(np.abs(p1.commutator_jet(p1.renormalize(arnold_pair)))) < TOL_COMM


def test_renormalize_jet_growth_bounded(arnold_pair):
    z = arnold_pair
    for _ in range(4):
        rz = p1.renormalize(z)
        before = max(np.max(np.abs(p1.commutator_jet(z))), 1e-14)
        assert np.max(np.abs(p1.commutator_jet(rz))) < 10 * max(before, TOL_COMM)
        z = rz


def test_heights_consumed_in_order():
    rho = RotationNumber((2, 1, 3), (1,))
    z = p1.rigid_pair(rho)
    hs = [rz.meta["height"] for rz in p1.renormalization_orbit(z, 6)[1:]]
    assert hs == list(rho.digits(6))


# ---------------------------------------------------------------- rotation number


def test_rotation_number_rigid_golden():
    pref = p1.rotation_number(p1.rigid_pair(GOLDEN), 8)
    assert pref.digits == (1,) * 8 and not pref.rational


def test_rotation_number_tuned_silver():
    silver = RotationNumber.periodic([2])
    z = p1.arnold_seed(silver, depth=12, renorms=0)
    assert p1.rotation_number(z, 5).digits == (2,) * 5


def test_rotation_number_rational_flag():
    eta = fc.from_power([0.05, 0.9], p1.nbhd(1.0))
    xi = fc.from_power([1.0, 1.0], p1.nbhd(-0.5))
    pref = p1.rotation_number(p1.Pair1D(eta, xi), 4)
    assert pref.rational and pref.digits == ()


def test_rotation_number_depth_must_be_positive():
    with pytest.raises(ArgumentError):
        p1.rotation_number(p1.rigid_pair(GOLDEN), 0)


# ---------------------------------------------------------------- circle maps to pairs


@pytest.mark.parametrize("m", [-1, 0, 1, 2])
def test_pair_from_rigid_lift_integer_oracle(m):
    rho = GOLDEN.value
    digits = GOLDEN.digits(m + 4)
    z = p1.pair_from_circle_map(p1.RigidLift(rho), m, digits)
    conv = [(1, 0)] + cf_convergents(list(digits))  # index shift: conv[j + 1] = (p_j, q_j), j ≥ −1
    p0, q0 = conv[m + 1]
    pn, qn = conv[m + 2]
    s = q0 * rho - p0
    assert z.meta["scale"] == pytest.approx(s, abs=1e-13)
    x = probe(z.eta)
    assert np.max(np.abs(fc.evaluate(z.eta, x) - (x + (qn * rho - pn) / s))) < 1e-11
    x = probe(z.xi)
    assert np.max(np.abs(fc.evaluate(z.xi, x) - (x + 1.0))) < 1e-11
    assert z.meta["q"] == (q0, qn) and z.meta["p"] == (p0, pn)


def test_pair_from_rigid_lift_m_minus_one_is_rigid_pair():
    z = p1.pair_from_circle_map(p1.RigidLift(GOLDEN.value), -1, GOLDEN.digits(3))
    assert p1.pair_distance(z, p1.rigid_pair(GOLDEN)) < 1e-13


@pytest.fixture(scope="module")
def arnold_pair_m2():
    omega = p1.tune_omega(p1.ArnoldLift, GOLDEN, 16)
    return p1.pair_from_circle_map(p1.ArnoldLift(omega), 2, GOLDEN.digits(8))


def test_pair_from_arnold_map_rotation_digits(arnold_pair_m2):
    assert p1.rotation_number(arnold_pair_m2, 4).digits == (1,) * 4


def test_pair_from_arnold_map_jet_routes_agree(arnold_pair_m2):
    cauchy = p1.commutator_jet(arnold_pair_m2)
    chain = p1.commutator_jet_chain_rule(arnold_pair_m2)
    assert np.max(np.abs(cauchy - chain)) < 1e-11


def test_pair_from_arnold_map_jets_vanish(arnold_pair_m2):
    assert np.max(np.abs(p1.commutator_jet(arnold_pair_m2))) < 1e-12


def test_pair_from_circle_map_rejects_bad_m():
    with pytest.raises(ArgumentError):
        p1.pair_from_circle_map(p1.RigidLift(0.3), -2)


# ---------------------------------------------------------------- pairs to circle maps


def test_circle_map_glue_rigid():
    f = p1.circle_map_from_pair(p1.rigid_pair(GOLDEN))
    assert f.glue_residual() < 1e-12
    assert f.interval.width == pytest.approx(1.0, abs=1e-14)


def test_circle_map_rigid_is_rotation():
    rho = GOLDEN.value
    f = p1.circle_map_from_pair(p1.rigid_pair(GOLDEN))
    x = np.linspace(f.interval.lo, f.interval.hi, 50, endpoint=False)
    step = (f.reduce(f(x)) - x) % 1.0
    assert np.max(np.abs(step - (1.0 - rho))) < 1e-12


def test_circle_map_branch_frequency_tuned_pair(arnold_seed):
    f = p1.circle_map_from_pair(arnold_seed)
    assert f.glue_residual() < 1e-12
    freq = f.branch_frequency(4000)
    # oracle: digits of the frequency by the Gauss map
    digits, x = [], freq
    for _ in range(3):
        x = 1.0 / x
        digits.append(int(x))
        x -= int(x)
    assert digits == [1, 1, 1]
    assert freq == pytest.approx(GOLDEN.value, abs=2e-3)


# ---------------------------------------------------------------- commutator jets


def test_commutator_of_iterates_vanishes(arnold_pair):
    assert np.max(np.abs(p1.commutator_jet(arnold_pair))) < 1e-10


def eta_jets(z):
    return p1._map_derivs(z.eta, 0.0)


def test_commutator_quartic_perturbation(arnold_pair):
    # η∘(ξ + δx⁴) − (ξ + δx⁴)∘η differs from the commutator by η'(ξ)δx⁴ − δη⁴;
    # the first term is o(x³), the second shifts the jets by −δ(η₀⁴, 0, 0, 4η₀³η‴(0)) when η'(0) = η''(0) = 0
    z, d = arnold_pair, 1e-3
    pert = fc.from_power([0, 0, 0, 0, d], z.xi.domain)
    xi = fc.fit(lambda x: fc.evaluate(z.xi, x) + fc.evaluate(pert, x), z.xi.domain)
    jet = p1.commutator_jet(p1.Pair1D(z.eta, xi))
    e0, e1, e2, e3 = eta_jets(z)
    assert abs(e1) < 1e-9 and abs(e2) < 1e-8
    oracle = -d * np.array([e0 ** 4, 0.0, 0.0, 4.0 * e0 ** 3 * e3])
    assert np.max(np.abs(jet - oracle)) < 1e-10


def test_commutator_linear_perturbation(arnold_pair_m2):
    # derivative of η(ξ + δx) − ξ(η) − δη at 0 gains δ·η'(ξ(0)) since ξ'(0) = η'(0) = 0
    z, d = arnold_pair_m2, 1e-3
    xi = fc.fit(lambda x: fc.evaluate(z.xi, x) + d * x, z.xi.domain)
    shift = p1.commutator_jet(p1.Pair1D(z.eta, xi)) - p1.commutator_jet(z)
    slope = float(fc.evaluate(fc.derivative(z.eta, 1), z.xi0))
    assert abs(shift[1]) > 1e-5
    assert shift[1] == pytest.approx(d * slope, abs=1e-10)


def test_commutator_routes_agree(arnold_pair):
    z = p1.Pair1D(arnold_pair.eta, fc.fit(lambda x: fc.evaluate(arnold_pair.xi, x) + 1e-3 * x ** 2,
                                          arnold_pair.xi.domain))
    assert np.max(np.abs(p1.commutator_jet(z) - p1.commutator_jet_chain_rule(z))) < 1e-7


# ---------------------------------------------------------------- dynamical partitions


def test_partition_rigid_golden_level_one():
    rho = GOLDEN.value
    part = p1.dynamical_partition(p1.rigid_pair(GOLDEN), 1)
    assert len(part.elements) == 3
    assert np.allclose(part.lengths(), [rho, 1.0 - rho, rho], atol=1e-14)
    assert part.elements[0].interval.lo == pytest.approx(-rho, abs=1e-14)
    assert part.elements[-1].interval.hi == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_partition_counts_are_return_times(k):
    # level-k partition has q_{k+1} + q_k elements (consecutive Fibonacci numbers for the golden mean)
    conv = cf_convergents(list(GOLDEN.digits(k + 2)))
    part = p1.dynamical_partition(p1.rigid_pair(GOLDEN), k)
    assert len(part.elements) == conv[k + 1][1] + conv[k][1]


@pytest.mark.parametrize("k", [2, 4, 6])
def test_partition_covers_without_overlap(fixed_point, k):
    part = p1.dynamical_partition(fixed_point.pair, k)
    assert part.max_gap < 1e-8 and part.max_overlap < 1e-8
    total = part.lengths().sum()
    assert total == pytest.approx(fixed_point.pair.xi0 - fixed_point.pair.eta0, abs=1e-8)


def test_partition_adjacent_ratios_bounded(fixed_point):
    bounds = []
    for k in range(2, 9):
        r = p1.adjacent_ratios(p1.dynamical_partition(fixed_point.pair, k))
        bounds.append(max(r.max(), 1.0 / r.min()))
    # commensurability constant does not grow with the level
    assert max(bounds[3:]) <= 1.05 * max(bounds[:3])


def test_partition_lengths_decay(fixed_point):
    widths = [p1.dynamical_partition(fixed_point.pair, k).lengths().max() for k in range(1, 9)]
    assert all(b < a for a, b in zip(widths, widths[1:]))


def test_multi_index_run_lengths():
    assert p1.multi_index("") == (0, 0)
    assert p1.multi_index("EEX") == (2, 1)
    assert p1.multi_index("XE") == (0, 1, 1, 0)


# ---------------------------------------------------------------- fixed point and spectrum


def test_fixed_point_residual(fixed_point):
    assert fixed_point.residual < 1e-9
    assert fixed_point.heights == [1]


def test_fixed_point_normalized(fixed_point):
    assert fixed_point.pair.xi0 == pytest.approx(1.0, abs=1e-12)


def test_fixed_point_renormalizes_to_itself(fixed_point):
    z = fixed_point.pair
    rz = p1.renormalize(z)
    assert p1.pair_distance(z, rz) < 1e-8
    assert rz.meta["lambda"] == pytest.approx(fixed_point.scales[0], abs=1e-9)


def test_fixed_point_scaling_value(fixed_point):
    # known scaling of the golden critical circle-map fixed point
    assert fixed_point.scales[0] == pytest.approx(-0.7760, abs=5e-4)


def test_fixed_point_commutes(fixed_point):
    assert np.max(np.abs(p1.commutator_jet(fixed_point.pair))) < TOL_COMM


def test_fixed_point_commutes_in_cubic_class(fixed_point):
    # ξ(0) − 1, [η,ξ](0) and [η,ξ]‴(0) evaluated on the x³-series themselves
    assert np.max(np.abs(p1._cubic_constraints(fixed_point.cls, fixed_point.coeffs))) < 1e-12


def test_fixed_point_independent_of_seed(fixed_point, golden):
    other = p1.newton_fixed_point(p1.arnold_seed(golden, renorms=4, m=0), golden)
    assert p1.pair_distance(other.pair, fixed_point.pair) < 1e-8


def test_fixed_point_rejects_wrong_heights(arnold_seed):
    with pytest.raises(CombinatoricsError):
        p1.newton_fixed_point(arnold_seed, RotationNumber.periodic([2]))


def test_spectrum_one_unstable(fixed_point_spectrum):
    ev = np.abs(fixed_point_spectrum["eigenvalues"])
    assert ev.size == 10
    assert int(np.sum(ev > 1.0)) == 1
    assert np.min(np.abs(ev - 1.0)) > 1e-3


def test_spectrum_unstable_value(fixed_point_spectrum):
    # the universal unstable eigenvalue for golden critical circle maps
    mu = fixed_point_spectrum["eigenvalues"][0]
    assert abs(mu.imag) < 1e-9
    assert mu.real == pytest.approx(-2.8336, abs=2e-3)


def test_spectrum_well_conditioned(fixed_point_spectrum):
    assert not fixed_point_spectrum["ill_conditioned"]


# ---------------------------------------------------------------- horseshoe


def test_orbits_of_two_golden_pairs_converge(golden):
    a = p1.pair_from_circle_map(p1.ArnoldLift(p1.tune_omega(p1.ArnoldLift, golden, 20)), -1,
                                golden.digits(16))
    fam = lambda w: p1.ArnoldLift(w, 1.2, 0.2)
    b = p1.pair_from_circle_map(fam(p1.tune_omega(fam, golden, 20)), -1, golden.digits(16))
    dist = [p1.pair_distance(x, y) for x, y in zip(p1.renormalization_orbit(a, 12),
                                                    p1.renormalization_orbit(b, 12))]
    tail = dist[3:]
    assert all(y < x for x, y in zip(tail, tail[1:]))
    assert dist[-1] < dist[3] / 10


# ---------------------------------------------------------------- serialization


def test_pair_record_round_trip(fixed_point):
    z = fixed_point.pair
    back = p1.pair_from_record(json.loads(json.dumps(p1.pair_to_record(z))))
    assert np.array_equal(back.eta.coeffs, z.eta.coeffs) and np.array_equal(back.xi.coeffs, z.xi.coeffs)
    assert back.eta.domain == z.eta.domain


def test_pair_record_kind_checked():
    with pytest.raises(ArgumentError):
        p1.pair_from_record({"kind": "pair2d"})
