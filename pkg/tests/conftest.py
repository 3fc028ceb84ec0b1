"""Session fixtures for the expensive objects: fixed point, tuned 1D and 2D pairs."""
import numpy as np
import pytest

from renormlab import attractor as at
from renormlab import pairs1d as p1
from renormlab import pairs2d as p2
from renormlab.rotation import RotationNumber

GOLDEN = RotationNumber.golden()
HARMONIC_BETA = 0.2


@pytest.fixture(scope="session")
def golden():
    return GOLDEN


@pytest.fixture(scope="session")
def arnold_seed():
    return p1.arnold_seed(GOLDEN)


@pytest.fixture(scope="session")
def fixed_point(arnold_seed):
    return p1.newton_fixed_point(arnold_seed, GOLDEN)


@pytest.fixture(scope="session")
def fixed_point_spectrum(fixed_point):
    return p1.spectrum(fixed_point)


@pytest.fixture(scope="session")
def fixed_point_orbit(fixed_point):
    """2D orbit of the embedded fixed point (two steps are enough for l and v)."""
    return at.renormalization_orbit(p2.embed_iota(fixed_point.pair), 2)


@pytest.fixture(scope="session")
def linearizer(fixed_point_orbit):
    return at.scaling_and_linearizer(fixed_point_orbit, 1, fixed_point=True)


@pytest.fixture(scope="session")
def critical_pairs():
    """Tuned critical annulus pairs, keyed by eps."""
    return {eps: p2.tune_critical_pair(eps, GOLDEN) for eps in (1e-2, 1e-3)}


@pytest.fixture(scope="session")
def sweep_pairs(critical_pairs):
    """Critical pairs over the dissipation sweep eps ∈ {1e-2, 1e-3, 1e-4}."""
    out = {eps: z for eps, (z, _) in critical_pairs.items()}
    out[1e-4] = p2.tune_critical_pair(1e-4, GOLDEN)[0]
    return out


@pytest.fixture(scope="session")
def harmonic_pair():
    """Critical pair of a second family (extra sin 4πx harmonic) with the same b as eps = 1e-3."""
    fam = lambda w, k: p2.AnnulusMap(p1.ArnoldLift(w, k, HARMONIC_BETA), 1e-3)
    return p2.tune_critical_pair(1e-3, GOLDEN, k0=1.0 + HARMONIC_BETA, family=fam)


@pytest.fixture(scope="session")
def modulated_pair():
    """Critical pair with x-dependent dissipation (y − x)(1 + sin(2πx)/4)."""
    fam = lambda w, k: p2.modulated_annulus_map(p1.ArnoldLift(w, k), 1e-3)
    return p2.tune_critical_pair(1e-3, GOLDEN, depth=12, family=fam)


@pytest.fixture(scope="session")
def orbits(critical_pairs):
    """Renormalization orbits of 9 steps (three microscope levels), keyed by eps."""
    return {eps: at.renormalization_orbit(z, 9) for eps, (z, _) in critical_pairs.items()}


@pytest.fixture(scope="session")
def atlases(orbits):
    return {(eps, k): at.attractor_points(o, k) for eps, o in orbits.items() for k in (2, 3)}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)
