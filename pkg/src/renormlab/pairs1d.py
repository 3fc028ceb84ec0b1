"""One-dimensional critical (almost-)commuting pairs and their renormalization.

Orientation: pairs are normalized so that ξ(0) = 1 and η(0) < 0.  The map η
lives on a neighbourhood of [0, 1] and ξ on a neighbourhood of [η(0), 0].
Each renormalization consumes one continued-fraction digit (the height).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from . import funcalc as fc
from .errors import (ArgumentError, CombinatoricsError, ConsistencyError,
                     ConvergenceError, DomainError, PrecisionError, StructuralError)
from .funcalc import AnalyticMap1D, Interval
from .rotation import RotationNumber, convergents

DELTA = 0.1          # relative enlargement of the dynamical intervals
TOL_COMM = 1e-9
TOL_GEOM = 1e-9
TIE_TOL = 1e-12
MAX_HEIGHT = 10_000


def nbhd(end: float, other: float = 0.0, margin: float = DELTA) -> Interval:
    """Interval spanned by other and end, enlarged by margin·|end − other| on both sides."""
    lo, hi = min(end, other), max(end, other)
    pad = margin * (hi - lo)
    return Interval(lo - pad, hi + pad)


@dataclass(frozen=True, eq=False)
class Pair1D:
    eta: AnalyticMap1D
    xi: AnalyticMap1D
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def eta0(self) -> float:
        return float(fc.evaluate(self.eta, 0.0))

    @property
    def xi0(self) -> float:
        return float(fc.evaluate(self.xi, 0.0))

    @property
    def interval_eta(self) -> Interval:
        return nbhd(self.xi0, margin=0.0)

    @property
    def interval_xi(self) -> Interval:
        return nbhd(self.eta0, margin=0.0)

    def apply(self, word: Sequence[str], x):
        """Apply letters in order: 'E' for η, 'X' for ξ."""
        y = x
        for letter in word:
            y = fc.evaluate(self.eta if letter == "E" else self.xi, y)
        return y


def scalar_meta(meta: dict) -> dict:
    """The JSON-representable scalar entries of a meta dict (floats as hex strings)."""
    out = {}
    for k, v in meta.items():
        if isinstance(v, (bool, int, str)):
            out[k] = v
        elif isinstance(v, float):
            out[k] = float(v).hex()
    return out


def pair_to_record(zeta: Pair1D) -> dict:
    return {"kind": "pair1d", "eta": fc.to_record(zeta.eta), "xi": fc.to_record(zeta.xi),
            "meta": scalar_meta(zeta.meta)}


def pair_from_record(rec: dict) -> Pair1D:
    if rec.get("kind") != "pair1d":
        raise ArgumentError("record is not a 1D pair")
    return Pair1D(fc.from_record(rec["eta"]), fc.from_record(rec["xi"]), dict(rec.get("meta", {})))


def rigid_pair(rho: RotationNumber | float) -> Pair1D:
    """The affine pair (x − ρ, x + 1): a rotation of a circle of length 1 + ρ."""
    r = rho.value if isinstance(rho, RotationNumber) else float(rho)
    if not 0.0 < r < 1.0:
        raise ArgumentError("rotation value must lie in (0, 1)")
    eta = fc.from_power([-r, 1.0], nbhd(1.0))
    xi = fc.from_power([1.0, 1.0], nbhd(-r))
    return Pair1D(eta, xi, {"rho": r})


# ---------------------------------------------------------------------------
# heights and renormalization


def height_from_orbit(step: Callable[[float], float], x0: float,
                      max_height: int = MAX_HEIGHT) -> float:
    """Smallest r ≥ 1 with 0 between step^r(x0) and step^{r+1}(x0); inf if the orbit stalls."""
    if x0 == 0.0:
        raise CombinatoricsError("ξ(0) = 0: degenerate pair")
    side = math.copysign(1.0, x0)
    x = x0
    for r in range(max_height + 1):
        nxt = float(step(x))
        if abs(nxt) < TIE_TOL:
            raise CombinatoricsError(f"height tie: iterate {r + 1} within {TIE_TOL} of 0")
        if math.copysign(1.0, nxt) != side:
            if r == 0:
                raise CombinatoricsError("η moves ξ(0) across 0 in one step; height 0 is not allowed")
            return r
        if (nxt - x) * side >= 0.0:
            return math.inf
        x = nxt
    return math.inf


def height(zeta: Pair1D) -> float:
    return height_from_orbit(lambda x: fc.evaluate(zeta.eta, x), zeta.xi0)


def prerenormalize(zeta: Pair1D, r: int | None = None) -> Pair1D:
    """(η^r∘ξ on I_ξ, η on [0, η^r(ξ(0))]) without rescaling."""
    if r is None:
        r = height(zeta)
    if not math.isfinite(r):
        raise CombinatoricsError("infinite height: pair is not renormalizable")
    r = int(r)
    eta_r_x0 = zeta.apply("E" * r, zeta.xi0)
    new_eta = fc.compose_chain([zeta.xi] + [zeta.eta] * r, nbhd(zeta.eta0))
    new_xi = fc.restrict(zeta.eta, nbhd(eta_r_x0))
    return Pair1D(new_eta, new_xi, {"height": r})


def renormalize(zeta: Pair1D) -> Pair1D:
    r = height(zeta)
    pre = prerenormalize(zeta, r)
    s = pre.xi0
    if abs(s) >= 1.0:
        raise StructuralError(f"rescaling factor {s} is not contracting")
    out = Pair1D(fc.rescale(pre.eta, s), fc.rescale(pre.xi, s), {"lambda": s, "height": int(r)})
    return out


@dataclass(frozen=True)
class RotationPrefix:
    digits: tuple[int, ...]
    rational: bool


def rotation_number(zeta: Pair1D, depth: int) -> RotationPrefix:
    if depth < 1:
        raise ArgumentError("depth must be >= 1")
    digits = []
    z = zeta
    for i in range(depth):
        r = height(z)
        if not math.isfinite(r):
            return RotationPrefix(tuple(digits), True)
        digits.append(int(r))
        if i + 1 < depth:
            z = renormalize(z)
    return RotationPrefix(tuple(digits), False)


def renormalization_orbit(zeta: Pair1D, k: int) -> list[Pair1D]:
    out = [zeta]
    for _ in range(k):
        out.append(renormalize(out[-1]))
    return out


def pair_distance(z1: Pair1D, z2: Pair1D, n: int = 200) -> float:
    """Sup distance of both maps over the intersection of their dynamical intervals."""
    def common(f, g):
        lo = max(f.domain.lo, g.domain.lo)
        hi = min(f.domain.hi, g.domain.hi)
        if hi <= lo:
            raise DomainError("pairs have disjoint domains")
        x = np.linspace(lo, hi, n)
        return float(np.max(np.abs(fc.evaluate(f, x) - fc.evaluate(g, x))))
    return max(common(z1.eta, z2.eta), common(z1.xi, z2.xi))


# ---------------------------------------------------------------------------
# commutator jets


def _map_derivs(f: AnalyticMap1D, x: float, order: int = 3) -> list[float]:
    out = [float(fc.evaluate(f, x))]
    g = f
    for _ in range(order):
        g = fc.derivative(g, 1)
        out.append(float(fc.evaluate(g, x)))
    return out


def jet_compose(outer: Sequence[float], inner: Sequence[float]) -> np.ndarray:
    """Derivatives 0..3 of F∘G at a point from those of F at G(pt) and of G at pt."""
    f0, f1, f2, f3 = outer
    g0, g1, g2, g3 = inner
    return np.array([f0,
                     f1 * g1,
                     f2 * g1 ** 2 + f1 * g2,
                     f3 * g1 ** 3 + 3.0 * f2 * g1 * g2 + f1 * g3])


def cauchy_jet(fn: Callable[[np.ndarray], np.ndarray], radius: float, n: int = 64) -> np.ndarray:
    """Derivatives 0..3 at 0 of an analytic function from its values on a complex circle."""
    theta = 2.0 * np.pi * np.arange(n) / n
    vals = fn(radius * np.exp(1j * theta))
    return np.array([(np.mean(vals * np.exp(-1j * k * theta)) * math.factorial(k) / radius ** k).real
                     for k in range(4)])


def jet_radius(zeta: Pair1D) -> float:
    """Circle radius for jets at 0, well inside both domains."""
    room = min(-zeta.eta.domain.lo, zeta.xi.domain.hi)
    if room <= 0:
        raise DomainError("0 is not interior to both domains")
    return 0.75 * room


def commutator_jet(zeta: Pair1D) -> np.ndarray:
    """Derivatives 0..3 at 0 of the commutator η∘ξ − ξ∘η.

    A Cauchy integral on a small circle avoids differentiating series near
    the domain edges, where derivative noise is largest.
    """
    ev = fc.evaluate_complex
    return cauchy_jet(lambda z: ev(zeta.eta, ev(zeta.xi, z)) - ev(zeta.xi, ev(zeta.eta, z)),
                      jet_radius(zeta))


def commutator_jet_chain_rule(zeta: Pair1D) -> np.ndarray:
    """Same jets by the chain rule from differentiated series; an independent route."""
    xi_at0 = _map_derivs(zeta.xi, 0.0)
    eta_at0 = _map_derivs(zeta.eta, 0.0)
    eta_at_xi = _map_derivs(zeta.eta, xi_at0[0])
    xi_at_eta = _map_derivs(zeta.xi, eta_at0[0])
    return jet_compose(eta_at_xi, xi_at0) - jet_compose(xi_at_eta, eta_at0)


# ---------------------------------------------------------------------------
# circle maps and pairs


class ArnoldLift:
    """Lift x ↦ x + ω − k·sin(2πx)/(2π) + β·sin(4πx)/(4π) of the Arnold circle map.

    The slope at 0 is 1 − k + β, so k = 1 + β is critical; β = 0 is the classical family.
    """

    def __init__(self, omega: float, k: float = 1.0, beta: float = 0.0):
        self.omega = float(omega)
        self.k = float(k)
        self.beta = float(beta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = x + self.omega - self.k * np.sin(2.0 * np.pi * x) / (2.0 * np.pi)
        if self.beta:
            out = out + self.beta * np.sin(4.0 * np.pi * x) / (4.0 * np.pi)
        return float(out) if out.ndim == 0 else out

    def scalar(self, x: float) -> float:
        out = x + self.omega - self.k * math.sin(2.0 * math.pi * x) / (2.0 * math.pi)
        if self.beta:
            out += self.beta * math.sin(4.0 * math.pi * x) / (4.0 * math.pi)
        return out

    def series(self, u: np.ndarray) -> np.ndarray:
        """The lift applied to a truncated y-series u of shape (K+1, n)."""
        sin_u, _ = sin_cos_series(2.0 * np.pi * u)
        out = u - self.k * sin_u / (2.0 * np.pi)
        if self.beta:
            sin_2u, _ = sin_cos_series(4.0 * np.pi * u)
            out = out + self.beta * sin_2u / (4.0 * np.pi)
        out[0] += self.omega
        return out


class RigidLift:
    def __init__(self, omega: float):
        self.omega = float(omega)

    def __call__(self, x):
        return np.asarray(x, dtype=float) + self.omega if np.ndim(x) else float(x) + self.omega

    def scalar(self, x: float) -> float:
        return x + self.omega

    def series(self, u: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float)
        out[0] += self.omega
        return out


def sin_cos_series(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """sin and cos of a truncated y-series, by the addition formula about the constant term."""
    k = u.shape[0] - 1
    w = np.array(u, dtype=float)
    w[0] = 0.0
    sw = np.zeros_like(w)
    cw = fc.ys_const(np.ones_like(w[0]), k)
    power = fc.ys_const(np.ones_like(w[0]), k)
    for m in range(1, k + 1):
        power = fc.ys_mul(power, w) / m
        if m % 2:
            sw += (-1) ** (m // 2) * power
        else:
            cw += (-1) ** (m // 2) * power
    s0, c0 = np.sin(u[0]), np.cos(u[0])
    return s0 * cw + c0 * sw, c0 * cw - s0 * sw


def _scalar(fbar):
    return getattr(fbar, "scalar", lambda x: float(fbar(x)))


def lift_orbit(fbar, n: int, x0: float = 0.0) -> np.ndarray:
    step = _scalar(fbar)
    out = np.empty(n + 1)
    x = float(x0)
    out[0] = x
    for i in range(1, n + 1):
        x = step(x)
        out[i] = x
    return out


def digits_from_orbit(extend: Callable[[np.ndarray], np.ndarray], depth: int,
                      max_iter: int = 2_000_000) -> RotationPrefix:
    """CF digits from heights of the return pairs (x_q − p) along one lifted orbit.

    extend(orbit) returns a longer orbit array of x-coordinates starting with
    the same points.
    """
    q_e, p_e, q_x, p_x = 1, 0, 0, 1
    orbit = extend(np.zeros(0))

    def point(q, p):
        nonlocal orbit
        while q >= orbit.size:
            orbit = extend(orbit)
            if orbit.size > max_iter:
                raise PrecisionError("orbit length limit exceeded while computing digits")
        return orbit[q] - p

    digits = []
    for _ in range(depth):
        x0 = point(q_x, p_x)
        side = math.copysign(1.0, x0)
        r = 0
        x = x0
        while True:
            nxt = point(q_x + (r + 1) * q_e, p_x + (r + 1) * p_e)
            if abs(nxt) < TIE_TOL:
                raise CombinatoricsError("height tie while computing digits")
            if math.copysign(1.0, nxt) != side:
                break
            if (nxt - x) * side >= 0 or r > MAX_HEIGHT:
                return RotationPrefix(tuple(digits), True)
            x = nxt
            r += 1
        if r == 0:
            raise CombinatoricsError("height 0 encountered")
        digits.append(r)
        q_e, p_e, q_x, p_x = q_x + r * q_e, p_x + r * p_e, q_e, p_e
    return RotationPrefix(tuple(digits), False)


def circle_map_digits(fbar, depth: int, max_iter: int = 2_000_000) -> RotationPrefix:
    """CF digits of ρ(f̄) from heights of the pairs (f̄^q − p), using one orbit of 0."""
    def extend(orbit):
        if orbit.size == 0:
            return lift_orbit(fbar, 1024)
        return np.concatenate([orbit, lift_orbit(fbar, orbit.size, orbit[-1])[1:]])
    return digits_from_orbit(extend, depth, max_iter)


def iterate_minus(fbar, q: int, p: int):
    """x ↦ f̄^q(x) − p, vectorized."""
    def fn(x):
        y = np.asarray(x, dtype=float)
        for _ in range(q):
            y = fbar(y)
        return y - p
    return fn


def pair_from_circle_map(fbar, m: int, digits: Sequence[int] | None = None) -> Pair1D:
    """Normalized pair (f̄^{q_{m+1}} − p_{m+1}, f̄^{q_m} − p_m), m ≥ −1."""
    if m < -1:
        raise ArgumentError("m must be >= -1")
    if digits is None:
        pref = circle_map_digits(fbar, m + 2)
        if pref.rational or len(pref.digits) < m + 2:
            raise CombinatoricsError("rotation number is rational at the requested depth")
        digits = pref.digits
    rho = RotationNumber(tuple(digits[:max(m + 2, 1)]), (1,))
    seq = convergents(rho, m + 2)
    p1, q1 = seq[m + 2]
    p0, q0 = seq[m + 1]
    eta_fn = iterate_minus(fbar, q1, p1)
    xi_fn = iterate_minus(fbar, q0, p0)
    xi0 = float(xi_fn(np.array([0.0]))[0])
    eta0 = float(eta_fn(np.array([0.0]))[0])
    eta = fc.fit(eta_fn, nbhd(xi0))
    xi = fc.fit(xi_fn, nbhd(eta0))
    if max(eta.trunc_err, xi.trunc_err) > 1e-6 * max(1.0, abs(xi0)):
        raise PrecisionError("iterates are not resolved by the Chebyshev fit")
    out = Pair1D(fc.rescale(eta, xi0), fc.rescale(xi, xi0),
                 {"m": m, "q": (q0, q1), "p": (p0, p1), "scale": xi0})
    return out


@dataclass(frozen=True)
class CircleMapFromPair:
    zeta: Pair1D

    @property
    def interval(self) -> Interval:
        return Interval(self.zeta.eta0, float(fc.evaluate(self.zeta.xi, self.zeta.eta0)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        left = x < 0
        out = np.empty_like(x)
        if np.any(left):
            out[left] = fc.evaluate(self.zeta.eta, fc.evaluate(self.zeta.xi, x[left]))
        if np.any(~left):
            out[~left] = fc.evaluate(self.zeta.eta, x[~left])
        return out

    def reduce(self, x):
        """Identify the endpoints η(0) ~ ξ∘η(0)."""
        iv = self.interval
        return np.where(x >= iv.hi, x - iv.width, np.where(x < iv.lo, x + iv.width, x))

    def glue_residual(self) -> float:
        z = self.zeta
        return abs(float(fc.evaluate(z.eta, z.xi0)) - float(fc.evaluate(z.xi, z.eta0)))

    def branch_frequency(self, n: int, x0: float = 0.0) -> float:
        """Fraction of steps spent on the η∘ξ branch; equals the rotation value of the pair."""
        x = np.array([x0])
        hits = 0
        for _ in range(n):
            if x[0] < 0:
                hits += 1
            x = self.reduce(self(x))
        return hits / n


def circle_map_from_pair(zeta: Pair1D, tol: float = TOL_GEOM) -> CircleMapFromPair:
    out = CircleMapFromPair(zeta)
    if out.glue_residual() > tol:
        raise ConsistencyError(f"glue mismatch {out.glue_residual():.3e}")
    return out


# ---------------------------------------------------------------------------
# dynamical partitions


@dataclass(frozen=True)
class PartitionElement:
    multi_index: tuple[int, ...]
    interval: Interval
    kind: str


@dataclass(frozen=True)
class PartitionLevel:
    level: int
    elements: tuple[PartitionElement, ...]
    max_gap: float
    max_overlap: float

    def lengths(self) -> np.ndarray:
        return np.array([e.interval.width for e in self.elements])


def level_words(heights: Sequence[int]) -> tuple[str, str]:
    """Words (s̄_k, t̄_k) in application order after len(heights) pre-renormalizations."""
    s, t = "E", "X"
    for r in heights:
        s, t = t + s * r, s
    return s, t


def multi_index(prefix: str) -> tuple[int, ...]:
    """Run-length (a1, b1, a2, b2, ...) of a word in application order."""
    out = []
    cur, count = "E", 0
    for ch in prefix:
        if ch == cur:
            count += 1
        else:
            out.append(count)
            cur = ch
            count = 1
    out.append(count)
    if len(out) % 2:
        out.append(0)
    return tuple(out)


def dynamical_partition(zeta: Pair1D, k: int, tol: float = 1e-8) -> PartitionLevel:
    heights = []
    z = zeta
    for _ in range(k):
        r = height(z)
        if not math.isfinite(r):
            raise CombinatoricsError("pair is not k-times renormalizable")
        heights.append(int(r))
        z = renormalize(z)
    s_word, t_word = level_words(heights)
    i_end = zeta.apply(t_word, 0.0)
    j_end = zeta.apply(s_word, 0.0)
    elems = []
    for word, end, kind in ((s_word, i_end, "I"), (t_word, j_end, "J")):
        for j in range(len(word)):
            prefix = word[:j]
            a = zeta.apply(prefix, 0.0)
            b = zeta.apply(prefix, end)
            elems.append(PartitionElement(multi_index(prefix), Interval(min(a, b), max(a, b)), kind))
    elems.sort(key=lambda e: e.interval.lo)
    gaps = [elems[i + 1].interval.lo - elems[i].interval.hi for i in range(len(elems) - 1)]
    lo_total, hi_total = zeta.eta0, zeta.xi0
    max_gap = max([0.0] + [g for g in gaps if g > 0]
                  + [elems[0].interval.lo - lo_total, hi_total - elems[-1].interval.hi])
    max_overlap = max([0.0] + [-g for g in gaps if g < 0])
    if max_overlap > tol or max_gap > tol:
        raise ConsistencyError(f"partition defect: gap {max_gap:.3e}, overlap {max_overlap:.3e}")
    return PartitionLevel(k, tuple(elems), max_gap, max_overlap)


def adjacent_ratios(part: PartitionLevel) -> np.ndarray:
    w = part.lengths()
    return w[1:] / w[:-1]


# ---------------------------------------------------------------------------
# parameter tuning for circle-map families


def tune_by_convergent(return_point: Callable[[float, int], float], target: RotationNumber,
                       depth: int, bracket: tuple[float, float] = (0.0, 1.0),
                       max_iter: int = 200, max_return: int = 50_000) -> tuple[float, int]:
    """Bisection on ω for x_q(ω) = p with p/q a convergent of target.

    The convergent is the deepest one with q ≤ max_return, but never shallower
    than depth.  Returns (ω, index of the convergent used).
    """
    n = depth + 2
    seq = convergents(target, n)
    while seq[-1][1] <= max_return:
        n += 1
        seq = convergents(target, n)
    d = depth + 1
    while d + 1 < len(seq) and seq[d + 1][1] <= max_return:
        d += 1
    p, q = seq[d]

    def g(omega):
        return return_point(omega, q) - p

    lo, hi = bracket
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        raise ConvergenceError("tuning bracket does not straddle the target")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        gm = g(mid)
        if gm == 0.0:
            return mid, d
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi), d


def tune_omega(family: Callable[[float], object], target: RotationNumber, depth: int,
               bracket: tuple[float, float] = (0.0, 1.0), max_iter: int = 200,
               max_return: int = 50_000) -> float:
    """Parameter of a family of circle lifts whose rotation number matches target to depth.

    Uses the deepest convergent with return time at most max_return (and at
    least the depth-th one).
    """
    def return_point(omega, q):
        step = _scalar(family(omega))
        x = 0.0
        for _ in range(q):
            x = step(x)
        return x

    omega, _ = tune_by_convergent(return_point, target, depth, bracket, max_iter, max_return)
    return omega


# ---------------------------------------------------------------------------
# Newton fixed point in the class η(x) = P(x³), ξ(x) = Q(x³)


class PointPair:
    """A pair given by vectorized callables; used for pointwise renormalization."""

    def __init__(self, eta: Callable, xi: Callable):
        self.eta = eta
        self.xi = xi

    def renormalized(self, expected_height: int | None = None) -> tuple["PointPair", float, int]:
        eta, xi = self.eta, self.xi
        x0 = float(xi(np.array([0.0]))[0])
        r = height_from_orbit(lambda x: float(eta(np.array([x]))[0]), x0)
        if not math.isfinite(r):
            raise CombinatoricsError("infinite height during Newton iteration")
        r = int(r)
        if expected_height is not None and r != expected_height:
            raise CombinatoricsError(f"height changed to {r} (expected {expected_height})")
        s = float(eta(np.array([0.0]))[0])

        def new_eta(x, s=s, r=r):
            y = xi(s * np.asarray(x, dtype=float))
            for _ in range(r):
                y = eta(y)
            return y / s

        def new_xi(x, s=s):
            return eta(s * np.asarray(x, dtype=float)) / s

        return PointPair(new_eta, new_xi), s, r


@dataclass(frozen=True)
class CubicClass:
    """Chebyshev parametrization in t = x³ on fixed t-intervals."""
    t_eta: Interval
    t_xi: Interval
    deg: int

    @property
    def size(self) -> int:
        return 2 * (self.deg + 1)

    def split(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return c[:self.deg + 1], c[self.deg + 1:]

    def point_pair(self, c: np.ndarray) -> PointPair:
        ce, cx = self.split(np.asarray(c, dtype=float))
        te, tx = self.t_eta, self.t_xi

        def eta(x):
            x = np.asarray(x, dtype=float)
            return C.chebval(te.to_unit(x ** 3), ce)

        def xi(x):
            x = np.asarray(x, dtype=float)
            return C.chebval(tx.to_unit(x ** 3), cx)

        return PointPair(eta, xi)

    def nodes_x(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.deg + 1
        return np.cbrt(self.t_eta.nodes(n)), np.cbrt(self.t_xi.nodes(n))

    def project(self, eta: Callable, xi: Callable) -> np.ndarray:
        """Interpolate the functions t ↦ η(∛t), t ↦ ξ(∛t)."""
        xe, xx = self.nodes_x()
        return np.concatenate([fc._values_to_coeffs(np.asarray(eta(xe), dtype=float)),
                               fc._values_to_coeffs(np.asarray(xi(xx), dtype=float))])

    def x_domains(self) -> tuple[Interval, Interval]:
        return (Interval(np.cbrt(self.t_eta.lo), np.cbrt(self.t_eta.hi)),
                Interval(np.cbrt(self.t_xi.lo), np.cbrt(self.t_xi.hi)))

    def to_pair(self, c: np.ndarray) -> Pair1D:
        pp = self.point_pair(c)
        de, dx = self.x_domains()
        n_fit = max(fc.N_MAX, 3 * self.deg + 1)
        return Pair1D(fc.fit(pp.eta, de, n_fit), fc.fit(pp.xi, dx, n_fit), {"cubic_class_deg": self.deg})

    @staticmethod
    def for_scale(s: float, deg: int) -> "CubicClass":
        de = nbhd(1.0)
        dx = nbhd(s)
        return CubicClass(Interval(de.lo ** 3, de.hi ** 3), Interval(dx.lo ** 3, dx.hi ** 3), deg)


def _pp_derivs(f: Callable, x: float, h: float = 1e-3) -> list[float]:
    """Value and derivatives 1..3 by a polynomial fit on Chebyshev points around x."""
    t = x + h * C.chebpts1(12)
    vals = f(t)
    c = C.chebfit((t - x) / h, vals, 11)
    out = [float(C.chebval(0.0, c))]
    for k in range(1, 4):
        c = C.chebder(c)
        out.append(float(C.chebval(0.0, c)) / h ** k)
    return out


def _cubic_constraints(cls: CubicClass, c: np.ndarray) -> np.ndarray:
    """(ξ(0) − 1, [η,ξ](0), [η,ξ]'''(0)) evaluated exactly in the cubic class."""
    ce, cx = cls.split(c)
    pp = cls.point_pair(c)
    xi0 = float(pp.xi(np.array([0.0]))[0])
    eta0 = float(pp.eta(np.array([0.0]))[0])
    # η(x) = P(x³): P'(t) gives η'''(0) = 6 P'(0) and η'(x) = 3x² P'(x³)
    dte = C.chebder(ce) * 2.0 / cls.t_eta.width
    dtx = C.chebder(cx) * 2.0 / cls.t_xi.width
    p1_eta0 = float(C.chebval(cls.t_eta.to_unit(0.0), dte))
    p1_xi0 = float(C.chebval(cls.t_xi.to_unit(0.0), dtx))

    def d1(dt, dom, x):
        return 3.0 * x * x * float(C.chebval(dom.to_unit(x ** 3), dt))

    eta_at_xi0 = float(pp.eta(np.array([xi0]))[0])
    xi_at_eta0 = float(pp.xi(np.array([eta0]))[0])
    jet0 = eta_at_xi0 - xi_at_eta0
    jet3 = d1(dte, cls.t_eta, xi0) * 6.0 * p1_xi0 - d1(dtx, cls.t_xi, eta0) * 6.0 * p1_eta0
    return np.array([xi0 - 1.0, jet0, jet3])


def renorm_map(cls: CubicClass, c: np.ndarray, p_cf: int = 1,
               heights: Sequence[int] | None = None) -> tuple[np.ndarray, list[float], list[int]]:
    """Coefficients of R^{p_cf} of the pair with coefficients c, with the scalings and heights."""
    pp = cls.point_pair(c)
    scales, hs = [], []
    for i in range(p_cf):
        pp, s, r = pp.renormalized(None if heights is None else heights[i])
        scales.append(s)
        hs.append(r)
    return cls.project(pp.eta, pp.xi), scales, hs


def _newton_residual(cls, c, p_cf, heights, weight):
    phi, _, _ = renorm_map(cls, c, p_cf, heights)
    return np.concatenate([phi - c, weight * _cubic_constraints(cls, c)])


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], c: np.ndarray, step: float = 1e-6) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    scale = max(1.0, float(np.max(np.abs(c))))
    h = step * scale
    cols = []
    for j in range(c.size):
        e = np.zeros_like(c)
        e[j] = h
        cols.append((fun(c + e) - fun(c - e)) / (2.0 * h))
    return np.array(cols).T


def pointwise_residual(cls: CubicClass, c: np.ndarray, p_cf: int = 1, n: int = 400) -> float:
    """sup |R^{p_cf}ζ − ζ| on dense grids of both domains."""
    pp = cls.point_pair(c)
    rp = pp
    for _ in range(p_cf):
        rp, _, _ = rp.renormalized()
    de, dx = cls.x_domains()
    xe, xx = de.grid(n), dx.grid(n)
    return float(max(np.max(np.abs(rp.eta(xe) - pp.eta(xe))), np.max(np.abs(rp.xi(xx) - pp.xi(xx)))))


@dataclass
class FixedPointResult:
    pair: Pair1D
    coeffs: np.ndarray
    cls: CubicClass
    residual: float
    history: list
    scales: list
    heights: list


def seed_coefficients(seed: Pair1D, deg: int) -> tuple[CubicClass, np.ndarray]:
    cls = CubicClass.for_scale(seed.eta0, deg)
    eta = lambda x: fc.evaluate(seed.eta, x)
    xi = lambda x: fc.evaluate(seed.xi, x)
    return cls, cls.project(eta, xi)


def newton_fixed_point(seed: Pair1D, rho: RotationNumber, deg: int = 20, tol_fix: float = 1e-9,
                       max_steps: int = 30, fd_step: float = 1e-6, max_halvings: int = 20,
                       weight: float = 1.0) -> FixedPointResult:
    """Damped Gauss–Newton for R^{p}ζ = ζ in the cubic class, p the period of rho."""
    p_cf = rho.period_length
    heights = [rho.digit(i) for i in range(p_cf)]
    pref = rotation_number(seed, p_cf)
    if list(pref.digits) != heights:
        raise CombinatoricsError(f"seed heights {pref.digits} do not match {heights}")
    cls, c = seed_coefficients(seed, deg)
    fun = lambda v: _newton_residual(cls, v, p_cf, heights, weight)
    res = fun(c)
    norm = float(np.max(np.abs(res)))
    history = [norm]
    for _ in range(max_steps):
        if norm < 0.1 * tol_fix:
            break
        jac = fd_jacobian(fun, c, fd_step)
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = c + t * step
            try:
                tres = fun(trial)
                tnorm = float(np.max(np.abs(tres)))
            except (CombinatoricsError, DomainError):
                tnorm = math.inf
            if tnorm < norm:
                break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed", history)
        c, res, norm = trial, tres, tnorm
        history.append(norm)
        if len(history) > 3 and history[-1] > 0.9 * history[-2] and norm < 10 * tol_fix:
            break
    resid = pointwise_residual(cls, c, p_cf)
    if resid >= tol_fix:
        raise ConvergenceError(f"fixed point residual {resid:.3e} above {tol_fix}", history)
    _, scales, hs = renorm_map(cls, c, p_cf, heights)
    pair = cls.to_pair(c)
    pair.meta.update({"lambda": scales, "residual": resid})
    return FixedPointResult(pair, c, cls, resid, history, scales, hs)


def spectrum(fp: FixedPointResult, p_cf: int = 1, n_modes: int = 10,
             fd_step: float = 1e-6) -> dict:
    """Leading eigenvalues of D R^{p} restricted to the normalized almost-commuting tangent space."""
    cls, c = fp.cls, fp.coeffs
    phi = lambda v: renorm_map(cls, v, p_cf)[0]
    jac = fd_jacobian(phi, c, fd_step)
    g = fd_jacobian(lambda v: _cubic_constraints(cls, v), c, fd_step)
    # orthonormal basis of the null space of the constraint Jacobian
    _, sv, vt = np.linalg.svd(g)
    q = vt[g.shape[0]:].T
    m = q.T @ jac @ q
    cond = float(np.linalg.cond(jac))
    ev = np.linalg.eigvals(m)
    ev = ev[np.argsort(-np.abs(ev))]
    return {"eigenvalues": ev[:n_modes], "all": ev, "condition": cond,
            "ill_conditioned": cond > 1e12,
            "invariance_defect": float(np.max(np.abs(g @ jac @ q)) /
                                       (np.linalg.norm(g, 2) * np.linalg.norm(jac, 2)))}


def arnold_seed(rho: RotationNumber, depth: int = 22, renorms: int = 6, m: int = -1) -> Pair1D:
    """Tuned Arnold-family pair renormalized a few times."""
    omega = tune_omega(ArnoldLift, rho, depth)
    z = pair_from_circle_map(ArnoldLift(omega), m, rho.digits(m + 2 + renorms + 2))
    for _ in range(renorms):
        z = renormalize(z)
    z.meta["omega"] = omega
    return z
