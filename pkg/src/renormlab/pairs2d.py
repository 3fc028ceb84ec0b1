"""Two-dimensional dissipative pairs Z = (A, B) with B(x, y) = (b(x, y), x).

A(x, y) = (a(x, y), h(x, y)).  Maps are Chebyshev in x times a truncated
power series in y.  The 1D projection L Z = (a(·, 0), b(·, 0)) follows the
1D orientation: A plays η (domain around [0, 1]) and B plays ξ with
b(0, 0) = 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import funcalc as fc
from . import pairs1d as p1
from .errors import (ArgumentError, CombinatoricsError, ConvergenceError, DomainError, InversionError,
                     ProjectionError)
from .funcalc import AnalyticMap1D, AnalyticMap2D, Interval
from .rotation import RotationNumber, convergents

DELTA = p1.DELTA
TOL_COMM = p1.TOL_COMM
TOL_NORMALIZATION = 1e-12
PI_MAX_STEPS = 30
PI_TOL = 1e-12
Y_MARGIN = 0.1
GRID_X = 41
GRID_Y = 9
BURN_IN = 2000


def y_domain(*ranges: Interval, margin: float = Y_MARGIN) -> Interval:
    """Hull of the given ranges enlarged by margin times its width."""
    lo = min(r.lo for r in ranges)
    hi = max(r.hi for r in ranges)
    pad = margin * (hi - lo)
    return Interval(lo - pad, hi + pad)


def _range_on(f: AnalyticMap1D, n: int = 101) -> Interval:
    v = fc.evaluate(f, f.domain.grid(n))
    return Interval(float(v.min()), float(v.max()))


# ---------------------------------------------------------------------------
# pairs


@dataclass(frozen=True, eq=False)
class Pair2D:
    a: AnalyticMap2D
    h: AnalyticMap2D
    b: AnalyticMap2D
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.a.domain_x != self.h.domain_x:
            raise ArgumentError("a and h must share their x-domain")

    @property
    def ky(self) -> int:
        return max(self.a.ky, self.h.ky, self.b.ky)

    @property
    def a0(self) -> AnalyticMap1D:
        return fc.slice_y(self.a, 0.0)

    @property
    def h0(self) -> AnalyticMap1D:
        return fc.slice_y(self.h, 0.0)

    @property
    def b0(self) -> AnalyticMap1D:
        return fc.slice_y(self.b, 0.0)

    def project(self) -> p1.Pair1D:
        """The 1D pair L Z = (a(·, 0), b(·, 0))."""
        return p1.Pair1D(self.a0, self.b0)

    def apply_a(self, x, y):
        return fc.evaluate2d(self.a, x, y), fc.evaluate2d(self.h, x, y)

    def apply_b(self, x, y):
        return fc.evaluate2d(self.b, x, y), np.asarray(x, dtype=float) + 0.0

    def apply(self, word: Sequence[str], x, y):
        """Apply letters in order: 'A' or 'B'."""
        for letter in word:
            x, y = self.apply_a(x, y) if letter == "A" else self.apply_b(x, y)
        return x, y


def pair2d_to_record(z: Pair2D) -> dict:
    return {"kind": "pair2d", "a": fc.to_record2d(z.a), "h": fc.to_record2d(z.h),
            "b": fc.to_record2d(z.b), "meta": p1.scalar_meta(z.meta)}


def pair2d_from_record(rec: dict) -> Pair2D:
    if rec.get("kind") != "pair2d":
        raise ArgumentError("record is not a 2D pair")
    return Pair2D(fc.from_record2d(rec["a"]), fc.from_record2d(rec["h"]), fc.from_record2d(rec["b"]),
                  dict(rec.get("meta", {})))


def pair_from_maps(a: AnalyticMap2D, h: AnalyticMap2D, b: AnalyticMap2D, meta=None) -> Pair2D:
    """Pair with a common y-domain covering both x-domains and the range of h."""
    dy = y_domain(a.domain_x, b.domain_x, _range_on(fc.slice_y(h, 0.0)))
    a = AnalyticMap2D(a.domain_x, dy, a.coeffs, a.trunc_err)
    h = AnalyticMap2D(h.domain_x, dy, h.coeffs, h.trunc_err)
    b = AnalyticMap2D(b.domain_x, dy, b.coeffs, b.trunc_err)
    return Pair2D(a, h, b, dict(meta or {}))


def _lift1d(f: AnalyticMap1D, dy: Interval) -> AnalyticMap2D:
    return AnalyticMap2D(f.domain, dy, f.coeffs[:, None], f.trunc_err)


def lambda_rescale(z: Pair2D, lam: float) -> Pair2D:
    """Λ-conjugation (x, y) ↦ Λ⁻¹∘F∘Λ with Λ(x, y) = (λx, λy)."""
    a = fc.rescale2d(z.a, lam)
    h = fc.rescale2d(z.h, lam)
    b = fc.rescale2d(z.b, lam)
    return pair_from_maps(a, h, b, z.meta)


def y_norm(z: Pair2D) -> float:
    """sup of |∂_y| over both maps and their domains."""
    out = 0.0
    for f in (z.a, z.h, z.b):
        g = fc.partial_y(f)
        x = f.domain_x.grid(GRID_X)
        y = f.domain_y.grid(GRID_Y)
        X, Y = np.meshgrid(x, y)
        out = max(out, float(np.max(np.abs(fc.evaluate2d(g, X, Y)))))
    return out


def pair_distance(z: Pair2D, w: Pair2D) -> float:
    """½(‖A − A'‖ + ‖B − B'‖) in sup norm over common domains."""
    def sup(fs, gs):
        dx = Interval(max(fs[0].domain_x.lo, gs[0].domain_x.lo), min(fs[0].domain_x.hi, gs[0].domain_x.hi))
        dy = Interval(max(fs[0].domain_y.lo, gs[0].domain_y.lo), min(fs[0].domain_y.hi, gs[0].domain_y.hi))
        X, Y = np.meshgrid(dx.grid(GRID_X), dy.grid(GRID_Y))
        return max(float(np.max(np.abs(fc.evaluate2d(f, X, Y) - fc.evaluate2d(g, X, Y))))
                   for f, g in zip(fs, gs))
    return 0.5 * (sup((z.a, z.h), (w.a, w.h)) + sup((z.b,), (w.b,)))


# ---------------------------------------------------------------------------
# embedding of 1D pairs


def embed_iota(zeta: p1.Pair1D) -> Pair2D:
    """ι(ζ): A = ((η^{r0}ξ)^{r1}η, (η^{r0}ξ)^{r1−1}η), B = (η^{r0}ξ, x), Λ-normalized."""
    z1 = p1.renormalize(zeta)
    r0 = z1.meta["height"]
    r1 = p1.height(z1)
    if not math.isfinite(r1):
        raise CombinatoricsError("pair is not twice renormalizable")
    z2 = p1.renormalize(z1)
    s2 = z2.meta["lambda"]
    h_pre = fc.compose_chain([z1.xi] + [z1.eta] * (int(r1) - 1), p1.nbhd(z1.eta0))
    h = fc.rescale(h_pre, s2)
    dy = y_domain(z2.eta.domain, z2.xi.domain, _range_on(h))
    meta = {"r0": int(r0), "r1": int(r1), "lambda": z1.meta["lambda"] * s2}
    return Pair2D(_lift1d(z2.eta, dy), _lift1d(h, dy), _lift1d(z2.xi, dy), meta)


# ---------------------------------------------------------------------------
# series evaluation of the pair on x-nodes


def _ser_a(z: Pair2D, u, v):
    return fc.ys_eval2d(z.a, u, v), fc.ys_eval2d(z.h, u, v)


def _ser_b(z: Pair2D, u, v):
    return fc.ys_eval2d(z.b, u, v), u.copy()


def _ser_a_pow(z: Pair2D, u, v, r: int):
    for _ in range(r):
        u, v = _ser_a(z, u, v)
    return u, v


def _ser_m(z: Pair2D, u, v, r0: int):
    """M = B∘A^{r0} on series."""
    u, v = _ser_a_pow(z, u, v, r0)
    return _ser_b(z, u, v)


def _first_coord_pow(z: Pair2D, r0: int):
    """Pointwise x ↦ π1 A^{r0}(x, 0) and its x-derivative, vectorized."""
    def f(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return _ser_a_pow(z, fc.ys_const(u, 0), fc.ys_const(np.zeros_like(u), 0), r0)[0][0]

    def df(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        uu = fc.ys_const(u, 1)
        uu[1] = 1.0
        return _ser_a_pow(z, uu, fc.ys_const(np.zeros_like(u), 1), r0)[0][1]
    return f, df


def h1_series(z: Pair2D, x: np.ndarray, r0: int, k: int) -> np.ndarray:
    """y-series of the first coordinate of H(x, y) = ((π1 A^{r0}(·, y))⁻¹(x), y)."""
    f, df = _first_coord_pow(z, r0)
    u0 = fc.invert_values(f, df, x, z.a.domain_x)
    d0 = df(u0)
    u = fc.ys_const(u0, k)
    v = fc.ys_variable(x.size, k)
    # each sweep fixes one more order of the series
    for _ in range(k):
        res = _ser_a_pow(z, u, v, r0)[0]
        res[0] -= x
        u = u - res / d0
    res = _ser_a_pow(z, u, v, r0)[0]
    res[0] -= x
    if np.max(np.abs(res)) > 1e-10 * max(1.0, float(np.max(np.abs(x)))):
        raise InversionError(f"coordinate change series did not converge ({np.max(np.abs(res)):.2e})")
    return u


def _b_tilde_series(z: Pair2D, x: np.ndarray, r0: int, k: int) -> np.ndarray:
    u = h1_series(z, x, r0, k)
    v = fc.ys_variable(x.size, k)
    _, ytil = _ser_a_pow(z, u, v, r0)
    xc = fc.ys_const(x, k)
    bb = fc.ys_eval2d(z.b, xc, ytil)
    return _ser_a_pow(z, bb, xc, r0)[0]


def _a_tilde_series(z: Pair2D, x: np.ndarray, r0: int, r1: int, k: int):
    u = h1_series(z, x, r0, k)
    v = fc.ys_variable(x.size, k)
    w1, w2 = _ser_a(z, u, v)
    for _ in range(r1):
        w1, w2 = _ser_m(z, w1, w2, r0)
    return _ser_a_pow(z, w1, w2, r0)[0], w2


def _g_series(z: Pair2D, x: np.ndarray, r0: int, r1: int, k: int):
    """G = H⁻¹∘M^{r1−1}∘A∘H, so that Ã = B̃∘G."""
    u = h1_series(z, x, r0, k)
    v = fc.ys_variable(x.size, k)
    w1, w2 = _ser_a(z, u, v)
    for _ in range(r1 - 1):
        w1, w2 = _ser_m(z, w1, w2, r0)
    return _ser_a_pow(z, w1, w2, r0)[0], w2


def heights_2d(z: Pair2D) -> tuple[int, int]:
    """(r0, r1) of the projected 1D pair, recomputed every time."""
    zeta = z.project()
    r0 = p1.height(zeta)
    if not math.isfinite(r0):
        raise CombinatoricsError("projected pair has infinite height")
    r1 = p1.height(p1.prerenormalize(zeta, int(r0)))
    if not math.isfinite(r1):
        raise CombinatoricsError("projected pair is not twice renormalizable")
    return int(r0), int(r1)


@dataclass(frozen=True)
class CoordinateChange:
    """H(x, y) = (forward(x, y), y) and H⁻¹(u, v) = (inverse(u, v), v)."""
    forward: AnalyticMap2D
    inverse: AnalyticMap2D
    r0: int

    def apply(self, x, y):
        return fc.evaluate2d(self.forward, x, y), np.asarray(y, dtype=float) + 0.0

    def apply_inverse(self, u, v):
        return fc.evaluate2d(self.inverse, u, v), np.asarray(v, dtype=float) + 0.0

    def round_trip(self, nx: int = 20, ny: int = 5) -> float:
        x = self.forward.domain_x.grid(nx)
        y = self.forward.domain_y.grid(ny)
        X, Y = np.meshgrid(x, y)
        U, V = self.apply(X, Y)
        X2, _ = self.apply_inverse(U, V)
        return float(np.max(np.abs(X2 - X)))


def _output_domains(z: Pair2D, r0: int, r1: int) -> tuple[float, float, Interval, Interval]:
    """λ, ã(0,0) and the unscaled x-domains of the new A and B."""
    zero = np.array([0.0])
    lam = float(_b_tilde_series(z, zero, r0, 0)[0, 0])
    a00 = float(_a_tilde_series(z, zero, r0, r1, 0)[0][0, 0])
    dom_a = p1.nbhd(lam)
    dom_b = p1.nbhd(a00)
    return lam, a00, dom_a, dom_b


def coordinate_change_H(z: Pair2D, r0: int | None = None, domain: Interval | None = None,
                        ky: int | None = None) -> CoordinateChange:
    h0, r1 = heights_2d(z)
    r0 = h0 if r0 is None else r0
    k = ky if ky is not None else max(z.ky, fc.KY_DEFAULT)
    if domain is None:
        _, _, dom_a, dom_b = _output_domains(z, r0, r1)
        domain = fc.hull(dom_a.lo, dom_a.hi, dom_b.lo, dom_b.hi)
    fwd = fc.fit_series(lambda x: h1_series(z, x, r0, k), domain, z.a.domain_y, k)
    u0 = fc.evaluate(fc.slice_y(fwd, 0.0), domain.grid(101))
    udom = p1.nbhd(float(u0.max()), float(u0.min()), 0.05)
    inv = fc.fit_series(lambda u: _ser_a_pow(z, fc.ys_const(u, k), fc.ys_variable(u.size, k), r0)[0],
                        udom, z.a.domain_y, k)
    return CoordinateChange(fwd, inv, r0)


def tilde_renorm(z: Pair2D, ky: int | None = None) -> Pair2D:
    """Λ(p̃ Z) with p̃ Z = (H⁻¹∘(B∘A^{r0})^{r1}∘A∘H, H⁻¹∘B∘A^{r0}∘H)."""
    r0, r1 = heights_2d(z)
    k = ky if ky is not None else min(fc.KY_MAX, max(z.ky, fc.KY_DEFAULT))
    lam, a00, dom_a, dom_b = _output_domains(z, r0, r1)
    dy = z.a.domain_y
    cache: dict = {}

    def a_pair(x):
        key = x.tobytes()
        if key not in cache:
            cache[key] = _a_tilde_series(z, x, r0, r1, k)
        return cache[key]

    a_new = fc.fit_series(lambda x: a_pair(x)[0], dom_a, dy, k)
    h_new = fc.fit_series(lambda x: a_pair(x)[1], dom_a, dy, k)
    b_new = fc.fit_series(lambda x: _b_tilde_series(z, x, r0, k), dom_b, dy, k)
    gcache: dict = {}

    def g_pair(x):
        key = x.tobytes()
        if key not in gcache:
            gcache[key] = _g_series(z, x, r0, r1, k)
        return gcache[key]

    g1 = fc.fit_series(lambda x: g_pair(x)[0], dom_a, dy, k)
    g2 = fc.fit_series(lambda x: g_pair(x)[1], dom_a, dy, k)
    out = lambda_rescale(Pair2D(a_new, h_new, b_new), lam)
    g1 = fc.rescale2d(g1, lam, out.a.domain_y)
    g2 = fc.rescale2d(g2, lam, out.a.domain_y)
    y_tail = max(float(np.max(np.abs(f.coeffs[:, -1]))) * max(abs(f.domain_y.lo), abs(f.domain_y.hi)) ** f.ky
                 for f in (out.a, out.h, out.b))
    meta = {"lambda": lam, "r0": r0, "r1": r1, "ky": k, "y_tail": y_tail, "G": (g1, g2)}
    return Pair2D(out.a, out.h, out.b, meta)


def structure_residual(z: Pair2D) -> float:
    """sup |A − B∘G| for the map G recorded by tilde_renorm, over points where G lands in B's domain."""
    g1, g2 = z.meta["G"]
    X, Y = np.meshgrid(z.a.domain_x.grid(GRID_X), z.a.domain_y.grid(GRID_Y))
    u, v = fc.evaluate2d(g1, X, Y), fc.evaluate2d(g2, X, Y)
    inside = ((u >= z.b.domain_x.lo) & (u <= z.b.domain_x.hi)
              & (v >= z.b.domain_y.lo) & (v <= z.b.domain_y.hi))
    if not np.any(inside):
        raise DomainError("G does not meet the domain of B")
    X, Y, u, v = X[inside], Y[inside], u[inside], v[inside]
    bu, bv = z.apply_b(u, v)
    au, av = z.apply_a(X, Y)
    return float(max(np.max(np.abs(bu - au)), np.max(np.abs(bv - av))))


# ---------------------------------------------------------------------------
# commutator jets and the projection


@dataclass(frozen=True)
class ProjectionParams:
    c: float = 0.0
    d: float = 0.0
    e: float = 0.0
    f: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.c, self.d, self.e, self.f])

    @staticmethod
    def from_array(v) -> "ProjectionParams":
        return ProjectionParams(*(float(t) for t in v))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.as_array())))


@dataclass(frozen=True)
class JetData:
    """Derivatives entering the commutator jets at 0.

    a_at_q[i, j] = ∂x^i ∂y^j a at (b(0,0), 0); b_at_p[i, j] = ∂x^i ∂y^j b at
    (a(0,0), h(0,0)); a_at_0[i], h_at_0[i], b_at_0[i] = x-derivatives at (0, 0).
    """
    a_at_q: np.ndarray
    b_at_p: np.ndarray
    a_at_0: np.ndarray
    h_at_0: np.ndarray
    b_at_0: np.ndarray


def jet_data(z: Pair2D) -> JetData:
    a_at_0 = np.array([fc.partial_at(z.a, i, 0, 0.0, 0.0) for i in range(4)])
    h_at_0 = np.array([fc.partial_at(z.h, i, 0, 0.0, 0.0) for i in range(4)])
    b_at_0 = np.array([fc.partial_at(z.b, i, 0, 0.0, 0.0) for i in range(4)])
    a_at_q = np.zeros((4, 4))
    b_at_p = np.zeros((4, 4))
    for i in range(4):
        for j in range(4 - i):
            a_at_q[i, j] = fc.partial_at(z.a, i, j, b_at_0[0], 0.0)
            b_at_p[i, j] = fc.partial_at(z.b, i, j, a_at_0[0], h_at_0[0])
    return JetData(a_at_q, b_at_p, a_at_0, h_at_0, b_at_0)


def _poly_derivs(par: np.ndarray, t: float) -> np.ndarray:
    """P, P', P'', P''' at t for P(t) = c t + d t² + e t³ + f t⁴."""
    c, d, e, f = par
    return np.array([c * t + d * t ** 2 + e * t ** 3 + f * t ** 4,
                     c + 2 * d * t + 3 * e * t ** 2 + 4 * f * t ** 3,
                     2 * d + 6 * e * t + 12 * f * t ** 2,
                     6 * e + 24 * f * t])


def jets_closed_form(data: JetData, params: ProjectionParams) -> np.ndarray:
    """Jets 0..3 at 0 of x ↦ ã(q(x), x) − b̃(a(x,0), h(x,0)), with b̃ = b + P and q = b̃(·, 0)."""
    par = params.as_array()
    A, Bp = data.a_at_q, data.b_at_p
    a0, a1, a2, a3 = data.a_at_0
    _, k1, k2, k3 = data.h_at_0
    c, d, e, _ = par
    q1 = data.b_at_0[1] + c
    q2 = data.b_at_0[2] + 2 * d
    q3 = data.b_at_0[3] + 6 * e
    P = _poly_derivs(par, a0)
    j0 = A[0, 0] - Bp[0, 0] - P[0]
    j1 = A[1, 0] * q1 + A[0, 1] - (Bp[1, 0] * a1 + Bp[0, 1] * k1) - a1 * P[1]
    j2 = (A[2, 0] * q1 ** 2 + 2 * A[1, 1] * q1 + A[1, 0] * q2 + A[0, 2]
          - (Bp[2, 0] * a1 ** 2 + 2 * Bp[1, 1] * a1 * k1 + Bp[0, 2] * k1 ** 2
             + Bp[1, 0] * a2 + Bp[0, 1] * k2 + a2 * P[1] + a1 ** 2 * P[2]))
    j3 = (A[3, 0] * q1 ** 3 + 3 * A[2, 1] * q1 ** 2 + 3 * A[1, 2] * q1 + A[0, 3]
          + 3 * A[2, 0] * q1 * q2 + 3 * A[1, 1] * q2 + A[1, 0] * q3
          - (Bp[3, 0] * a1 ** 3 + 3 * Bp[2, 1] * a1 ** 2 * k1 + 3 * Bp[1, 2] * a1 * k1 ** 2
             + Bp[0, 3] * k1 ** 3 + 3 * Bp[2, 0] * a1 * a2 + 3 * Bp[1, 1] * a2 * k1
             + 3 * Bp[1, 1] * a1 * k2 + 3 * Bp[0, 2] * k1 * k2 + Bp[1, 0] * a3 + Bp[0, 1] * k3
             + a3 * P[1] + 3 * a1 * a2 * P[2] + a1 ** 3 * P[3]))
    return np.array([j0, j1, j2, j3])


def jet_map_jacobian(data: JetData, params: ProjectionParams) -> np.ndarray:
    """Analytic derivative of jets_closed_form with respect to (c, d, e, f)."""
    A = data.a_at_q
    a0, a1, a2, a3 = data.a_at_0
    c, d, _, _ = params.as_array()
    q1 = data.b_at_0[1] + c
    q2 = data.b_at_0[2] + 2 * d
    return np.array([
        [-a0, -a0 ** 2, -a0 ** 3, -a0 ** 4],
        [A[1, 0] - a1, -2 * a0 * a1, -3 * a0 ** 2 * a1, -4 * a0 ** 3 * a1],
        [2 * q1 * A[2, 0] + 2 * A[1, 1] - a2,
         2 * A[1, 0] - 2 * a2 * a0 - 2 * a1 ** 2,
         -3 * a0 * (a0 * a2 + 2 * a1 ** 2),
         -4 * a0 ** 2 * (a0 * a2 + 3 * a1 ** 2)],
        [3 * A[3, 0] * q1 ** 2 + 6 * A[2, 1] * q1 + 3 * A[1, 2] + 3 * A[2, 0] * q2 - a3,
         6 * A[2, 0] * q1 + 6 * A[1, 1] - 2 * a0 * a3 - 6 * a1 * a2,
         6 * A[1, 0] - 3 * a0 ** 2 * a3 - 18 * a0 * a1 * a2 - 6 * a1 ** 3,
         -4 * a0 ** 3 * a3 - 36 * a0 ** 2 * a1 * a2 - 24 * a0 * a1 ** 3],
    ])


def commutator_jets_2d(z: Pair2D, params: ProjectionParams = ProjectionParams()) -> np.ndarray:
    """Jets of L[Ã, B̃] at 0 by the closed forms, with b̃ = b + P(x)."""
    return jets_closed_form(jet_data(z), params)


def commutator_jets_direct(z: Pair2D, params: ProjectionParams = ProjectionParams()) -> np.ndarray:
    """Same jets by a Cauchy integral of the composed maps; an independent route."""
    par = params.as_array()
    ev = fc.evaluate2d_complex

    def poly(t):
        return par[0] * t + par[1] * t ** 2 + par[2] * t ** 3 + par[3] * t ** 4

    def comm(x):
        q = ev(z.b, x, 0.0 * x) + poly(x)
        ax = ev(z.a, x, 0.0 * x)
        return ev(z.a, q, x) - ev(z.b, ax, ev(z.h, x, 0.0 * x)) - poly(ax)

    room = min(-z.a.domain_x.lo, z.b.domain_x.hi)
    return p1.cauchy_jet(comm, 0.75 * room)


def add_to_b(z: Pair2D, params: ProjectionParams) -> Pair2D:
    """Π with the given parameters: b ↦ b + c x + d x² + e x³ + f x⁴."""
    col0 = fc.add_power(AnalyticMap1D(z.b.domain_x, z.b.coeffs[:, 0]), [0.0, *params.as_array()])
    n = max(col0.coeffs.size, z.b.coeffs.shape[0])
    m = np.zeros((n, z.b.ky + 1))
    m[:z.b.coeffs.shape[0]] = z.b.coeffs
    m[:, 0] = 0.0
    m[:col0.coeffs.size, 0] = col0.coeffs
    b = AnalyticMap2D(z.b.domain_x, z.b.domain_y, m, z.b.trunc_err)
    return Pair2D(z.a, z.h, b, dict(z.meta))


def projection_Pi(z: Pair2D, radius: float | None = None, max_steps: int = PI_MAX_STEPS,
                  tol: float = PI_TOL) -> tuple[Pair2D, ProjectionParams]:
    """Newton on (c, d, e, f) so that the corrected pair has vanishing jets."""
    data = jet_data(z)
    par = np.zeros(4)
    history = []
    for _ in range(max_steps + 1):
        pp = ProjectionParams.from_array(par)
        jets = jets_closed_form(data, pp)
        history.append(float(np.max(np.abs(jets))))
        if history[-1] < tol:
            break
        jac = jet_map_jacobian(data, pp)
        try:
            step = np.linalg.solve(jac, -jets)
        except np.linalg.LinAlgError as exc:
            raise ProjectionError("projection Jacobian is singular", history) from exc
        par = par + step
    else:
        raise ProjectionError(f"projection Newton stalled at {history[-1]:.3e}", history)
    params = ProjectionParams.from_array(par)
    if radius is not None and params.max_abs() > radius:
        warnings.warn(f"projection parameters {params.max_abs():.2e} exceed radius {radius:.2e}",
                      RuntimeWarning, stacklevel=2)
    out = add_to_b(z, params)
    out.meta["pi_history"] = history
    return out, params


def renormalize2d(z: Pair2D, ky: int | None = None, radius: float | None = None) -> Pair2D:
    """R = Π∘R̃; meta logs λ, heights, ‖·‖_y and the projection parameters."""
    t = tilde_renorm(z, ky)
    out, params = projection_Pi(t, radius)
    out.meta.update({"params": params, "y_norm": y_norm(out)})
    return out


@dataclass
class DReport:
    d1: bool
    d2: bool
    d3: bool
    d4: bool
    jets: np.ndarray
    normalization_defect: float
    heights: tuple | None
    distance: float

    @property
    def all_pass(self) -> bool:
        return self.d1 and self.d2 and self.d3 and self.d4


def check_D_conditions(z: Pair2D, z_star: Pair2D, eps: float, tol_comm: float = TOL_COMM) -> DReport:
    jets = commutator_jets_direct(z)
    norm_def = abs(float(fc.evaluate2d(z.b, 0.0, 0.0)) - 1.0)
    try:
        hts = heights_2d(z)
    except CombinatoricsError:
        hts = None
    dist = pair_distance(z, z_star)
    return DReport(bool(np.max(np.abs(jets)) < tol_comm), norm_def < TOL_NORMALIZATION,
                   hts is not None, dist <= eps, jets, norm_def, hts, dist)


# ---------------------------------------------------------------------------
# dissipative annulus maps


class AnnulusMap:
    """F(x, y) = (f(x) + eps·g(x, y), x) with the default g(x, y) = y − x.

    With this g, F commutes with the deck translation (x, y) ↦ (x + 1, y + 1).
    """

    def __init__(self, lift, eps: float, g: Callable | None = None,
                 g_series: Callable | None = None, dg_dy: float | None = 1.0):
        self.lift = lift
        self.eps = float(eps)
        self.g = g if g is not None else (lambda x, y: y - x)
        self.g_series = g_series if g_series is not None else (lambda u, v: v - u)
        self.dg_dy = dg_dy

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        return self.lift(x) + self.eps * self.g(x, np.asarray(y, dtype=float)), x + 0.0

    def series(self, u: np.ndarray, v: np.ndarray):
        return self.lift.series(u) + self.eps * self.g_series(u, v), u.copy()

    def jacobian_det(self) -> float:
        """Constant Jacobian determinant; only defined when ∂g/∂y is constant."""
        if self.dg_dy is None:
            raise DomainError("the Jacobian of this map is not constant")
        return -self.eps * self.dg_dy

    def orbit_x(self, n: int, x0: float = 0.0, y0: float = 0.0) -> np.ndarray:
        step = self.lift.scalar
        eps = self.eps
        g = self.g
        out = np.empty(n + 1)
        x, y = float(x0), float(y0)
        out[0] = x
        for i in range(1, n + 1):
            x, y = step(x) + eps * g(x, y), x
            out[i] = x
        return out

    def attractor_point(self, burn_in: int = BURN_IN) -> tuple[float, float]:
        """Image of (0, 0) after burn_in steps, translated back so that x ∈ [0, 1)."""
        orb = self.orbit_x(burn_in + 1)
        x, y = orb[-1], orb[-2]
        k = math.floor(x)
        return x - k, y - k

    def relative_orbit(self, n: int, burn_in: int = BURN_IN) -> np.ndarray:
        """x_j − x_0 along the orbit of an attractor point."""
        x0, y0 = self.attractor_point(burn_in)
        return self.orbit_x(n, x0, y0) - x0

    def digits(self, depth: int, max_iter: int = 2_000_000, burn_in: int = BURN_IN) -> p1.RotationPrefix:
        """CF digits from returns of an attractor orbit, compared with its starting point."""
        x0, y0 = self.attractor_point(burn_in)

        def extend(orbit):
            if orbit.size == 0:
                return self.orbit_x(1024, x0, y0) - x0
            more = self.orbit_x(orbit.size, orbit[-1] + x0, orbit[-2] + x0) - x0
            return np.concatenate([orbit, more[1:]])
        return p1.digits_from_orbit(extend, depth, max_iter)


def modulated_annulus_map(lift, eps: float, amplitude: float = 0.25) -> AnnulusMap:
    """Annulus map with x-dependent dissipation g(x, y) = (y − x)(1 + a·sin(2πx)).

    The factor is 1-periodic, so the map still commutes with the deck translation.
    """
    def g(x, y):
        return (y - x) * (1.0 + amplitude * np.sin(2.0 * np.pi * x))

    def g_series(u, v):
        factor, _ = p1.sin_cos_series(2.0 * np.pi * u)
        factor *= amplitude
        factor[0] += 1.0
        return fc.ys_mul(v - u, factor)

    return AnnulusMap(lift, eps, g, g_series, dg_dy=None)


def annulus_family_pair(F: AnnulusMap, m: int = 0, digits: Sequence[int] | None = None,
                        ky: int = fc.KY_DEFAULT, base: float = 0.0) -> Pair2D:
    """Normalized pair (T^{-p_{m+1}}∘F^{q_{m+1}}, T^{-p_m}∘F^{q_m}) with q_m = 1.

    T is the deck translation (x, y) ↦ (x + 1, y + 1).  The shear
    (x, y) ↦ (x, y − p_m) brings B to the form (b(x, y), x).  The pair is
    built around the point (base, base), conjugating by the diagonal
    translation, so base should sit at the critical point of the attractor.
    """
    if digits is None:
        pref = F.digits(m + 2)
        if pref.rational:
            raise CombinatoricsError("rotation number is rational at the requested depth")
        digits = pref.digits
    seq = convergents(RotationNumber(tuple(digits[:max(m + 2, 1)]), (1,)), m + 2)
    p_a, q_a = seq[m + 2]
    p_b, q_b = seq[m + 1]
    if q_b != 1:
        raise ArgumentError("annulus pairs need a level m with q_m = 1")

    def iterate(x, y_shift, q, p, k):
        u = fc.ys_const(x + base, k)
        v = fc.ys_variable(x.size, k)
        v[0] += y_shift + base
        for _ in range(q):
            u, v = F.series(u, v)
        u[0] -= p + base
        v[0] += p_b - p - base
        return u, v

    zero = np.array([0.0])
    xi0 = float(iterate(zero, -p_b, q_b, p_b, 0)[0][0, 0])
    eta0 = float(iterate(zero, -p_b, q_a, p_a, 0)[0][0, 0])
    dom_a = p1.nbhd(xi0)
    dom_b = p1.nbhd(eta0)
    dy = y_domain(dom_a, dom_b)
    cache: dict = {}

    def a_pair(x):
        key = x.tobytes()
        if key not in cache:
            cache[key] = iterate(x, -p_b, q_a, p_a, ky)
        return cache[key]

    a = fc.fit_series(lambda x: a_pair(x)[0], dom_a, dy, ky)
    h = fc.fit_series(lambda x: a_pair(x)[1], dom_a, dy, ky)
    b = fc.fit_series(lambda x: iterate(x, -p_b, q_b, p_b, ky)[0], dom_b, dy, ky)
    z = lambda_rescale(pair_from_maps(a, h, b), xi0)
    z.meta.update({"eps": F.eps, "m": m, "q": (q_a, q_b), "p": (p_a, p_b), "lambda": xi0,
                   "base": base})
    return z


def jacobian_det_a(z: Pair2D, x, y):
    """det DA = a_x h_y − a_y h_x."""
    ax = fc.evaluate2d(fc.partial_x(z.a), x, y)
    ay = fc.evaluate2d(fc.partial_y(z.a), x, y)
    hx = fc.evaluate2d(fc.partial_x(z.h), x, y)
    hy = fc.evaluate2d(fc.partial_y(z.h), x, y)
    return ax * hy - ay * hx


def tune_rotation_number(family: Callable[[float], AnnulusMap], target: RotationNumber, depth: int,
                         bracket: tuple[float, float] = (0.0, 1.0), max_return: int = 20_000,
                         extrapolate: bool = True) -> float:
    """ω whose map has rotation digits matching target to depth.

    Bisection runs at the deepest convergent with return time ≤ max_return;
    Aitken extrapolation over the last three convergents is kept only when the
    digits still match.
    """
    def return_point(omega, q):
        return float(family(omega).relative_orbit(q)[-1])

    omega, d = p1.tune_by_convergent(return_point, target, depth, bracket, max_return=max_return)
    seq = convergents(target, d + 1)
    best = omega
    if extrapolate and d >= depth + 3:
        w = [p1.tune_by_convergent(return_point, target, depth, bracket,
                                   max_return=seq[i][1])[0] for i in (d - 2, d - 1)] + [omega]
        denom = (w[2] - w[1]) - (w[1] - w[0])
        if denom != 0.0:
            cand = w[2] - (w[2] - w[1]) ** 2 / denom
            if abs(cand - omega) < abs(w[2] - w[1]):
                best = cand
    pref = family(best).digits(depth)
    want = tuple(target.digit(i) for i in range(depth))
    if pref.digits != want:
        if best != omega and family(omega).digits(depth).digits == want:
            return omega
        raise CombinatoricsError(f"tuned digits {pref.digits} differ from {want}")
    return best


def inflection(f: AnalyticMap1D, window: float = 0.1, n: int = 4001) -> tuple[float, float]:
    """(location, value) of the minimum of f′ on [−window, window]."""
    d1 = fc.derivative(f, 1)
    x = np.linspace(-window, window, n)
    i = int(np.argmin(fc.evaluate(d1, x)))
    lo, hi = x[max(i - 1, 0)], x[min(i + 1, n - 1)]
    d2 = fc.derivative(d1, 1)
    g_lo, g_hi = float(fc.evaluate(d2, lo)), float(fc.evaluate(d2, hi))
    if g_lo * g_hi < 0.0:
        t = brentq(lambda s: float(fc.evaluate(d2, s)), lo, hi, xtol=1e-15)
    else:
        t = float(x[i])
    return t, float(fc.evaluate(d1, t))


@dataclass
class CriticalTuning:
    omega: float
    k: float
    base: float
    residual: np.ndarray
    history: list = field(default_factory=list)


def tune_critical_pair(eps: float, target: RotationNumber, depth: int = 16, levels: int = 4,
                       k0: float = 1.0, base0: float = 0.0, tol: float = 1e-11,
                       max_steps: int = 12, ky: int = fc.KY_DEFAULT,
                       family: Callable[[float, float], AnnulusMap] | None = None,
                       bracket: tuple[float, float] = (0.0, 1.0)) -> tuple[Pair2D, CriticalTuning]:
    """Annulus pair from a two-parameter family (ω, k) ↦ F tuned to be critical.

    The default family is the Arnold lift x + ω − k sin(2πx)/(2π) with
    dissipation eps·(y − x).  Three conditions are solved: ω matches the
    rotation digits of target, and the amplitude k and the base point make the projection of the pair after
    `levels` renormalizations have an inflection point at 0 with zero slope.
    Without the last two conditions the orbit leaves any neighborhood of the
    fixed point: the slope at the inflection grows like λ⁻⁴ per step and its
    location like λ⁻² per step.
    """
    omegas: dict[float, float] = {}

    maker = family if family is not None else (lambda w, k: AnnulusMap(p1.ArnoldLift(w, k), eps))

    def family_k(k):
        return lambda w: maker(w, k)

    def omega_of(k):
        if k not in omegas:
            omegas[k] = tune_rotation_number(family_k(k), target, depth, bracket)
        return omegas[k]

    digits = tuple(target.digit(i) for i in range(2))

    def observe(v):
        k, base = float(v[0]), float(v[1])
        z = annulus_family_pair(maker(omega_of(k), k), 0, digits, ky=ky, base=base)
        for _ in range(levels):
            z = renormalize2d(z)
        loc, slope = inflection(z.project().eta)
        return np.array([slope, loc])

    v = np.array([k0, base0])
    f = observe(v)
    history = [(v.copy(), f.copy())]
    for _ in range(max_steps):
        if np.max(np.abs(f)) < tol:
            break
        hk = 1e-7
        hb = 1e-6
        jac = np.column_stack([(observe(v + [hk, 0.0]) - f) / hk, (observe(v + [0.0, hb]) - f) / hb])
        step = np.linalg.solve(jac, -f)
        t = 1.0
        while True:
            try:
                f_new = observe(v + t * step)
            except (CombinatoricsError, InversionError, DomainError, ProjectionError):
                f_new = None
            if f_new is not None and np.max(np.abs(f_new)) < np.max(np.abs(f)) or t < 1e-3:
                break
            t *= 0.5
        if f_new is None:
            raise ConvergenceError("critical tuning left the admissible region", history=history)
        v = v + t * step
        f = f_new
        history.append((v.copy(), f.copy()))
    else:
        if np.max(np.abs(f)) >= tol:
            raise ConvergenceError("critical tuning did not converge", history=history)
    k, base = float(v[0]), float(v[1])
    z = annulus_family_pair(maker(omega_of(k), k), 0, digits, ky=ky, base=base)
    z.meta.update({"omega": omega_of(k), "k": k})
    return z, CriticalTuning(omega_of(k), k, base, f, history)
