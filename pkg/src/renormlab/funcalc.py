"""Truncated analytic maps of one and two real variables.

One-variable maps are Chebyshev series on a mapped interval.  Two-variable
maps are Chebyshev in x times a truncated power series in y: column k of the
coefficient matrix holds the Chebyshev coefficients of the y^k coefficient
function.  Compositions of two-variable maps are carried out by truncated
y-series arithmetic on the x-nodes, so that very small y-derivatives keep
their relative precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import (ArgumentError, CompositionError, ConvergenceError,
                     DomainError, InversionError)

N_MAX = 64
TOL_FIT = 1e-12
MARGIN = 0.05
INV_MAX_ITER = 60
INV_TOL = 1e-13
KY_DEFAULT = 6
KY_MAX = 24


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ArgumentError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, margin: float = 0.0):
        pad = margin * self.width
        x = np.asarray(x)
        return (x >= self.lo - pad) & (x <= self.hi + pad)

    def to_unit(self, x):
        return (2.0 * np.asarray(x, dtype=float) - (self.lo + self.hi)) / (self.hi - self.lo)

    def from_unit(self, t):
        return 0.5 * (self.lo + self.hi) + 0.5 * (self.hi - self.lo) * np.asarray(t, dtype=float)

    def nodes(self, n: int) -> np.ndarray:
        return self.from_unit(C.chebpts1(n))

    def scaled(self, s: float) -> "Interval":
        a, b = self.lo * s, self.hi * s
        return Interval(min(a, b), max(a, b))

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.lo, self.hi, n)


def hull(*points: float, margin: float = 0.0) -> Interval:
    """Smallest interval containing the points, enlarged by margin times its width."""
    lo, hi = float(min(points)), float(max(points))
    pad = margin * (hi - lo)
    return Interval(lo - pad, hi + pad)


def _values_to_coeffs(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients from samples at first-kind nodes (axis 0)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    vander = _vander(n)
    c = vander.T @ values
    c[0] /= n
    c[1:] /= 0.5 * n
    return c


_VANDER_CACHE: dict[int, np.ndarray] = {}


def _vander(n: int) -> np.ndarray:
    if n not in _VANDER_CACHE:
        m = C.chebvander(C.chebpts1(n), n - 1)
        m.setflags(write=False)
        _VANDER_CACHE[n] = m
    return _VANDER_CACHE[n]


def _chop(c: np.ndarray, tol: float) -> tuple[np.ndarray, float]:
    """Drop the tail once it reaches the rounding plateau.

    A series is converged when its last coefficients sit below tol relative
    to the largest one; it is then cut where the tail envelope meets a few
    times the plateau level.  Unconverged series are kept whole and their
    last coefficients reported as the truncation error.
    """
    mags = np.abs(c) if c.ndim == 1 else np.abs(c).max(axis=1)
    scale = mags.max() if mags.size else 0.0
    if scale == 0.0:
        return c[:1] * 0.0, 0.0
    tail_n = min(8, max(mags.size // 4, 1))
    plateau = float(mags[-tail_n:].max())
    if plateau > tol * scale:
        return c.copy(), float(mags[-tail_n:].sum())
    envelope = np.maximum.accumulate(mags[::-1])[::-1]
    thresh = max(4.0 * plateau, 4.0 * np.finfo(float).eps * scale)
    below = np.nonzero(envelope <= thresh)[0]
    last = int(below[0]) if below.size else mags.size
    last = max(last, 1)
    return c[:last].copy(), float(mags[last:].sum())


# ---------------------------------------------------------------------------
# one variable


@dataclass(frozen=True, eq=False)
class AnalyticMap1D:
    domain: Interval
    coeffs: np.ndarray
    trunc_err: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if not self.trunc_err >= 0:
            raise ArgumentError("trunc_err must be non-negative")

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, x):
        return evaluate(self, x)

    def deriv(self, order: int = 1) -> "AnalyticMap1D":
        return derivative(self, order)


def evaluate(f: AnalyticMap1D, x, margin: float = MARGIN):
    xa = np.asarray(x, dtype=float)
    ok = f.domain.contains(xa, margin)
    if not np.all(ok):
        bad = xa[~ok].ravel() if xa.ndim else xa
        raise DomainError(f"point {float(np.ravel(bad)[0])!r} outside {f.domain} beyond margin")
    out = C.chebval(f.domain.to_unit(xa), f.coeffs)
    return float(out) if np.ndim(out) == 0 else out


def evaluate_complex(f: AnalyticMap1D, z):
    """Analytic continuation of the series to complex arguments; no domain check."""
    z = np.asarray(z, dtype=complex)
    t = (2.0 * z - (f.domain.lo + f.domain.hi)) / (f.domain.hi - f.domain.lo)
    return C.chebval(t, f.coeffs)


def fit(fn: Callable[[np.ndarray], np.ndarray], domain: Interval, n_max: int = N_MAX,
        tol: float = TOL_FIT, extra_err: float = 0.0) -> AnalyticMap1D:
    """Interpolate fn at n_max+1 Chebyshev nodes and chop the converged tail."""
    x = domain.nodes(n_max + 1)
    vals = np.asarray(fn(x), dtype=float)
    if vals.shape != x.shape or not np.all(np.isfinite(vals)):
        raise DomainError("non-finite samples while fitting")
    c, err = _chop(_values_to_coeffs(vals), tol)
    return AnalyticMap1D(domain, c, err + extra_err)


def from_power(power_coeffs: Sequence[float], domain: Interval) -> AnalyticMap1D:
    """Exact conversion of sum_k p_k x^k to a Chebyshev series on domain."""
    p = np.polynomial.Polynomial(np.asarray(power_coeffs, dtype=float))
    c = p.convert(kind=C.Chebyshev, domain=[domain.lo, domain.hi]).coef
    return AnalyticMap1D(domain, c, 0.0)


def constant(value: float, domain: Interval) -> AnalyticMap1D:
    return AnalyticMap1D(domain, [float(value)], 0.0)


def identity(domain: Interval) -> AnalyticMap1D:
    return from_power([0.0, 1.0], domain)


def derivative(f: AnalyticMap1D, order: int = 1) -> AnalyticMap1D:
    if order < 0:
        raise ArgumentError("derivative order must be non-negative")
    if order == 0:
        return f
    if order > f.degree:
        return AnalyticMap1D(f.domain, [0.0], 0.0)
    scl = 2.0 / f.domain.width
    c = C.chebder(f.coeffs, m=order, scl=scl)
    err = f.trunc_err * (max(f.degree, 1) ** 2 * scl) ** order
    return AnalyticMap1D(f.domain, c, err)


def lipschitz(f: AnalyticMap1D) -> float:
    d = derivative(f, 1)
    x = f.domain.grid(4 * (f.degree + 2))
    return float(np.max(np.abs(evaluate(d, x))))


def compose(f: AnalyticMap1D, g: AnalyticMap1D, n_max: int = N_MAX) -> AnalyticMap1D:
    """f∘g on the domain of g."""
    x = g.domain.nodes(n_max + 1)
    gx = evaluate(g, x)
    ok = f.domain.contains(gx, MARGIN)
    if not np.all(ok):
        i = int(np.nonzero(~ok)[0][0])
        raise CompositionError(f"range escape at node x={x[i]!r}: g(x)={gx[i]!r} outside {f.domain}",
                               node=float(x[i]))
    c, err = _chop(_values_to_coeffs(evaluate(f, gx)), TOL_FIT)
    total = err + f.trunc_err + lipschitz(f) * g.trunc_err
    return AnalyticMap1D(g.domain, c, total)


def compose_chain(maps: Sequence[AnalyticMap1D], domain: Interval,
                  n_max: int = N_MAX) -> AnalyticMap1D:
    """maps[-1]∘…∘maps[0] sampled once on domain and refit."""
    def chain(x):
        y = x
        for i, m in enumerate(maps):
            ok = m.domain.contains(y, MARGIN)
            if not np.all(ok):
                j = int(np.nonzero(~ok)[0][0])
                raise CompositionError(f"range escape in chain step {i} at x={x[j]!r}",
                                       node=float(x[j]))
            y = evaluate(m, y)
        return y
    err = 0.0
    for m in maps:
        err = err * (lipschitz(m) if m.degree > 0 else 0.0) + m.trunc_err
    return fit(chain, domain, n_max, extra_err=err)


def solve_monotone(func, dfunc, y, lo, hi, tol: float, max_iter: int = INV_MAX_ITER):
    """Vectorized safeguarded Newton for func(x) = y with x bracketed in [lo, hi]."""
    y = np.asarray(y, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), y.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), y.shape).copy()
    flo = func(lo) - y
    fhi = func(hi) - y
    if np.any(flo * fhi > 0):
        i = int(np.nonzero((flo * fhi > 0).ravel())[0][0])
        raise InversionError(f"target {y.ravel()[i]!r} not bracketed")
    increasing = fhi >= flo
    x = 0.5 * (lo + hi)
    done = np.zeros(y.shape, dtype=bool)
    for _ in range(max_iter):
        fx = func(x) - y
        below = np.where(increasing, fx < 0, fx > 0)
        lo = np.where(below, x, lo)
        hi = np.where(below, hi, x)
        d = dfunc(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - fx / d
        bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        step = np.abs(xn - x)
        done |= fx == 0
        x = np.where(done, x, xn)
        done |= step <= tol
        if np.all(done):
            return x
    res = np.abs(func(x) - y)
    raise ConvergenceError(f"inversion did not converge; worst residual {res.max():.3e}",
                           history=[float(res.max())])


def invert_values(func, dfunc, targets, domain: Interval, n_grid: int = 257,
                  tol: float | None = None) -> np.ndarray:
    """Solve func(x) = t for each target t on a monotone branch of func over domain.

    func and dfunc are vectorized.  The grid scan splits domain into monotone
    runs; exactly one run must cover all targets.
    """
    grid = domain.grid(n_grid)
    vals = np.asarray(func(grid), dtype=float)
    sgn = np.sign(np.diff(vals))
    if np.any(sgn == 0):
        raise InversionError("map is flat on a grid cell")
    t = np.asarray(targets, dtype=float)
    slack = 1e-14 * max(1.0, float(np.max(np.abs(vals))))
    cuts = np.concatenate([[0], np.nonzero(np.diff(sgn))[0] + 1, [sgn.size]])
    runs = []
    for i0, i1 in zip(cuts[:-1], cuts[1:]):
        lo_v, hi_v = sorted((vals[i0], vals[i1]))
        if t.min() >= lo_v - slack and t.max() <= hi_v + slack:
            runs.append((i0, i1))
    if not runs:
        if cuts.size == 2:
            bad = (t < vals.min() - slack) | (t > vals.max() + slack)
            raise CompositionError("target exceeds the range of the map", node=float(t.ravel()[int(np.argmax(bad))]))
        raise InversionError("no monotone branch of the map covers the targets")
    if len(runs) > 1:
        raise InversionError("targets have preimages on several monotone branches")
    i0, i1 = runs[0]
    gv, gx = vals[i0:i1 + 1], grid[i0:i1 + 1]
    if gv[-1] < gv[0]:
        gv, gx = gv[::-1], gx[::-1]
    idx = np.clip(np.searchsorted(gv, t), 1, gv.size - 1)
    lo = np.minimum(gx[idx - 1], gx[idx])
    hi = np.maximum(gx[idx - 1], gx[idx])
    if tol is None:
        tol = INV_TOL * domain.width
    return solve_monotone(func, dfunc, t, lo, hi, tol)


def invert_on(f: AnalyticMap1D, target: Interval, n_max: int = N_MAX) -> AnalyticMap1D:
    """Inverse of a monotone f, fitted on target."""
    df = derivative(f, 1)
    tol = INV_TOL * f.domain.width
    x = invert_values(lambda z: evaluate(f, z), lambda z: evaluate(df, z),
                      target.nodes(n_max + 1), f.domain, 8 * (f.degree + 2) + 1, tol)
    c, err = _chop(_values_to_coeffs(x), TOL_FIT)
    return AnalyticMap1D(target, c, err + tol)


def rescale(f: AnalyticMap1D, s: float) -> AnalyticMap1D:
    """x ↦ f(s x)/s on the domain divided by s; exact on coefficients."""
    s = float(s)
    if s == 0.0 or not math.isfinite(s):
        raise ArgumentError("rescale factor must be finite and non-zero")
    dom = f.domain.scaled(1.0 / s)
    c = f.coeffs / s
    if s < 0:
        c = c * (-1.0) ** np.arange(c.size)
    return AnalyticMap1D(dom, c, f.trunc_err / abs(s))


def add_power(f: AnalyticMap1D, power_coeffs: Sequence[float]) -> AnalyticMap1D:
    g = from_power(power_coeffs, f.domain)
    n = max(f.coeffs.size, g.coeffs.size)
    c = np.zeros(n)
    c[:f.coeffs.size] += f.coeffs
    c[:g.coeffs.size] += g.coeffs
    return AnalyticMap1D(f.domain, c, f.trunc_err)


def restrict(f: AnalyticMap1D, domain: Interval, n_max: int = N_MAX) -> AnalyticMap1D:
    return fit(lambda x: evaluate(f, x), domain, n_max, extra_err=f.trunc_err)


def _hexlist(a) -> list[str]:
    return [float(v).hex() for v in np.ravel(a)]


def to_record(f: AnalyticMap1D) -> dict:
    return {"basis": "chebyshev", "domain": _hexlist([f.domain.lo, f.domain.hi]),
            "coeffs": _hexlist(f.coeffs), "trunc_err": float(f.trunc_err).hex()}


def from_record(rec: dict) -> AnalyticMap1D:
    if rec.get("basis") != "chebyshev":
        raise ArgumentError("unknown basis")
    lo, hi = (float.fromhex(v) for v in rec["domain"])
    return AnalyticMap1D(Interval(lo, hi), [float.fromhex(v) for v in rec["coeffs"]],
                         float.fromhex(rec["trunc_err"]))


# ---------------------------------------------------------------------------
# truncated y-series on x-node arrays; a series is an array of shape (K+1, n)


def ys_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    k = a.shape[0]
    out = np.zeros_like(a, dtype=float)
    for i in range(k):
        if not np.any(a[i]):
            continue
        out[i:] += a[i] * b[:k - i]
    return out


def ys_recip(a: np.ndarray) -> np.ndarray:
    k = a.shape[0]
    out = np.zeros_like(a, dtype=float)
    out[0] = 1.0 / a[0]
    for j in range(1, k):
        acc = np.zeros_like(a[0])
        for i in range(1, j + 1):
            acc += a[i] * out[j - i]
        out[j] = -acc * out[0]
    return out


def ys_const(values: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((k + 1,) + np.shape(values))
    out[0] = values
    return out


def ys_variable(n: int, k: int, scale: float = 1.0) -> np.ndarray:
    """The series scale·y at n nodes."""
    out = np.zeros((k + 1, n))
    if k >= 1:
        out[1] = scale
    return out


def ys_compose_1d(f: AnalyticMap1D, u: np.ndarray) -> np.ndarray:
    """f(u) for a series u, by Taylor expansion of f about the constant term."""
    k = u.shape[0] - 1
    u0 = u[0]
    du = u.copy()
    du[0] = 0.0
    out = ys_const(evaluate(f, u0), k)
    power = ys_const(np.ones_like(u0), k)
    fact = 1.0
    g = f
    for m in range(1, k + 1):
        power = ys_mul(power, du)
        fact *= m
        g = derivative(g, 1)
        if g.degree == 0 and g.coeffs[0] == 0.0:
            break
        out += power * (evaluate(g, u0) / fact)
    return out


# ---------------------------------------------------------------------------
# two variables


@dataclass(frozen=True, eq=False)
class AnalyticMap2D:
    domain_x: Interval
    domain_y: Interval
    coeffs: np.ndarray
    trunc_err: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.size == 0:
            raise ArgumentError("2D coefficients must be a nonempty matrix")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def ky(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def degree_x(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, x, y):
        return evaluate2d(self, x, y)

    @cached_property
    def _xderivs(self) -> list[np.ndarray]:
        out = [self.coeffs]
        scl = 2.0 / self.domain_x.width
        for _ in range(max(self.ky + 1, 4)):
            prev = out[-1]
            out.append(C.chebder(prev, m=1, scl=scl, axis=0) if prev.shape[0] > 1
                       else np.zeros((1, prev.shape[1])))
        return out

    def column_values(self, x: np.ndarray, dx: int = 0) -> np.ndarray:
        """Values of the x-derivative of order dx of each y^k coefficient, shape (K+1, n)."""
        if dx < len(self._xderivs):
            c = self._xderivs[dx]
        elif self.coeffs.shape[0] > dx:
            c = C.chebder(self.coeffs, m=dx, scl=2.0 / self.domain_x.width, axis=0)
        else:
            c = np.zeros((1, self.coeffs.shape[1]))
        vals = C.chebval(self.domain_x.to_unit(x), c)
        return np.asarray(vals).reshape(self.ky + 1, -1)

    def column(self, k: int) -> AnalyticMap1D:
        if k > self.ky:
            return AnalyticMap1D(self.domain_x, [0.0])
        return AnalyticMap1D(self.domain_x, self.coeffs[:, k], self.trunc_err)


def _check2d(f: AnalyticMap2D, x, y):
    if not np.all(f.domain_x.contains(x, MARGIN)):
        bad = np.ravel(np.asarray(x)[~f.domain_x.contains(x, MARGIN)])[0]
        raise DomainError(f"x={float(bad)!r} outside {f.domain_x} beyond margin")
    if not np.all(f.domain_y.contains(y, MARGIN)):
        bad = np.ravel(np.asarray(y)[~f.domain_y.contains(y, MARGIN)])[0]
        raise DomainError(f"y={float(bad)!r} outside {f.domain_y} beyond margin")


def evaluate2d(f: AnalyticMap2D, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    _check2d(f, x, y)
    cols = f.column_values(x.ravel())
    yy = y.ravel()
    out = cols[-1].copy()
    for k in range(f.ky - 1, -1, -1):
        out = out * yy + cols[k]
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def partial_x(f: AnalyticMap2D) -> AnalyticMap2D:
    if f.degree_x == 0:
        return AnalyticMap2D(f.domain_x, f.domain_y, np.zeros((1, f.ky + 1)))
    return AnalyticMap2D(f.domain_x, f.domain_y, f._xderivs[1],
                         f.trunc_err * f.degree_x ** 2 * 2.0 / f.domain_x.width)


def partial_y(f: AnalyticMap2D) -> AnalyticMap2D:
    if f.ky == 0:
        return AnalyticMap2D(f.domain_x, f.domain_y, np.zeros((f.coeffs.shape[0], 1)))
    c = f.coeffs[:, 1:] * np.arange(1, f.ky + 1)[None, :]
    return AnalyticMap2D(f.domain_x, f.domain_y, c, f.trunc_err * f.ky)


def slice_y(f: AnalyticMap2D, y0: float) -> AnalyticMap1D:
    powers = float(y0) ** np.arange(f.ky + 1)
    return AnalyticMap1D(f.domain_x, f.coeffs @ powers, f.trunc_err)


def from_columns(domain_x: Interval, domain_y: Interval,
                 columns: Sequence[AnalyticMap1D]) -> AnalyticMap2D:
    n = max(c.coeffs.size for c in columns)
    m = np.zeros((n, len(columns)))
    for k, col in enumerate(columns):
        if col.domain != domain_x:
            col = restrict(col, domain_x)
            n2 = col.coeffs.size
            if n2 > m.shape[0]:
                m = np.vstack([m, np.zeros((n2 - m.shape[0], m.shape[1]))])
        m[:col.coeffs.size, k] = col.coeffs
    return AnalyticMap2D(domain_x, domain_y, m, max(c.trunc_err for c in columns))


def from_power2d(power: np.ndarray, domain_x: Interval, domain_y: Interval) -> AnalyticMap2D:
    """Exact conversion of sum p[i,k] x^i y^k."""
    power = np.atleast_2d(np.asarray(power, dtype=float))
    cols = [from_power(power[:, k], domain_x) for k in range(power.shape[1])]
    return from_columns(domain_x, domain_y, cols)


def ys_eval2d(f: AnalyticMap2D, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """f(u, v) for y-series u, v of equal order."""
    k = u.shape[0] - 1
    u0, v0 = u[0], v[0]
    _check2d(f, u0, v0)
    du = u.copy()
    du[0] = 0.0
    # Taylor data of each coefficient function f_j about u0
    powers_u = [ys_const(np.ones_like(u0), k)]
    for _ in range(k):
        powers_u.append(ys_mul(powers_u[-1], du))
    fj = np.zeros((f.ky + 1, k + 1, u0.size))
    fact = 1.0
    for m in range(k + 1):
        if m > 0:
            fact *= m
        if m > f.degree_x:
            break
        vals = f.column_values(u0, dx=m) / fact
        for j in range(f.ky + 1):
            fj[j] += powers_u[m] * vals[j]
    # Horner in v
    out = fj[f.ky].copy()
    for j in range(f.ky - 1, -1, -1):
        out = ys_mul(out, v) + fj[j]
    return out


def fit_series(fn: Callable[[np.ndarray], np.ndarray], domain_x: Interval, domain_y: Interval,
               ky: int, n_max: int = N_MAX, tol: float = TOL_FIT) -> AnalyticMap2D:
    """Fit a map from its y-series at the x-nodes; fn(X) returns shape (ky+1, n)."""
    x = domain_x.nodes(n_max + 1)
    ser = np.asarray(fn(x), dtype=float)
    if ser.shape != (ky + 1, x.size) or not np.all(np.isfinite(ser)):
        raise DomainError("bad series samples while fitting a 2D map")
    coeffs = _values_to_coeffs(ser.T)
    cols = []
    err = 0.0
    ymax = max(abs(domain_y.lo), abs(domain_y.hi))
    for k in range(ky + 1):
        ck, ek = _chop(coeffs[:, k], tol)
        cols.append(ck)
        err += ek * ymax ** k
    n = max(c.size for c in cols)
    m = np.zeros((n, ky + 1))
    for k, ck in enumerate(cols):
        m[:ck.size, k] = ck
    return AnalyticMap2D(domain_x, domain_y, m, err)


def series_at(f: AnalyticMap2D, x: np.ndarray, ky: int) -> np.ndarray:
    """y-series of f(x, y) about y = 0 at the points x, padded or truncated to order ky."""
    vals = f.column_values(x)
    out = np.zeros((ky + 1, np.size(x)))
    kk = min(ky, f.ky)
    out[:kk + 1] = vals[:kk + 1]
    return out


def compose2d(f: AnalyticMap2D, u: AnalyticMap2D, v: AnalyticMap2D,
              ky: int | None = None, n_max: int = N_MAX) -> AnalyticMap2D:
    """(x, y) ↦ f(u(x,y), v(x,y)) on the common domain of u and v."""
    if u.domain_x != v.domain_x or u.domain_y != v.domain_y:
        raise ArgumentError("inner maps must share a domain")
    if ky is None:
        ky = min(KY_MAX, max(f.degree_x * u.ky + f.ky * v.ky, f.ky, u.ky, v.ky, 1))

    def ser(x):
        uu = series_at(u, x, ky)
        vv = series_at(v, x, ky)
        return ys_eval2d(f, uu, vv)

    out = fit_series(ser, u.domain_x, u.domain_y, ky, n_max)
    return AnalyticMap2D(out.domain_x, out.domain_y, out.coeffs,
                         out.trunc_err + f.trunc_err + u.trunc_err + v.trunc_err)


def to_record2d(f: AnalyticMap2D) -> dict:
    return {"basis": "chebyshev-x-power-y",
            "domain_x": _hexlist([f.domain_x.lo, f.domain_x.hi]),
            "domain_y": _hexlist([f.domain_y.lo, f.domain_y.hi]),
            "shape": list(f.coeffs.shape), "coeffs": _hexlist(f.coeffs),
            "trunc_err": float(f.trunc_err).hex()}


def from_record2d(rec: dict) -> AnalyticMap2D:
    dx = Interval(*(float.fromhex(v) for v in rec["domain_x"]))
    dy = Interval(*(float.fromhex(v) for v in rec["domain_y"]))
    c = np.array([float.fromhex(v) for v in rec["coeffs"]]).reshape(rec["shape"])
    return AnalyticMap2D(dx, dy, c, float.fromhex(rec["trunc_err"]))


def evaluate2d_complex(f: AnalyticMap2D, u, v):
    """Analytic continuation of a 2D map to complex arguments; no domain check."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    t = (2.0 * u - (f.domain_x.lo + f.domain_x.hi)) / (f.domain_x.hi - f.domain_x.lo)
    cols = np.asarray(C.chebval(t.ravel(), f.coeffs)).reshape(f.ky + 1, -1)
    vv = v.ravel()
    out = cols[-1].copy()
    for k in range(f.ky - 1, -1, -1):
        out = out * vv + cols[k]
    return out.reshape(np.broadcast(u, v).shape)


def partial_at(f: AnalyticMap2D, i: int, j: int, x: float, y: float) -> float:
    """∂x^i ∂y^j f at the point (x, y)."""
    _check2d(f, x, y)
    cols = f.column_values(np.array([float(x)]), dx=i)[:, 0]
    total = 0.0
    for k in range(j, f.ky + 1):
        total += cols[k] * math.perm(k, j) * float(y) ** (k - j)
    return float(total)


def rescale2d(f: AnalyticMap2D, s: float, domain_y: Interval | None = None) -> AnalyticMap2D:
    """(x, y) ↦ f(s·x, s·y)/s, exactly."""
    cols = []
    for k in range(f.ky + 1):
        col = rescale(AnalyticMap1D(f.domain_x, f.coeffs[:, k]), s)
        cols.append(col.coeffs * s ** k)
    dx = f.domain_x.scaled(1.0 / s)
    dy = domain_y if domain_y is not None else f.domain_y.scaled(1.0 / s)
    m = np.stack(cols, axis=1)
    return AnalyticMap2D(dx, dy, m, f.trunc_err / abs(s))
