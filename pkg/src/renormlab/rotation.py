"""Continued fractions of rotation numbers: convergents, return times, scaling
ratios and the quantitative constants used by the measure estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError

INT64_MAX = 2 ** 63 - 1


@dataclass(frozen=True)
class RotationNumber:
    """Partial quotients [r_0, r_1, ...] given as a preperiod followed by a repeating period."""
    preperiod: tuple[int, ...] = ()
    period: tuple[int, ...] = (1,)

    def __post_init__(self):
        pre = tuple(int(r) for r in self.preperiod)
        per = tuple(int(r) for r in self.period)
        if not per:
            raise ArgumentError("period must be nonempty")
        if any(r < 1 for r in pre + per):
            raise ArgumentError(f"partial quotients must be >= 1, got {pre + per}")
        object.__setattr__(self, "preperiod", pre)
        object.__setattr__(self, "period", per)

    @classmethod
    def golden(cls) -> "RotationNumber":
        return cls((), (1,))

    @classmethod
    def periodic(cls, digits: Sequence[int]) -> "RotationNumber":
        return cls((), tuple(digits))

    @property
    def is_periodic(self) -> bool:
        return not self.preperiod

    @property
    def period_length(self) -> int:
        return len(self.period)

    def digit(self, i: int) -> int:
        if i < 0:
            raise ArgumentError("digit index must be >= 0")
        if i < len(self.preperiod):
            return self.preperiod[i]
        return self.period[(i - len(self.preperiod)) % len(self.period)]

    def digits(self, n: int) -> list[int]:
        return [self.digit(i) for i in range(n)]

    def shifted(self, i: int) -> "RotationNumber":
        """The tail [r_i, r_{i+1}, ...]."""
        if i < len(self.preperiod):
            return RotationNumber(self.preperiod[i:], self.period)
        j = (i - len(self.preperiod)) % len(self.period)
        return RotationNumber((), self.period[j:] + self.period[:j])

    @property
    def value(self) -> float:
        return theta_tail(self, 0)


@dataclass(frozen=True)
class Convergent:
    p: int
    q: int
    m: int


@dataclass(frozen=True)
class ReturnTimes:
    u: int
    v: int
    m: int


def _check_int(v: int) -> int:
    if abs(v) > INT64_MAX:
        raise ArgumentError("return-time arithmetic exceeds the 64-bit safe range")
    return v


def convergents(rho: RotationNumber, m_max: int) -> list[tuple[int, int]]:
    """[(p_{-1}, q_{-1}), (p_0, q_0), ..., (p_{m_max}, q_{m_max})]."""
    out = [(1, 0), (0, 1)]
    for j in range(m_max):
        r = rho.digit(j)
        (pm1, qm1), (p, q) = out[-2], out[-1]
        out.append((_check_int(r * p + pm1), _check_int(r * q + qm1)))
    return out


def convergent(rho: RotationNumber, m: int) -> Convergent:
    if m < -1:
        raise ArgumentError("convergent order must be >= -1")
    p, q = convergents(rho, max(m, 0))[m + 1]
    return Convergent(p, q, m)


def return_times(rho: RotationNumber, m: int) -> ReturnTimes:
    if m < 0:
        raise ArgumentError("return times need m >= 0")
    seq = convergents(rho, m)
    p, q = seq[m + 1]
    pm, qm = seq[m]
    return ReturnTimes(q + p, qm + pm, m)


def _mobius_fixed_point(digits: Sequence[int]) -> float:
    """Positive fixed point of x ↦ 1/(d_0 + 1/(d_1 + ... 1/(d_{n-1} + x)))."""
    # matrix [[a, b], [c, d]] acting as (a x + b)/(c x + d)
    mat = np.eye(2, dtype=object)
    for r in digits:
        mat = mat.dot(np.array([[0, 1], [1, r]], dtype=object))
    a, b, c, d = (int(v) for v in mat.ravel())
    # c x^2 + (d - a) x - b = 0, root in (0, 1); stable form of the quadratic formula
    disc = math.sqrt((d - a) ** 2 + 4 * b * c)
    if d - a >= 0:
        return 2.0 * b / ((d - a) + disc)
    return (-(d - a) + disc) / (2.0 * c)


def theta_tail(rho: RotationNumber, i: int = 0) -> float:
    """Value of the shifted continued fraction [r_i, r_{i+1}, ...]."""
    tail = rho.shifted(i)
    x = _mobius_fixed_point(tail.period)
    for r in reversed(tail.preperiod):
        x = 1.0 / (r + x)
    return x


def mobius_residual(rho: RotationNumber, i: int = 0) -> float:
    """|M(θ) − θ| for the periodic Möbius map of the tail; zero for an exact fixed point."""
    tail = rho.shifted(i)
    th = theta_tail(tail, len(tail.preperiod))
    x = th
    for r in reversed(tail.period):
        x = 1.0 / (r + x)
    return abs(x - th)


def lambda_rotation(rho: RotationNumber, k: int, n: int | None = None) -> float:
    """Signed scaling (−1)^{kn} (θ_0 θ_1 ⋯ θ_{n−1})^k of the rigid rotation pair."""
    if not rho.is_periodic:
        raise ArgumentError("scaling ratios need a purely periodic rotation number")
    n = rho.period_length if n is None else n
    if n % rho.period_length or k < 1:
        raise ArgumentError("n must be a multiple of the period and k >= 1")
    prod = 1.0
    for i in range(n):
        prod *= theta_tail(rho, i)
    return (-1.0) ** (k * n) * prod ** k


def interval_length(rho: RotationNumber, j: int) -> float:
    """|I_j| = |p_{j−1} − ρ q_{j−1}| evaluated directly from the convergents."""
    p, q = convergents(rho, max(j - 1, 0))[j]
    return abs(p - rho.value * q)


def interval_length_formula(rho: RotationNumber, j: int) -> float:
    """|I_j| = 1/(R_j q_{j−1} + q_{j−2}) with R_j = r_{j−1} + [r_j, ...]."""
    if j < 1:
        raise ArgumentError("j >= 1 required")
    seq = convergents(rho, j)
    q1 = seq[j][1]
    q2 = seq[j - 1][1] if j >= 1 else 0
    big_r = rho.digit(j - 1) + theta_tail(rho, j)
    return 1.0 / (big_r * q1 + q2)


GOLDEN_THETA = (math.sqrt(5.0) - 1.0) / 2.0


def alpha_constant() -> float:
    return math.sqrt((1.0 + GOLDEN_THETA) / 2.0)


def ulambda_check(rho: RotationNumber, m: int, k_max: int) -> dict:
    """Ratios |ū_{(k+m)n}| λ_{kn}² / α^{kn} for k = 1..k_max with their running maximum."""
    n = rho.period_length
    alpha = alpha_constant()
    rows = []
    running = 0.0
    for k in range(1, k_max + 1):
        u = return_times(rho, (k + m) * n).u
        lam = lambda_rotation(rho, k, n)
        val = u * lam * lam / alpha ** (k * n)
        running = max(running, val)
        rows.append({"k": k, "value": val, "bound": running})
    passed = True
    if len(rows) >= 4:
        half = rows[len(rows) // 2:]
        ks = np.array([r["k"] for r in half], dtype=float)
        lv = np.log([r["value"] for r in half])
        slope = float(np.polyfit(ks, lv, 1)[0])
        passed = slope <= 1e-9 and max(r["value"] for r in half) <= running
    return {"rows": rows, "A": running, "pass": bool(passed)}


def _norm_dist(x: np.ndarray) -> np.ndarray:
    """Distance to the nearest integer."""
    return np.abs(x - np.round(x))


def rigid_rotation_angle(rho: RotationNumber) -> float:
    """Normalized angle ρ/(1+ρ) of the rigid pair acting on a circle of length 1+ρ."""
    r = rho.value
    return r / (1.0 + r)


def discrepancy_constant(rho: RotationNumber, n_max: int) -> float:
    """c = min_{k ≤ n_max} k‖kβ‖ for the normalized rotation angle β."""
    k = np.arange(1, max(n_max, 1) + 1, dtype=float)
    beta = rigid_rotation_angle(rho)
    return float(np.min(k * _norm_dist(k * beta)))


def discrepancy_bound(rho: RotationNumber, m: int) -> dict:
    """Erdős–Turán bound log2/(πK) + K/(π N c) with K = √N, N = |ū_m|."""
    n_pts = return_times(rho, m).u
    kk = math.sqrt(n_pts)
    c = discrepancy_constant(rho, n_pts)
    bound = math.log(2.0) / (math.pi * kk) + kk / (math.pi * n_pts * c)
    return {"m": m, "N": n_pts, "K": kk, "c": c, "bound": bound}


def orbit_discrepancy(rho: RotationNumber, n_pts: int, start: float = 0.0) -> float:
    """Extreme discrepancy of the first n_pts points of the rigid-pair orbit (normalized)."""
    beta = rigid_rotation_angle(rho)
    x = np.sort(np.mod(start + beta * np.arange(n_pts), 1.0))
    i = np.arange(1, n_pts + 1) / n_pts
    return float(1.0 / n_pts + np.max(x - i) - np.min(x - i))


def _wrap(x: np.ndarray, rho_v: float) -> np.ndarray:
    return np.mod(x + 1.0, 1.0 + rho_v) - 1.0


def _circle_intersection(a0, a1, b0, b1, length):
    """Length of the intersection of arcs [a0,a1] and [b0,b1] on a circle (arcs not wrapping b)."""
    total = 0.0
    for shift in (-length, 0.0, length):
        lo = max(a0 + shift, b0)
        hi = min(a1 + shift, b1)
        if hi > lo:
            total += hi - lo
    return total


def central_intervals(rho: RotationNumber, k: int) -> tuple[tuple[float, float], tuple[float, float]]:
    """I_k = [0, q_{k-1}ρ − p_{k-1}] and J_k = [0, q_k ρ − p_k] of the rigid pair (sorted endpoints)."""
    r = rho.value
    seq = convergents(rho, k)
    p1, q1 = seq[k]
    p, q = seq[k + 1]
    i_end = q1 * r - p1
    j_end = q * r - p
    return tuple(sorted((0.0, i_end))), tuple(sorted((0.0, j_end)))


def relative_measure(rho: RotationNumber, level: int, outer: tuple[float, float]) -> float:
    """|𝓘_level ∩ L| / |L| by brute-force rotation orbit of the central I-interval."""
    r = rho.value
    length = 1.0 + r
    (i0, i1), _ = central_intervals(rho, level)
    u = return_times(rho, level).u
    shifts = _wrap(r * np.arange(u), r)
    lo, hi = outer
    covered = 0.0
    for s in shifts:
        a0, a1 = i0 + s, i1 + s
        covered += _circle_intersection(a0, a1, lo, hi, length)
    return covered / (hi - lo)


def proportion_limit(rho: RotationNumber, l_max: int, m: int = 1) -> dict:
    """Limit d of B_{kn}/(1+ρ) and the convergence of relative I-measures inside a level-mn interval."""
    n = rho.period_length
    r = rho.value
    rows_b = []
    for k in range(1, l_max + 1):
        j = k * n
        u = return_times(rho, j).u
        b_direct = interval_length(rho, j) * u
        b_formula = interval_length_formula(rho, j) * u
        rows_b.append({"k": k, "B": b_formula, "B_direct": b_direct, "value": b_formula / (1.0 + r)})
    vals = [row["value"] for row in rows_b]
    estimates = list(vals)
    for i in range(2, len(vals)):
        # Aitken extrapolation of the geometrically converging sequence
        d1, d2 = vals[i - 1] - vals[i - 2], vals[i] - vals[i - 1]
        if d2 != d1:
            estimates[i] = vals[i] - d2 * d2 / (d2 - d1)
    for row, est in zip(rows_b, estimates):
        row["estimate"] = est
    d = estimates[-1]
    outer, _ = central_intervals(rho, m * n)
    rows = []
    for level in range(m + 1, l_max + 1):
        ratio = relative_measure(rho, level * n, outer)
        rows.append({"l": level, "ratio": ratio, "residual": abs(ratio - d)})
    usable = [row for row in rows if row["residual"] > 1e-13]
    rate = float("nan")
    if len(usable) >= 3:
        ls = np.array([row["l"] for row in usable], dtype=float)
        lr = np.log([row["residual"] for row in usable])
        rate = float(np.exp(np.polyfit(ls, lr, 1)[0]))
    last = estimates[-3:]
    return {"d": d, "B_rows": rows_b, "rows": rows, "rate": rate,
            "stability": float(max(last) - min(last))}


def cf_digits(x: float, n: int, tol: float = 1e-12) -> list[int]:
    """First n partial quotients of x ∈ (0, 1); stops early near rational values."""
    out = []
    for _ in range(n):
        if x < tol:
            break
        y = 1.0 / x
        r = int(math.floor(y + 1e-12))
        out.append(r)
        x = y - r
        if x < 0:
            x = 0.0
    return out
