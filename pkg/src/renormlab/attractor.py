"""Renormalization microscope, attractors, average Jacobian and universality.

Points are arrays of shape (2, n).  A pair Z = (A, B) acts piecewise: A on
the side x ≥ 0, B on the side x < 0.  One renormalization step satisfies

    L_Z ∘ A' = Z^{A (A^{r0} B)^{r1}} ∘ L_Z,   L_Z ∘ B' = Z^{A^{r0} B} ∘ L_Z,

with words written in application order and L_Z = H_Z ∘ Λ_Z.  A microscope
level spans `period` renormalization steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import funcalc as fc
from . import pairs2d as p2
from .errors import (ArgumentError, ConvergenceError, DomainError, PrecisionError,
                     StructuralError)
from .funcalc import AnalyticMap1D
from .pairs2d import CoordinateChange, Pair2D

CONTRACTION_BOUND = 0.5
SAMPLE_POINTS = 400
BURN_IN = 200


# ---------------------------------------------------------------------------
# pair evaluation with Jacobians


class PairJet:
    """Letter maps of a pair with their Jacobian matrices, partials cached."""

    def __init__(self, z: Pair2D):
        self.z = z

    @cached_property
    def _partials(self):
        z = self.z
        return (fc.partial_x(z.a), fc.partial_y(z.a), fc.partial_x(z.h), fc.partial_y(z.h),
                fc.partial_x(z.b), fc.partial_y(z.b))

    def letter(self, c: str, p: np.ndarray) -> np.ndarray:
        x, y = p
        if c == "A":
            return np.array(self.z.apply_a(x, y))
        return np.array(self.z.apply_b(x, y))

    def letter_jac(self, c: str, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Image and Jacobian (shape (n, 2, 2)) of one letter at points p."""
        x, y = p
        ax, ay, hx, hy, bx, by = self._partials
        jac = np.empty((x.size, 2, 2))
        if c == "A":
            jac[:, 0, 0] = fc.evaluate2d(ax, x, y)
            jac[:, 0, 1] = fc.evaluate2d(ay, x, y)
            jac[:, 1, 0] = fc.evaluate2d(hx, x, y)
            jac[:, 1, 1] = fc.evaluate2d(hy, x, y)
        else:
            jac[:, 0, 0] = fc.evaluate2d(bx, x, y)
            jac[:, 0, 1] = fc.evaluate2d(by, x, y)
            jac[:, 1, 0] = 1.0
            jac[:, 1, 1] = 0.0
        return self.letter(c, p), jac

    def log_jac(self, c: str, p: np.ndarray) -> np.ndarray:
        """ln |det D(letter)| at points p."""
        _, jac = self.letter_jac(c, p)
        return np.log(np.abs(jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]))

    def word(self, w: str, p: np.ndarray) -> np.ndarray:
        for c in w:
            p = self.letter(c, p)
        return p

    def word_jac(self, w: str, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        jac = np.broadcast_to(np.eye(2), (p.shape[1], 2, 2)).copy()
        for c in w:
            p, d = self.letter_jac(c, p)
            jac = d @ jac
        return p, jac

    def word_log_jac(self, w: str, p: np.ndarray) -> np.ndarray:
        """Σ ln |Jac| of the letters of w along the orbit of p."""
        total = np.zeros(p.shape[1])
        for c in w:
            total += self.log_jac(c, p)
            p = self.letter(c, p)
        return total

    def piecewise(self, p: np.ndarray) -> np.ndarray:
        """Z(p): A where x ≥ 0, B where x < 0."""
        out = np.empty_like(p)
        right = p[0] >= 0.0
        if np.any(right):
            out[:, right] = self.letter("A", p[:, right])
        if np.any(~right):
            out[:, ~right] = self.letter("B", p[:, ~right])
        return out


def _split_sides(pts: np.ndarray) -> dict[str, np.ndarray]:
    return {"A": pts[:, pts[0] >= 0.0], "B": pts[:, pts[0] < 0.0]}


def side_centers(z: Pair2D, n: int = SAMPLE_POINTS) -> dict[str, np.ndarray]:
    """Centers of the working rectangles: attractor samples nearest the middle of each side."""
    zeta = z.project()
    sides = _split_sides(attractor_sample(z, n))
    mids = {"A": 0.5 * zeta.xi0, "B": 0.5 * zeta.eta0}
    return {s: q[:, [int(np.argmin(np.abs(q[0] - mids[s])))]] for s, q in sides.items()}


def side_intervals(z: Pair2D) -> dict[str, tuple[float, float]]:
    zeta = z.project()
    return {"A": (0.0, zeta.xi0), "B": (zeta.eta0, 0.0)}


def attractor_ends(z: Pair2D, n: int = SAMPLE_POINTS) -> dict[str, np.ndarray]:
    """Attractor samples with extreme x on each side, shape (2, 2) per side."""
    sides = _split_sides(attractor_sample(z, n))
    return {s: q[:, [int(np.argmin(q[0])), int(np.argmax(q[0]))]] for s, q in sides.items()}


def attractor_sample(z: Pair2D, n: int = SAMPLE_POINTS, burn_in: int = BURN_IN,
                     start: tuple[float, float] = (0.5, 0.0)) -> np.ndarray:
    """n consecutive points of the piecewise orbit after burn-in, shape (2, n)."""
    jet = PairJet(z)
    p = np.array([[start[0]], [start[1]]], dtype=float)
    for _ in range(burn_in):
        p = jet.piecewise(p)
    out = np.empty((2, n))
    for i in range(n):
        out[:, i] = p[:, 0]
        p = jet.piecewise(p)
    return out


# ---------------------------------------------------------------------------
# renormalization orbit


def step_words(r0: int, r1: int) -> dict[str, str]:
    """Words of Z (application order) conjugate to the letters of R Z."""
    return {"A": "A" + ("A" * r0 + "B") * r1, "B": "A" * r0 + "B"}


def substitute(words: Sequence[dict[str, str]], letter: str) -> str:
    """Expand a letter of the innermost pair through successive step words."""
    w = letter
    for table in reversed(words):
        w = "".join(table[c] for c in w)
    return w


@dataclass
class RenormOrbit:
    """Z_0, ..., Z_N with the coordinate changes H_j and scalings λ_j between them."""
    pairs: list[Pair2D]
    changes: list[CoordinateChange]
    lambdas: list[float]
    heights: list[tuple[int, int]]

    @property
    def steps(self) -> int:
        return len(self.changes)

    @cached_property
    def jets(self) -> list[PairJet]:
        return [PairJet(z) for z in self.pairs]

    def words(self, j: int) -> dict[str, str]:
        return step_words(*self.heights[j])

    def L(self, j: int, p: np.ndarray) -> np.ndarray:
        """L_{Z_j} = H_j ∘ Λ_j."""
        lam = self.lambdas[j]
        return np.array(self.changes[j].apply(lam * p[0], lam * p[1]))

    def L_jac(self, j: int, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lam = self.lambdas[j]
        fwd = self.changes[j].forward
        u, v = lam * p[0], lam * p[1]
        jac = np.zeros((p.shape[1], 2, 2))
        jac[:, 0, 0] = lam * fc.evaluate2d(fc.partial_x(fwd), u, v)
        jac[:, 0, 1] = lam * fc.evaluate2d(fc.partial_y(fwd), u, v)
        jac[:, 1, 1] = lam
        return self.L(j, p), jac

    def L_composite(self, j0: int, n: int, p: np.ndarray) -> np.ndarray:
        """L_{j0} ∘ ... ∘ L_{j0+n−1}."""
        for j in range(j0 + n - 1, j0 - 1, -1):
            p = self.L(j, p)
        return p

    def L_composite_jac(self, j0: int, n: int, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        jac = np.broadcast_to(np.eye(2), (p.shape[1], 2, 2)).copy()
        for j in range(j0 + n - 1, j0 - 1, -1):
            p, d = self.L_jac(j, p)
            jac = d @ jac
        return p, jac

    def composite_words(self, j0: int, n: int) -> dict[str, str]:
        tables = [self.words(j) for j in range(j0, j0 + n)]
        return {c: substitute(tables, c) for c in "AB"}

    def conjugacy_residual(self, j: int, n: int = 1, points: int = 50) -> float:
        """sup |L∘Z_{j+n}^c − Z_j^{word(c)}∘L| over attractor samples of Z_{j+n}."""
        words = self.composite_words(j, n)
        pts = attractor_sample(self.pairs[j + n], points)
        out = 0.0
        for c in "AB":
            q = pts[:, pts[0] >= 0.0] if c == "A" else pts[:, pts[0] < 0.0]
            lhs = self.L_composite(j, n, self.jets[j + n].letter(c, q))
            rhs = self.jets[j].word(words[c], self.L_composite(j, n, q))
            out = max(out, float(np.max(np.abs(lhs - rhs))))
        return out


def renormalization_orbit(z: Pair2D, steps: int, ky: int | None = None) -> RenormOrbit:
    pairs = [z]
    changes, lambdas, heights = [], [], []
    for _ in range(steps):
        cur = pairs[-1]
        r0, r1 = p2.heights_2d(cur)
        nxt = p2.renormalize2d(cur, ky)
        changes.append(p2.coordinate_change_H(cur, r0))
        lambdas.append(float(nxt.meta["lambda"]))
        heights.append((r0, r1))
        pairs.append(nxt)
    return RenormOrbit(pairs, changes, lambdas, heights)


# ---------------------------------------------------------------------------
# microscope


PERIOD = 3


@dataclass(frozen=True)
class Branch:
    """ψ = Z^{prefix} ∘ L on Γ_{side_in} of the inner pair, landing on side_out."""
    side_in: str
    prefix: str
    side_out: str


@dataclass
class MicroscopeLevel:
    level: int
    period: int
    words: dict[str, str]
    branches: list[Branch]
    sup_norms: np.ndarray

    @property
    def count(self) -> int:
        return len(self.branches)

    def contracting(self, bound: float = CONTRACTION_BOUND) -> bool:
        return bool(np.all(self.sup_norms < bound))


def level_branches(words: dict[str, str]) -> list[Branch]:
    return [Branch(s, words[s][:j], words[s][j]) for s in "AB" for j in range(len(words[s]))]


def branch_maps(orbit: RenormOrbit, level: int, period: int = PERIOD,
                samples: int = SAMPLE_POINTS) -> MicroscopeLevel:
    """Branches of the microscope from Z_{level·period} to Z_{(level+1)·period}.

    sup ‖Dψ‖ (max-row-sum norm) is measured on attractor samples of the inner pair.
    """
    j0 = level * period
    if j0 + period > orbit.steps:
        raise ArgumentError(f"orbit has {orbit.steps} steps, level {level} needs {j0 + period}")
    words = orbit.composite_words(j0, period)
    sides = _split_sides(attractor_sample(orbit.pairs[j0 + period], samples))
    jet = orbit.jets[j0]
    branches = level_branches(words)
    norms = np.empty(len(branches))
    lifted = {s: orbit.L_composite_jac(j0, period, q) for s, q in sides.items()}
    for i, br in enumerate(branches):
        p, dl = lifted[br.side_in]
        _, dw = jet.word_jac(br.prefix, p)
        norms[i] = float(np.max(np.linalg.norm(dw @ dl, ord=np.inf, axis=(1, 2))))
    return MicroscopeLevel(level, period, words, branches, norms)


def apply_branch(orbit: RenormOrbit, level: int, br: Branch, p: np.ndarray,
                 period: int = PERIOD) -> np.ndarray:
    j0 = level * period
    return orbit.jets[j0].word(br.prefix, orbit.L_composite(j0, period, p))


def enumerate_cells(levels: Sequence[list[Branch]], side: str | None = None) -> np.ndarray:
    """Admissible branch-index strings, shape (cells, depth); outer level first."""
    cells = [(i,) for i, br in enumerate(levels[0]) if side is None or br.side_out == side]
    for l in range(1, len(levels)):
        nxt = []
        for c in cells:
            need = levels[l - 1][c[-1]].side_in
            nxt.extend(c + (i,) for i, br in enumerate(levels[l]) if br.side_out == need)
        cells = nxt
    return np.array(cells, dtype=int).reshape(len(cells), len(levels))


# ---------------------------------------------------------------------------
# the rigid rotation counterpart


@dataclass
class RigidOrbit:
    """Orbit of T_* = (x − ρ, x + 1) under the same step structure; affine L maps."""
    rhos: list[float]
    heights: list[tuple[int, int]]

    def lam(self, j: int) -> float:
        return 1.0 - self.heights[j][0] * self.rhos[j]

    def L(self, j: int, x: np.ndarray) -> np.ndarray:
        return self.lam(j) * x + self.heights[j][0] * self.rhos[j]

    def L_composite(self, j0: int, n: int, x: np.ndarray) -> np.ndarray:
        for j in range(j0 + n - 1, j0 - 1, -1):
            x = self.L(j, x)
        return x

    def word(self, j: int, w: str, x: np.ndarray) -> np.ndarray:
        na = w.count("A")
        return x - na * self.rhos[j] + (len(w) - na)

    def centers(self, j: int) -> dict[str, float]:
        return {"A": 0.5, "B": -0.5 * self.rhos[j]}

    def intervals(self, j: int) -> dict[str, tuple[float, float]]:
        return {"A": (0.0, 1.0), "B": (-self.rhos[j], 0.0)}

    def step(self, t: np.ndarray) -> np.ndarray:
        """T_* on [−ρ, 1]."""
        return np.where(t >= 0.0, t - self.rhos[0], t + 1.0)


def rigid_orbit(rho: float, heights: Sequence[tuple[int, int]]) -> RigidOrbit:
    rhos = [float(rho)]
    for r0, r1 in heights:
        r = rhos[-1]
        lam = 1.0 - r0 * r
        if lam <= 0.0:
            raise StructuralError("heights are inconsistent with the rotation number")
        rhos.append(r / lam - r1)
    if not all(0.0 < r < 1.0 for r in rhos[:-1]):
        raise StructuralError("heights are inconsistent with the rotation number")
    return RigidOrbit(rhos, list(heights))


def rotation_value(orbit: RenormOrbit) -> float:
    """ρ whose continued fraction reproduces the heights (1D heights r0, r1 per step), tail golden."""
    digits = [h for pair in orbit.heights for h in pair]
    x = (math.sqrt(5.0) - 1.0) / 2.0
    for d in reversed(digits):
        x = 1.0 / (d + x)
    return x


# ---------------------------------------------------------------------------
# attractor atlas


@dataclass
class AttractorAtlas:
    """Cells of level k: branch strings, sides, representative points and T_* anchors."""
    level: int
    period: int
    addresses: np.ndarray
    sides: np.ndarray
    points: np.ndarray
    diameters: np.ndarray
    t_anchor: np.ndarray
    t_lo: np.ndarray
    t_hi: np.ndarray
    increments: list[float] = field(default_factory=list)
    rho: float = float("nan")

    @property
    def count(self) -> int:
        return self.addresses.shape[0]

    @cached_property
    def _order(self) -> np.ndarray:
        return np.argsort(self.t_lo)

    def cell_of(self, t) -> np.ndarray:
        """Index of the T_* cell containing each t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        order = self._order
        k = np.searchsorted(self.t_lo[order], t, side="right") - 1
        return order[np.clip(k, 0, order.size - 1)]

    def phi(self, t) -> np.ndarray:
        """Piecewise-constant conjugacy sample φ_k(t), shape (2, n)."""
        return self.points[:, self.cell_of(t)]

    def address_keys(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in a) for a in self.addresses]


def _cell_images(orbit: RenormOrbit, rigid: RigidOrbit, levels: list[list[Branch]],
                 cells: np.ndarray, period: int):
    """Points, diameters and T_* images of the cells (centers and interval ends)."""
    k = cells.shape[1]
    inner = k * period
    inner_side = np.array([levels[-1][c[-1]].side_in for c in cells]) if k else np.array([])
    centers = side_centers(orbit.pairs[inner])
    ends = attractor_ends(orbit.pairs[inner])
    n = cells.shape[0]
    pts = np.empty((2, n))
    lo = np.empty((2, n))
    hi = np.empty((2, n))
    t_c = np.empty(n)
    t_lo = np.empty(n)
    t_hi = np.empty(n)
    tc = rigid.centers(inner)
    tint = rigid.intervals(inner)
    for s in "AB":
        m = inner_side == s
        pts[:, m] = centers[s]
        lo[:, m] = ends[s][:, :1]
        hi[:, m] = ends[s][:, 1:]
        t_c[m] = tc[s]
        t_lo[m], t_hi[m] = tint[s]
    for l in range(k - 1, -1, -1):
        for b, br in enumerate(levels[l]):
            m = cells[:, l] == b
            if not np.any(m):
                continue
            for arr in (pts, lo, hi):
                arr[:, m] = apply_branch(orbit, l, br, arr[:, m], period)
            j0 = l * period
            for arr in (t_c, t_lo, t_hi):
                arr[m] = rigid.word(j0, br.prefix, rigid.L_composite(j0, period, arr[m]))
    diam = np.hypot(*(hi - lo))
    a, b = np.minimum(t_lo, t_hi), np.maximum(t_lo, t_hi)
    return pts, diam, t_c, a, b


def attractor_points(orbit: RenormOrbit, k: int, period: int = PERIOD,
                     rho: float | None = None) -> AttractorAtlas:
    """One point per admissible level-k cell: the image of the inner domain center under Ψ."""
    if k < 1:
        raise ArgumentError("level must be at least 1")
    if k * period > orbit.steps:
        raise ArgumentError(f"level {k} needs {k * period} renormalization steps, orbit has {orbit.steps}")
    levels = [level_branches(orbit.composite_words(l * period, period)) for l in range(k)]
    rho = rotation_value(orbit) if rho is None else rho
    rigid = rigid_orbit(rho, orbit.heights)
    prev_pts = None
    prev_cells = None
    increments = []
    for depth in range(0, k + 1):
        if depth == 0:
            cent = side_centers(orbit.pairs[0])
            pts = np.hstack([cent["A"], cent["B"]])
            cells = np.zeros((2, 0), dtype=int)
            keys = {("A",): 0, ("B",): 1}
        else:
            cells = enumerate_cells(levels[:depth])
            pts, diam, t_c, t_lo, t_hi = _cell_images(orbit, rigid, levels[:depth], cells, period)
            parent_idx = []
            for c in cells:
                if depth == 1:
                    parent_idx.append(keys[(levels[0][c[0]].side_out,)])
                else:
                    parent_idx.append(keys[tuple(c[:-1])])
            increments.append(float(np.max(np.hypot(*(pts - prev_pts[:, parent_idx])))))
            keys = {tuple(c): i for i, c in enumerate(cells)}
        prev_pts, prev_cells = pts, cells
    sides = np.array([levels[0][c[0]].side_out for c in cells])
    return AttractorAtlas(k, period, cells, sides, pts, diam, t_c, t_lo, t_hi, increments, rho)


def conjugacy_residual(orbit: RenormOrbit, atlas: AttractorAtlas, n: int = 100,
                       seed: int = 0) -> tuple[float, float]:
    """(max |φ(T_* t) − Z(φ(t))|, max cell diameter) over n random t."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(-atlas.rho, 1.0, n)
    idx = atlas.cell_of(t)
    p = atlas.points[:, idx]
    jet = orbit.jets[0]
    zp = np.empty_like(p)
    for s in "AB":
        m = atlas.sides[idx] == s
        if np.any(m):
            zp[:, m] = jet.letter(s, p[:, m])
    t2 = np.where(t >= 0.0, t - atlas.rho, t + 1.0)
    q = atlas.phi(t2)
    return float(np.max(np.hypot(*(q - zp)))), float(np.max(atlas.diameters))


def composed_contraction(orbit: RenormOrbit, k: int, period: int = PERIOD) -> float:
    """max ‖DΨ‖ over level-k cells, evaluated at the cell centers."""
    levels = [level_branches(orbit.composite_words(l * period, period)) for l in range(k)]
    cells = enumerate_cells(levels)
    centers = side_centers(orbit.pairs[k * period])
    inner_side = np.array([levels[-1][c[-1]].side_in for c in cells])
    pts = np.empty((2, cells.shape[0]))
    for s in "AB":
        pts[:, inner_side == s] = centers[s]
    jac = np.broadcast_to(np.eye(2), (cells.shape[0], 2, 2)).copy()
    for l in range(k - 1, -1, -1):
        j0 = l * period
        for b, br in enumerate(levels[l]):
            m = cells[:, l] == b
            if not np.any(m):
                continue
            q, dl = orbit.L_composite_jac(j0, period, pts[:, m])
            q, dw = orbit.jets[j0].word_jac(br.prefix, q)
            pts[:, m] = q
            jac[m] = dw @ dl @ jac[m]
    return float(np.max(np.linalg.norm(jac, ord=np.inf, axis=(1, 2))))


# ---------------------------------------------------------------------------
# average Jacobian and Lyapunov exponents


@dataclass
class JacobianStats:
    b: float
    log_b: float
    log_b_cells: float
    samples: np.ndarray
    exponents: tuple[float, float] | None = None
    degenerate: bool = False


def _cell_log_jac(orbit: RenormOrbit, atlas: AttractorAtlas) -> np.ndarray:
    jet = orbit.jets[0]
    out = np.empty(atlas.count)
    try:
        for s in "AB":
            m = atlas.sides == s
            if np.any(m):
                with np.errstate(divide="ignore"):
                    out[m] = jet.log_jac(s, atlas.points[:, m])
    except DomainError as exc:
        raise PrecisionError(f"Jacobian evaluated outside the resolved region: {exc}") from exc
    return out


def rotation_samples(rho: float, m: int, t0: float = 0.0) -> np.ndarray:
    """T_*-orbit t_i = T_*^i(t0) on [−ρ, 1), a low-discrepancy sample of Lebesgue measure."""
    i = np.arange(m, dtype=float)
    return np.mod(t0 + rho - i * rho, 1.0 + rho) - rho


def average_jacobian(orbit: RenormOrbit, atlas: AttractorAtlas, m: int = 100_000,
                     t0: float = 0.0) -> JacobianStats:
    """b = exp((1+ρ)⁻¹ ∫ ln Jac Z dμ_Z), μ_Z = Leb∘φ_Z⁻¹.

    log_b is the Birkhoff average over m points of the T_*-orbit pushed
    through φ_Z; log_b_cells weights each cell by the length of its T_* interval.
    """
    lj = _cell_log_jac(orbit, atlas)
    if not np.all(np.isfinite(lj)):
        return JacobianStats(0.0, -math.inf, -math.inf, lj, degenerate=True)
    rho = atlas.rho
    weights = atlas.t_hi - atlas.t_lo
    log_cells = float(np.sum(weights * lj) / (1.0 + rho))
    samples = lj[atlas.cell_of(rotation_samples(rho, m, t0))]
    log_b = float(np.mean(samples))
    return JacobianStats(math.exp(log_b), log_b, log_cells, samples)


@dataclass
class LyapunovResult:
    chi0: float
    chi_minus: float
    mean_log_jac: float
    chi0_halfwidth: float
    m: int


def pair_orbit(z: Pair2D, m: int, burn_in: int = BURN_IN,
               start: tuple[float, float] = (0.5, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """(points (2, m), letters) of the piecewise orbit after burn-in."""
    pts = attractor_sample(z, m, burn_in, start)
    return pts, np.where(pts[0] >= 0.0, "A", "B")


def lyapunov_exponents(z: Pair2D, m: int = 100_000, batches: int = 20,
                       burn_in: int = BURN_IN) -> LyapunovResult:
    """Characteristic exponents per step of Z by QR (Gram–Schmidt) along an orbit on the attractor.

    chi0_halfwidth is a 95% batch-means half-width for the leading exponent.
    """
    pts, letters = pair_orbit(z, m, burn_in)
    jet = PairJet(z)
    jac = np.empty((m, 2, 2))
    try:
        for s in "AB":
            sel = letters == s
            if np.any(sel):
                jac[sel] = jet.letter_jac(s, pts[:, sel])[1]
    except DomainError as exc:
        raise DomainError(f"orbit escaped the domain: {exc}") from exc
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    q = np.eye(2)
    r0 = np.empty(m)
    r1 = np.empty(m)
    for i in range(m):
        v = jac[i] @ q
        a, c = v[0, 0], v[1, 0]
        n0 = math.hypot(a, c)
        e0 = (a / n0, c / n0)
        # second column orthogonalized against the first; its norm is |det|/n0
        b_, d_ = v[0, 1], v[1, 1]
        proj = e0[0] * b_ + e0[1] * d_
        w0, w1 = b_ - proj * e0[0], d_ - proj * e0[1]
        r0[i] = math.log(n0)
        r1[i] = math.log(abs(det[i])) - math.log(n0)
        q = np.array([[e0[0], -e0[1]], [e0[1], e0[0]]])
        if w0 * q[0, 1] + w1 * q[1, 1] < 0.0:
            q[:, 1] = -q[:, 1]
    chi0 = float(np.mean(r0))
    chi_minus = float(np.mean(r1))
    means = np.array([np.mean(c) for c in np.array_split(r0, batches)])
    half = float(1.96 * np.std(means, ddof=1) / math.sqrt(batches))
    return LyapunovResult(chi0, chi_minus, float(np.mean(np.log(np.abs(det)))), half, m)


@dataclass
class PrerenormJacobianReport:
    levels: np.ndarray
    word_lengths: np.ndarray
    ratios: np.ndarray
    distortions: np.ndarray
    ratio_slope: float
    distortion_slope: float
    passed: bool


ROUNDOFF = 1e-9


def _log_slope(levels: np.ndarray, values: np.ndarray) -> float:
    """Slope of ln values vs level over the entries above roundoff; −inf if none are."""
    keep = values > ROUNDOFF
    if np.count_nonzero(keep) < 2:
        return -math.inf
    return float(np.polyfit(levels[keep], np.log(values[keep]), 1)[0])


def prerenorm_jacobian_check(orbit: RenormOrbit, l: int, m: int, log_b: float) -> PrerenormJacobianReport:
    """ln Jac pA_j / (|ū_j| ln b) and the two-point distortion for levels m < j ≤ l.

    pA_j is the word of Z_0 conjugate to the A letter of Z_j; the two points are
    the extreme attractor points of Z_j on the A side, carried to Z_0 by L.
    """
    if not m < l <= orbit.steps:
        raise ArgumentError("need m < l ≤ orbit length")
    levels = np.arange(m + 1, l + 1)
    lengths, ratios, dist = [], [], []
    for j in levels:
        word = orbit.composite_words(0, int(j))["A"]
        ends = attractor_ends(orbit.pairs[j])["A"]
        lj = orbit.jets[0].word_log_jac(word, orbit.L_composite(0, int(j), ends))
        lengths.append(len(word))
        ratios.append(lj[0] / (len(word) * log_b))
        dist.append(abs(lj[0] - lj[1]))
    ratios = np.array(ratios)
    dist = np.array(dist)
    rs = _log_slope(levels.astype(float), np.abs(ratios - 1.0))
    ds = _log_slope(levels.astype(float), dist)
    return PrerenormJacobianReport(levels, np.array(lengths), ratios, dist, rs, ds, rs < 0.0 and ds < 0.0)


# ---------------------------------------------------------------------------
# scaling, linearizer and universality


@dataclass
class LinearizerResult:
    lambdas: np.ndarray
    lambda_products: np.ndarray
    sigmas: np.ndarray
    sigma_products: np.ndarray
    lprime_defect: np.ndarray
    v: AnalyticMap1D
    increments: list[float]
    core: fc.Interval
    functional_residual: float
    v_prime_min: float


def l_map(orbit: RenormOrbit, j0: int, n: int, u) -> np.ndarray:
    """l_{Z_{j0}, n}(u) = π1 L_{j0}∘…∘L_{j0+n−1}(u + 1, 0) − 1."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    p = np.vstack([u + 1.0, np.zeros_like(u)])
    return orbit.L_composite(j0, n, p)[0] - 1.0


def sigma_values(orbit: RenormOrbit) -> np.ndarray:
    """σ_{Z_j} = l′_{Z_j}(0), the non-λ eigenvalue of D(H∘Λ) at (1, 0)."""
    out = []
    for j in range(orbit.steps):
        lam = orbit.lambdas[j]
        out.append(lam * float(fc.evaluate2d(fc.partial_x(orbit.changes[j].forward), lam, 0.0)))
    return np.array(out)


def core_interval(z: Pair2D, shrink: float = 0.02) -> fc.Interval:
    """[η(0) − 1, 0] in the coordinates centered at (1, 0); the left end is pulled in.

    The right end is kept: it holds the attracting fixed point of l.
    """
    eta0 = z.project().eta0
    w = 1.0 - eta0
    return fc.Interval(eta0 - 1.0 + shrink * w, 0.0)


LINEARIZER_TOL = 1e-5
LINEARIZER_MAX = 40


def l_fixed_point(orbit: RenormOrbit, n: int = 1, iterations: int = 200) -> float:
    u = np.array([0.0])
    for _ in range(iterations):
        u = l_map(orbit, 0, n, u)
    return float(u[0])


def l_derivative(orbit: RenormOrbit, n: int, u: float) -> float:
    p = np.array([[u + 1.0], [0.0]])
    _, jac = orbit.L_composite_jac(0, n, p)
    return float(jac[0, 0, 0])


def scaling_and_linearizer(orbit: RenormOrbit, n: int = 1, m: int | None = None,
                           fixed_point: bool = False, grid: int = 81,
                           tol: float = LINEARIZER_TOL) -> LinearizerResult:
    """λ and σ products over periods of n steps and the linearizer v.

    Orbit variant: v_m = l_{Z,n}∘l_{RZ,n}∘…∘l_{R^m Z,n} / ∏σ, for m up to the
    orbit length.  Fixed-point variant: v_m = (l^{∘m} − u_*)/σ_*^m with u_* the
    attracting fixed point of l = l_{Z_*,n} and σ_* = l′(u_*).  The sequence
    stops at its first increasing increment (roundoff or divergence) and the
    best iterate is kept; the best increment must fall below tol.
    """
    periods = orbit.steps // n
    if periods < 1:
        raise ArgumentError("orbit shorter than one period")
    lam = np.array(orbit.lambdas)
    sig = sigma_values(orbit)
    lam_n = np.array([np.prod(lam[i * n:(i + 1) * n]) for i in range(periods)])
    sig_n = np.array([np.prod(sig[i * n:(i + 1) * n]) for i in range(periods)])
    defect = np.abs(sig_n - lam_n ** 3)
    core = core_interval(orbit.pairs[0])
    u = core.grid(grid)
    if fixed_point:
        u_star = l_fixed_point(orbit, n)
        s_star = l_derivative(orbit, n, u_star)
        m_max = LINEARIZER_MAX if m is None else m

        def approx(x, k):
            y = np.asarray(x, dtype=float)
            for _ in range(k):
                y = l_map(orbit, 0, n, y)
            return (y - u_star) / s_star ** k
    else:
        m_max = periods - 1 if m is None else min(m, periods - 1)
        prods = np.cumprod(sig_n)

        def approx(x, k):
            return l_map_chain(orbit, n, k, np.asarray(x, dtype=float)) / prods[k]
    start = 1 if fixed_point else 0
    prev = approx(u, start)
    increments = []
    best = start
    for k in range(start + 1, m_max + 1):
        cur = approx(u, k)
        increments.append(float(np.max(np.abs(cur - prev))))
        prev = cur
        if len(increments) >= 2 and increments[-1] > increments[-2]:
            break
        best = k
    if not increments or min(increments) > tol:
        raise ConvergenceError("linearizer increments do not decrease below tolerance", history=increments)
    v = fc.fit(lambda x: approx(x, best), core)
    if fixed_point:
        lv = l_map(orbit, 0, n, u)
        resid = float(np.max(np.abs(s_star * fc.evaluate(v, u) - fc.evaluate(v, lv))))
    else:
        resid = math.nan
    vp = fc.evaluate(fc.derivative(v, 1), core.grid(401))
    return LinearizerResult(lam, lam_n, sig, sig_n, defect, v, increments, core, resid, float(np.min(vp)))


def l_map_chain(orbit: RenormOrbit, n: int, m: int, u) -> np.ndarray:
    """l_{Z,n}∘l_{R^n Z,n}∘…∘l_{R^{mn} Z,n}(u): one L composite over (m+1)·n steps."""
    return l_map(orbit, 0, (m + 1) * n, u)


@dataclass
class UniversalityReport:
    levels: np.ndarray
    word_lengths: np.ndarray
    log_norms: np.ndarray
    log_b_slope: float
    intercept: float
    probe: np.ndarray
    x_ref: float
    profiles: np.ndarray
    direct_log_norms: np.ndarray
    f_ratio: np.ndarray | None = None
    profile_vs_f: float = math.nan
    f_min: float = math.nan
    f_max: float = math.nan


def log_jac_b(orbit: RenormOrbit, k: int, x: np.ndarray) -> np.ndarray:
    """ln |∂_y π1 B_k(x, 0)| by the chain rule through Z_0 (no underflow).

    Jac B_k(p) = Jac pB_k(Φ(p))·Jac Φ(p)/Jac Φ(B_k(p)) with Φ = L_0∘…∘L_{k−1}.
    """
    p = np.vstack([x, np.zeros_like(x)])
    q, dphi = orbit.L_composite_jac(0, k, p)
    word = orbit.composite_words(0, k)["B"]
    lw = orbit.jets[0].word_log_jac(word, q)
    bp = orbit.jets[k].letter("B", p)
    _, dphi_b = orbit.L_composite_jac(0, k, bp)
    ldet = lambda d: np.log(np.abs(d[:, 0, 0] * d[:, 1, 1] - d[:, 0, 1] * d[:, 1, 0]))
    return lw + ldet(dphi) - ldet(dphi_b)


def probe_grid(z: Pair2D, n: int = 41) -> np.ndarray:
    eta0 = z.project().eta0
    return np.linspace(0.95 * eta0, 0.05 * eta0, n)


def f_profile(lin: LinearizerResult, xi_star: AnalyticMap1D, x: np.ndarray) -> np.ndarray:
    """f(x) = v′(x − 1)/v′(ξ_*(x) − 1)."""
    dv = fc.derivative(lin.v, 1)
    return fc.evaluate(dv, x - 1.0) / fc.evaluate(dv, fc.evaluate(xi_star, x) - 1.0)


def universality_fit(orbit: RenormOrbit, k_range: Sequence[int], probe_n: int = 41,
                     linearizer: LinearizerResult | None = None,
                     xi_star: AnalyticMap1D | None = None,
                     probe: np.ndarray | None = None) -> UniversalityReport:
    """Fit ln‖∂_y π1 B_k‖ against |v̄_k| and extract the normalized profile.

    All Jacobian quantities are carried as logarithms.  With a fixed-point
    linearizer the deepest profile is compared with f(x)/f(x_ref).  Reports to
    be compared with profile_distance must share the probe grid.
    """
    ks = np.array(list(k_range), dtype=int)
    if ks.size < 2 or ks.max() > orbit.steps:
        raise ArgumentError("k_range needs at least two levels within the orbit")
    probe = probe_grid(orbit.pairs[0], probe_n) if probe is None else np.asarray(probe, dtype=float)
    ref = probe.size // 2
    logs, lengths, profiles, direct = [], [], [], []
    for k in ks:
        lj = log_jac_b(orbit, int(k), probe)
        logs.append(float(np.max(lj)))
        profiles.append(np.exp(lj - lj[ref]))
        lengths.append(len(orbit.composite_words(0, int(k))["B"]))
        by = fc.evaluate2d(fc.partial_y(orbit.pairs[k].b), probe, 0.0)
        with np.errstate(divide="ignore"):
            direct.append(float(np.max(np.log(np.abs(by)))))
    lengths = np.array(lengths, dtype=float)
    slope, icept = np.polyfit(lengths, np.array(logs), 1)
    rep = UniversalityReport(ks, lengths, np.array(logs), float(slope), float(icept), probe,
                             float(probe[ref]), np.array(profiles), np.array(direct))
    if linearizer is not None and xi_star is not None:
        f = f_profile(linearizer, xi_star, probe)
        rep.f_ratio = f / f[ref]
        rep.profile_vs_f = float(np.max(np.abs(rep.profiles[-1] / rep.f_ratio - 1.0)))
        rep.f_min, rep.f_max = float(np.min(f)), float(np.max(f))
    return rep


def profile_distance(r1: UniversalityReport, r2: UniversalityReport) -> float:
    """sup |p1/p2 − 1| between the deepest normalized profiles."""
    if r1.probe.shape != r2.probe.shape or np.any(r1.probe != r2.probe):
        raise ArgumentError("profiles were sampled on different probe grids")
    return float(np.max(np.abs(r1.profiles[-1] / r2.profiles[-1] - 1.0)))


# ---------------------------------------------------------------------------
# rigidity


@dataclass
class HolderReport:
    kappa: float
    slopes: list[float]
    window_centers: list[float]
    scales: int
    pairs: int


def holder_estimate(atlas: AttractorAtlas, atlas_tilde: AttractorAtlas, n_pairs: int = 200_000,
                    bin_width: float = math.log(2.0), window: int = 3, floor_factor: float = 4.0,
                    seed: int = 0) -> HolderReport:
    """Upper-envelope Hölder exponent of the address-matching map Σ_Z̃ → Σ_Z.

    Distances d (on Σ_Z) and d̃ (on Σ_Z̃) between address-matched points are
    binned by ln d̃; only pairs separated by floor_factor times the largest cell
    diameter count as resolved.  κ is the smallest regression slope of ln d on
    ln d̃ over windows of consecutive bins.
    """
    keys = {k: i for i, k in enumerate(atlas_tilde.address_keys())}
    idx = np.array([keys.get(k, -1) for k in atlas.address_keys()])
    if np.any(idx < 0):
        raise StructuralError("atlases do not share their addresses")
    p = atlas.points
    pt = atlas_tilde.points[:, idx]
    rng = np.random.default_rng(seed)
    i = rng.integers(0, p.shape[1], n_pairs)
    j = rng.integers(0, p.shape[1], n_pairs)
    d = np.hypot(*(p[:, i] - p[:, j]))
    dt = np.hypot(*(pt[:, i] - pt[:, j]))
    ok = (d > floor_factor * atlas.diameters.max()) & (dt > floor_factor * atlas_tilde.diameters.max())
    ld, ldt = np.log(d[ok]), np.log(dt[ok])
    if ldt.size == 0:
        raise PrecisionError("no resolved pairs")
    edges = np.arange(ldt.min(), ldt.max() + bin_width, bin_width)
    which = np.digitize(ldt, edges) - 1
    filled = [b for b in range(edges.size) if np.count_nonzero(which == b) >= 10]
    if len(filled) < 4:
        raise PrecisionError(f"only {len(filled)} resolved scales; need at least 4")
    slopes, centers = [], []
    for s in range(len(filled) - window + 1):
        sel = np.isin(which, filled[s:s + window])
        slopes.append(float(np.polyfit(ldt[sel], ld[sel], 1)[0]))
        centers.append(float(np.mean(ldt[sel])))
    return HolderReport(float(min(slopes)), slopes, centers, len(filled), int(ok.sum()))


def holder_bound(b: float, b_tilde: float) -> float:
    """1/3 + (2/3)·ln b/ln b̃ for 0 < b̃ < b < 1."""
    if not (0.0 < b_tilde < b < 1.0):
        raise ArgumentError("need 0 < b_tilde < b < 1")
    return 1.0 / 3.0 + 2.0 / 3.0 * math.log(b) / math.log(b_tilde)
