"""Random orbits on T^2: Weyl-sum equidistribution, finite-orbit detection, two-step smoothing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .measures import AtomicMeasure, midpoint_nodes, sample_indices
from .torus import TorusPoint, Word, apply

FROZEN_COORD_TOL = 1e-12


class BadMeasure(ValueError):
    pass


@dataclass(frozen=True)
class OrbitTrace:
    """``points[0]`` is the start; ``points[j + 1]`` is the image of ``points[j]`` under draw j."""

    x0: TorusPoint
    seed: int
    points: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def to_csv(self) -> str:
        rows = ["j,x,y"] + [f"{j},{x!r},{y!r}" for j, (x, y) in enumerate(self.points.tolist())]
        return "\n".join(rows) + "\n"


def run_orbit(measure: AtomicMeasure, x0, n: int, seed: int) -> OrbitTrace:
    """n points of the walk started at x0 (n - 1 random steps)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = TorusPoint(*x0)
    choices = sample_indices(measure, n - 1, seed)
    pts = K.orbit(*measure.program(), choices, x0.x, x0.y)
    return OrbitTrace(x0, int(seed), pts)


# ---------------------------------------------------------------------------
# Weyl sums
# ---------------------------------------------------------------------------

def weyl_threshold(n: int) -> float:
    return 5.0 / math.sqrt(n)


@dataclass(frozen=True)
class EquidistributionReport:
    n: int
    F: int
    max_weyl: float
    max_weyl_raw: float
    argmax: tuple[int, int]
    flagged: tuple[str, ...]
    threshold: float

    @property
    def verdict(self) -> str:
        return "Equidistributing" if self.max_weyl <= self.threshold else "Suspicious"

    @property
    def equidistributing(self) -> bool:
        return self.verdict == "Equidistributing"

    def to_dict(self) -> dict:
        return {"n": self.n, "F": self.F, "max_weyl": self.max_weyl, "max_weyl_raw": self.max_weyl_raw,
                "argmax": list(self.argmax), "flagged": list(self.flagged), "threshold": self.threshold,
                "verdict": self.verdict}


def _frozen(coord: np.ndarray) -> bool:
    d = np.abs(coord - coord[0]) % 1.0
    return bool(np.all(np.minimum(d, 1.0 - d) <= FROZEN_COORD_TOL))


def _block_fsum(v: np.ndarray, block: int = 1024) -> float:
    """Pairwise sums over fixed-size blocks, then an exactly rounded sum of the partials."""
    pad = (-v.size) % block
    if pad:
        v = np.concatenate([v, np.zeros(pad)])
    return math.fsum(v.reshape(-1, block).sum(axis=1))


def weyl_sums(points: np.ndarray, F: int) -> dict[tuple[int, int], float]:
    """|(1/n) sum_j exp(2 pi i (m x_j + k y_j))| for every nonzero (m, k) with |m|, |k| <= F.

    Summation order is fixed by the data alone (blocked, compensated), so the
    result does not depend on how work was scheduled.
    """
    n = points.shape[0]
    ms = np.arange(0, F + 1)
    ks = np.arange(-F, F + 1)
    ex = np.exp(2j * math.pi * np.outer(ms, points[:, 0]))
    ey = np.exp(2j * math.pi * np.outer(ks, points[:, 1]))
    out = {}
    for m in ms:
        for ki, k in enumerate(ks):
            if m == 0 and k <= 0:
                continue
            z = ex[m] * ey[ki]
            s = math.hypot(_block_fsum(z.real), _block_fsum(z.imag)) / n
            out[(int(m), int(k))] = out[(-int(m), -int(k))] = min(s, 1.0)
    return out


def weyl_report(trace: OrbitTrace | np.ndarray, F: int = 5) -> EquidistributionReport:
    """Largest Weyl average over the (2F + 1)^2 - 1 nonzero frequencies.

    If exactly one coordinate never moves along the trace, the frequencies that
    only see that coordinate cannot decay; they are listed in ``flagged`` and left
    out of ``max_weyl`` (``max_weyl_raw`` keeps them).
    """
    if F < 1:
        raise ValueError("F must be >= 1")
    pts = trace.points if isinstance(trace, OrbitTrace) else np.asarray(trace)
    sums = weyl_sums(pts, F)
    fx, fy = _frozen(pts[:, 0]), _frozen(pts[:, 1])
    skip = set()
    if fx != fy:
        skip = {mk for mk in sums if (mk[0] == 0 if fy else mk[1] == 0)}
    kept = {mk: v for mk, v in sums.items() if mk not in skip}
    argmax = max(sorted(kept), key=lambda mk: kept[mk])
    flagged = tuple(f"({m},{k})" for m, k in sorted(skip))
    n = pts.shape[0]
    return EquidistributionReport(n, F, kept[argmax], max(sums.values()), argmax, flagged, weyl_threshold(n))


# ---------------------------------------------------------------------------
# finite orbits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteOrbitResult:
    finite: bool
    size: int
    distinct_first_half: int

    @property
    def verdict(self) -> str:
        return f"FiniteCandidate({self.size})" if self.finite else "Infinite"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "finite": self.finite, "distinct": self.size,
                "distinct_first_half": self.distinct_first_half}


def finite_orbit_detect(trace: OrbitTrace | np.ndarray, tol: float = 1e-9) -> FiniteOrbitResult:
    """Count distinct points (wrap-aware, within ``tol``) and check the count stopped growing.

    A point is new unless some earlier point lies within ``tol`` in both
    coordinates; lookups go through a hash grid of cell size ``tol``.
    """
    pts = trace.points if isinstance(trace, OrbitTrace) else np.asarray(trace)
    n = pts.shape[0]
    if n < 10:
        raise ValueError("need at least 10 points")
    cells = int(round(1.0 / tol))
    keys = np.floor(pts / tol).astype(np.int64) % cells
    seen: dict[tuple[int, int], list[tuple[float, float]]] = {}
    distinct, half_count = 0, 0
    half = n // 2
    for j in range(n):
        if j == half:
            half_count = distinct
        kx, ky = int(keys[j, 0]), int(keys[j, 1])
        x, y = pts[j]
        hit = False
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for qx, qy in seen.get(((kx + dx) % cells, (ky + dy) % cells), ()):
                    ddx = abs(x - qx) % 1.0
                    ddy = abs(y - qy) % 1.0
                    if min(ddx, 1.0 - ddx) <= tol and min(ddy, 1.0 - ddy) <= tol:
                        hit = True
                        break
                if hit:
                    break
            if hit:
                break
        if not hit:
            seen.setdefault((kx, ky), []).append((x, y))
            distinct += 1
    return FiniteOrbitResult(distinct == half_count, distinct, half_count)


# ---------------------------------------------------------------------------
# two-step smoothing
# ---------------------------------------------------------------------------

@dataclass
class SmoothingReport:
    min_cell_density: float
    square: tuple[float, float, float, float]
    occupied_cells: int
    translation_cells: int
    translation_mass: float
    expected_translation_mass: float
    n_quad: int
    grid: int
    histogram: np.ndarray = field(repr=False)

    @property
    def passes(self) -> bool:
        """Translation pairs carry their share of the mass and spread over >= n_quad^2 cells."""
        return (self.translation_cells >= self.n_quad ** 2
                and self.translation_mass >= self.expected_translation_mass * (1.0 - 0.1))

    def to_dict(self) -> dict:
        return {"min_cell_density": self.min_cell_density, "square": list(self.square),
                "occupied_cells": self.occupied_cells, "translation_cells": self.translation_cells,
                "translation_mass": self.translation_mass,
                "expected_translation_mass": self.expected_translation_mass,
                "n_quad": self.n_quad, "grid": self.grid, "passes": self.passes}


def _cell(p, g: int) -> tuple[int, int]:
    return min(int(p[0] * g), g - 1), min(int(p[1] * g), g - 1)


def translation_pair_cells(f0, eps: float, n_quad: int, v, g: int) -> set[tuple[int, int]]:
    """Cells hit by the two-step branches that combine one G1 and one G2 node (either order)."""
    f0 = Word.parse(f0) if isinstance(f0, str) else f0
    nodes = midpoint_nodes(eps, n_quad)
    cells = set()
    for t in nodes:
        for s in nodes:
            for first, second in ((("G1", t), ("G2", s)), (("G2", s), ("G1", t))):
                w = Word.parse(f"{f0};{first[0]}({float(first[1])!r});{f0};{second[0]}({float(second[1])!r})")
                cells.add(_cell(apply(w, v), g))
    return cells


def smoothing_check(measure: AtomicMeasure, v=(0.3, 0.7), samples: int = 100_000, g: int = 64,
                    seed: int = 0) -> SmoothingReport:
    """Histogram of two-step images of ``v`` under a diffusion measure.

    The continuous diffusion spreads a fixed share of the two-step mass
    uniformly over a square of side 2 eps around f0(f0(v)); for the
    discretized measure the check is that the translation-pair branches carry
    their share (2 p1 p2) and land in at least n_quad^2 distinct cells.
    """
    meta = measure.meta
    if meta.get("preset") != "diffusion":
        raise BadMeasure("smoothing_check needs a measure built by make_diffusion")
    p = meta["p"]
    if p[1] == 0 or p[2] == 0:
        raise BadMeasure("translation families G1 and G2 must both have positive weight")
    v = TorusPoint(*v)
    f0 = Word.parse(meta["f0"])
    eps, n_quad = meta["eps"], meta["n_quad"]

    choices = sample_indices(measure, 2 * samples, seed).reshape(samples, 2)
    ends = K.endpoints(*measure.program(), choices, v.x, v.y)
    hist = np.zeros((g, g), dtype=np.int64)
    ix = np.minimum((ends[:, 0] * g).astype(int), g - 1)
    iy = np.minimum((ends[:, 1] * g).astype(int), g - 1)
    np.add.at(hist, (ix, iy), 1)

    # atom index ranges of the G1 and G2 families (f0 atom first when p0 > 0)
    offset = 1 if p[0] > 0 else 0
    fam = {}
    for i in range(1, 5):
        if p[i] > 0:
            fam[i] = (offset, offset + n_quad)
            offset += n_quad
    in_fam = lambda idx, i: (idx >= fam[i][0]) & (idx < fam[i][1])  # noqa: E731
    trans = ((in_fam(choices[:, 0], 1) & in_fam(choices[:, 1], 2))
             | (in_fam(choices[:, 0], 2) & in_fam(choices[:, 1], 1)))

    centre = apply(f0.then(f0), v)
    square = (centre.x - eps, centre.x + eps, centre.y - eps, centre.y + eps)
    cells_in = []
    for i in range(g):
        for j in range(g):
            cx, cy = (i + 0.5) / g, (j + 0.5) / g
            ddx = (cx - centre.x + 0.5) % 1.0 - 0.5
            ddy = (cy - centre.y + 0.5) % 1.0 - 0.5
            if abs(ddx) <= eps and abs(ddy) <= eps:
                cells_in.append(hist[i, j])
    density = (np.array(cells_in, dtype=float) * g * g / samples) if cells_in else np.zeros(1)

    return SmoothingReport(
        min_cell_density=float(density.min()),
        square=square,
        occupied_cells=int(np.count_nonzero(hist)),
        translation_cells=len(translation_pair_cells(f0, eps, n_quad, v, g)),
        translation_mass=float(trans.mean()),
        expected_translation_mass=2.0 * p[1] * p[2],
        n_quad=n_quad,
        grid=g,
        histogram=hist,
    )
