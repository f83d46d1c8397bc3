"""Lyapunov exponents, stable directions and invariant-structure defects of the random walk."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from . import _kernels as K
from .measures import AtomicMeasure, rng_for, sample_indices
from .seeding import derive_seed
from .torus import TorusPoint, cocycle_arrays, projective_distance

ZERO_DEFECT = 1e-10
MIN_GAP_RATIO = 1.0 + 1e-9


class DegenerateGap(ArithmeticError):
    """The word product is (numerically) conformal, so no stable direction is defined."""


# ---------------------------------------------------------------------------
# Lyapunov exponent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovEstimate:
    lambda1: float
    ci_halfwidth: float
    n_steps: int
    n_batches: int

    @property
    def lambda2(self) -> float:
        return -self.lambda1

    @property
    def interval(self) -> tuple[float, float]:
        return self.lambda1 - self.ci_halfwidth, self.lambda1 + self.ci_halfwidth

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "ci_halfwidth": self.ci_halfwidth,
                "n_steps": self.n_steps, "n_batches": self.n_batches}


def batch_means_ci(logs: np.ndarray, n_batches: int, level: float = 0.95) -> float:
    """Half-width of the Student-t confidence interval from equal-length batch means."""
    size = logs.size // n_batches
    means = logs[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    sd = float(np.std(means, ddof=1))
    return float(stats.t.ppf(0.5 + level / 2, n_batches - 1)) * sd / math.sqrt(n_batches)


def top_lyapunov(measure: AtomicMeasure, x0=(0.1234, 0.5678), theta0: float = 0.3, n_steps: int = 100_000,
                 n_batches: int = 20, rng_seed: int = 0) -> LyapunovEstimate:
    """Average log growth of a renormalized tangent vector along one random orbit."""
    if not (n_steps >= n_batches >= 2):
        raise ValueError("need n_steps >= n_batches >= 2")
    x0 = TorusPoint(*x0)
    choices = sample_indices(measure, n_steps, rng_seed)
    logs = K.tangent_walk(*measure.program(), choices, x0.x, x0.y, math.cos(theta0), math.sin(theta0))
    return LyapunovEstimate(float(math.fsum(logs) / n_steps), batch_means_ci(logs, n_batches), n_steps, n_batches)


# ---------------------------------------------------------------------------
# stable directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionSample:
    base: TorusPoint
    omega_seed: int
    n: int
    direction: float
    gap: float

    def to_dict(self) -> dict:
        return {"x": self.base.x, "y": self.base.y, "omega_seed": self.omega_seed, "n": self.n,
                "direction": self.direction, "gap": self.gap}


def _singular_data(m: np.ndarray, log_scale: float) -> tuple[float, float]:
    _, s, vt = np.linalg.svd(m)
    if s[1] > 0 and log_scale == 0.0:
        gap = math.log(s[0] / s[1])
    else:
        # det = 1, so log(s1 / s2) = 2 log s1 of the unscaled product
        gap = 2.0 * (math.log(s[0]) + log_scale)
    direction = math.atan2(vt[1, 1], vt[1, 0]) % math.pi
    return (0.0 if direction >= math.pi else direction), gap


def stable_direction(measure: AtomicMeasure, x0, n: int, omega_seed: int) -> DirectionSample:
    """Most contracted direction of D_{x0} f_omega^n (right singular vector of the smaller value)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = TorusPoint(*x0)
    choices = sample_indices(measure, n, omega_seed)
    m, log_scale = K.product_along(*measure.program(), choices, x0.x, x0.y)
    direction, gap = _singular_data(m, log_scale)
    if gap < math.log(MIN_GAP_RATIO):
        raise DegenerateGap(f"singular value ratio {math.exp(gap)!r} too close to 1")
    return DirectionSample(x0, int(omega_seed), int(n), direction, gap)


@dataclass(frozen=True)
class NonRandomReport:
    verdict: str
    dispersion: float
    n: int
    tolerance: float
    samples: tuple[DirectionSample, ...] = field(repr=False)

    @property
    def nonrandom(self) -> bool:
        return self.verdict == "NonRandomCandidate"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "dispersion": self.dispersion, "n": self.n,
                "tolerance": self.tolerance, "n_omegas": len(self.samples),
                "min_gap": min(s.gap for s in self.samples)}


def nonrandom_stable_test(measure: AtomicMeasure, x0, n: int, n_omegas: int = 20, tolerance_angle: float = 1e-3,
                          rng_seed: int = 0) -> NonRandomReport:
    """Compare stable directions at one point across independent noise realizations.

    ``NonRandomCandidate`` only says the sampled directions agree to within the
    tolerance; it is never a proof that the stable bundle is non-random.
    """
    if n_omegas < 2:
        raise ValueError("n_omegas must be >= 2")
    samples = tuple(stable_direction(measure, x0, n, derive_seed(rng_seed, i)) for i in range(n_omegas))
    dirs = np.array([s.direction for s in samples])
    dispersion = float(projective_distance(dirs[:, None], dirs[None, :]).max())
    verdict = "NonRandomCandidate" if dispersion <= tolerance_angle else "Random"
    return NonRandomReport(verdict, dispersion, n, tolerance_angle, samples)


# ---------------------------------------------------------------------------
# invariant line fields and conformal structures
# ---------------------------------------------------------------------------

def frequencies(degree: int) -> list[tuple[int, int]]:
    """Half-plane frequency representatives with max(|m|, |k|) <= degree, lower shells first.

    The ordering is nested, so the basis of degree D is a prefix of the basis of D + 1.
    """
    out = []
    for shell in range(1, degree + 1):
        for m, k in itertools.product(range(-shell, shell + 1), repeat=2):
            if max(abs(m), abs(k)) == shell and (m > 0 or (m == 0 and k > 0)):
                out.append((m, k))
    return out


def basis_size(degree: int) -> int:
    return (2 * degree + 1) ** 2


def trig_basis(x: np.ndarray, y: np.ndarray, degree: int) -> np.ndarray:
    """Columns 1, cos(2 pi (m x + k y)), sin(2 pi (m x + k y)) ... ; shape (len(x), (2D+1)^2)."""
    cols = [np.ones_like(x)]
    for m, k in frequencies(degree):
        arg = 2.0 * math.pi * (m * x + k * y)
        cols.append(np.cos(arg))
        cols.append(np.sin(arg))
    return np.stack(cols, axis=-1)


def embed_coefficients(coeffs, kind: str, degree_from: int, degree_to: int) -> np.ndarray:
    """Zero-pad a minimizer from a lower degree into the basis of a higher one."""
    coeffs = np.asarray(coeffs, dtype=float)
    nf, nt = basis_size(degree_from), basis_size(degree_to)
    parts = 1 if kind == "line_field" else 2
    out = np.zeros(parts * nt)
    for i in range(parts):
        out[i * nt: i * nt + nf] = coeffs[i * nf:(i + 1) * nf]
    return out


class _DefectProblem:
    """Precomputed bases and Jacobians for the defect of one (measure, kind, degree, points)."""

    def __init__(self, measure: AtomicMeasure, kind: str, degree: int, points: np.ndarray):
        if kind not in ("line_field", "conformal"):
            raise ValueError(f"unknown structure kind {kind!r}")
        self.kind = kind
        self.degree = degree
        self.weights = measure.weight_array
        x, y = points[:, 0], points[:, 1]
        self.basis = trig_basis(x, y, degree)
        images, jacs = [], []
        for word in measure.words:
            fx, fy, a, b, c, d = cocycle_arrays(word, x, y)
            images.append(trig_basis(fx, fy, degree))
            jacs.append(np.stack([a, b, c, d]))
        self.image_basis = np.stack(images)      # (k, m, nb)
        self.jacs = np.stack(jacs)               # (k, 4, m)
        self.n_points = points.shape[0]
        self.nb = self.basis.shape[1]

    @property
    def n_params(self) -> int:
        return self.nb if self.kind == "line_field" else 2 * self.nb

    def __call__(self, coeffs: np.ndarray) -> float:
        if self.kind == "line_field":
            return self._line(coeffs)
        return self._conformal(coeffs)

    def _line(self, coeffs):
        phi = self.basis @ coeffs                     # (m,)
        target = self.image_basis @ coeffs            # (k, m)
        a, b, c, d = self.jacs[:, 0], self.jacs[:, 1], self.jacs[:, 2], self.jacs[:, 3]
        cp, sp = np.cos(phi), np.sin(phi)
        pushed = np.arctan2(c * cp + d * sp, a * cp + b * sp)
        dist = projective_distance(pushed, target)
        return float(self.weights @ (dist * dist).sum(axis=1)) / self.n_points

    @staticmethod
    def _gram(u, logv):
        # tau = u + i v  <->  (1/v) [[1, u], [u, u^2 + v^2]], the det-1 Gram matrix
        v = np.exp(logv)
        return 1.0 / v, u / v, (u * u + v * v) / v

    def _conformal(self, coeffs):
        nb = self.nb
        p0, q0, r0 = self._gram(self.basis @ coeffs[:nb], self.basis @ coeffs[nb:])
        p1, q1, r1 = self._gram(self.image_basis @ coeffs[:nb], self.image_basis @ coeffs[nb:])
        a, b, c, d = self.jacs[:, 0], self.jacs[:, 1], self.jacs[:, 2], self.jacs[:, 3]
        # pull the structure at f(x) back to x: M^T G M
        pp = a * (p1 * a + q1 * c) + c * (q1 * a + r1 * c)
        pq = a * (p1 * b + q1 * d) + c * (q1 * b + r1 * d)
        pr = b * (p1 * b + q1 * d) + d * (q1 * b + r1 * d)
        # cosh(hyperbolic distance) = tr(G0^-1 G1) / 2 for det-1 Gram matrices
        ch = 0.5 * (r0 * pp - 2.0 * q0 * pq + p0 * pr)
        dist = np.arccosh(np.maximum(ch, 1.0))
        return float(self.weights @ (dist * dist).sum(axis=1)) / self.n_points


def draw_test_points(m: int, rng_seed: int) -> np.ndarray:
    return rng_for(rng_seed).random((m, 2))


def evaluate_defect(measure: AtomicMeasure, kind: str, coeffs, degree: int, points: np.ndarray) -> float:
    """Defect of one candidate structure given by its trigonometric coefficients."""
    return _DefectProblem(measure, kind, degree, np.asarray(points, dtype=float))(np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class DefectReport:
    structure_kind: str
    family_degree: int
    defect: float
    minimizer: np.ndarray = field(repr=False)
    n_points: int = 0
    n_starts: int = 0

    @property
    def is_zero(self) -> bool:
        return self.defect < ZERO_DEFECT

    def to_dict(self) -> dict:
        return {"structure_kind": self.structure_kind, "family_degree": self.family_degree,
                "defect": self.defect, "is_zero": self.is_zero, "n_points": self.n_points,
                "n_starts": self.n_starts, "minimizer": [float(c) for c in self.minimizer]}


def _start_vectors(problem: _DefectProblem, n_starts: int, rng: np.random.Generator, warm_start):
    starts = [np.zeros(problem.n_params) if warm_start is None else np.asarray(warm_start, dtype=float)]
    nb = problem.nb
    for _ in range(n_starts - 1):
        v = rng.normal(scale=0.3, size=problem.n_params)
        if problem.kind == "line_field":
            v[0] = rng.uniform(0.0, math.pi)
        else:
            v[0] = rng.normal(scale=1.0)
            v[nb] = rng.normal(scale=1.0)
        starts.append(v)
    return starts


def invariant_structure_defect(measure: AtomicMeasure, kind: str = "line_field", family_degree: int = 0,
                               test_points_m: int = 256, rng_seed: int = 0, n_starts: int = 32,
                               warm_start=None, maxiter: int = 200) -> DefectReport:
    """Smallest defect of a candidate invariant line field / conformal structure of bounded degree.

    Candidates are trigonometric polynomials (angle function for line fields;
    u and log v of the upper half-plane coordinate for conformal structures).
    The defect is the weighted mean squared distance between the pushed (or
    pulled back) structure and the candidate at the image point.  Multi-start
    BFGS with finite-difference gradients; the first start is the zero field or
    ``warm_start``.
    """
    if family_degree < 0 or test_points_m < 1 or n_starts < 1:
        raise ValueError("need family_degree >= 0, test_points_m >= 1, n_starts >= 1")
    points = draw_test_points(test_points_m, rng_seed)
    problem = _DefectProblem(measure, kind, family_degree, points)
    rng = rng_for(derive_seed(rng_seed, 0xDEF))
    best_val, best_x = math.inf, None
    for x0 in _start_vectors(problem, n_starts, rng, warm_start):
        f0 = problem(x0)
        if f0 < ZERO_DEFECT:
            val, x = f0, x0
        else:
            res = minimize(problem, x0, method="BFGS", options={"maxiter": maxiter, "gtol": 1e-9})
            val, x = (float(res.fun), res.x) if res.fun <= f0 else (f0, x0)
        if val < best_val:
            best_val, best_x = val, np.array(x, dtype=float)
    return DefectReport(kind, family_degree, best_val, best_x, test_points_m, n_starts)


def defect_ladder(measure: AtomicMeasure, kind: str, max_degree: int, **kw) -> list[DefectReport]:
    """Reports for degrees 0..max_degree, each warm-started from the previous minimizer."""
    out, prev = [], None
    for deg in range(max_degree + 1):
        warm = None if prev is None else embed_coefficients(prev.minimizer, kind, prev.family_degree, deg)
        prev = invariant_structure_defect(measure, kind, deg, warm_start=warm, **kw)
        out.append(prev)
    return out
