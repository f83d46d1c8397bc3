"""Finitely supported probability measures on words and their convolution powers."""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .torus import Atom, UnsupportedInverse, Word, WordSyntaxError, as_word, compose, invert

WEIGHT_TOL = 1e-12


class BadWeights(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    """Exact enumeration would need ``count`` branches, more than the budget allows."""

    def __init__(self, count: int, budget: int):
        super().__init__(f"{count} branches exceed the budget of {budget}")
        self.count = count
        self.budget = budget


@dataclass(frozen=True)
class AtomicMeasure:
    """Probability measure sum_k weights[k] * delta(words[k]).

    ``meta`` records how a preset was built (e.g. the diffusion parameters) and
    takes no part in equality.
    """

    words: tuple[Word, ...]
    weights: tuple[float, ...]
    meta: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        words = tuple(as_word(w) for w in self.words)
        weights = tuple(float(w) for w in self.weights)
        if len(words) != len(weights) or not words:
            raise BadWeights("need one positive weight per word")
        if any(not (w > 0) for w in weights):
            raise BadWeights("weights must be strictly positive")
        if abs(math.fsum(weights) - 1.0) > WEIGHT_TOL:
            raise BadWeights(f"weights sum to {math.fsum(weights)!r}, not 1")
        literals = [str(w) for w in words]
        if len(set(literals)) != len(literals):
            raise BadWeights("atom words must be distinct")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_pairs(cls, pairs, meta=None, drop_zero=True) -> "AtomicMeasure":
        pairs = [(as_word(w), float(p)) for w, p in pairs]
        if any(p < 0 for _, p in pairs):
            raise BadWeights("negative weight")
        if drop_zero:
            pairs = [(w, p) for w, p in pairs if p > 0]
        return cls(tuple(w for w, _ in pairs), tuple(p for _, p in pairs), dict(meta or {}))

    @classmethod
    def dirac(cls, word) -> "AtomicMeasure":
        return cls((as_word(word),), (1.0,), {"preset": "dirac", "word": str(as_word(word))})

    @classmethod
    def uniform(cls, words, meta=None) -> "AtomicMeasure":
        words = [as_word(w) for w in words]
        return cls(tuple(words), (1.0 / len(words),) * len(words), dict(meta or {}))

    def __len__(self) -> int:
        return len(self.words)

    @property
    def k(self) -> int:
        return len(self.words)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights)

    def inverted(self) -> "AtomicMeasure":
        """Push forward by w -> w^-1 (atoms inverted, weights kept)."""
        return AtomicMeasure(tuple(invert(w) for w in self.words), self.weights)

    def as_multiset(self) -> dict[str, float]:
        return {str(w): p for w, p in zip(self.words, self.weights)}

    def is_linear(self) -> bool:
        return all(w.is_linear for w in self.words)

    def to_literal(self) -> str:
        return "\n".join(f"weight {p!r} word {w}" for w, p in zip(self.words, self.weights))

    @property
    def label(self) -> str:
        return str(self.meta.get("literal", self.to_literal().replace("\n", " | ")))

    def program(self):
        """Flattened (ops, params, starts) encoding consumed by the compiled kernels."""
        return compile_program(self.words)


_OPCODES = {"ID": K.OP_ID, "G1": K.OP_G1, "G2": K.OP_G2, "G3": K.OP_G3, "G4": K.OP_G4, "STD": K.OP_STD}


def _opcode(atom: Atom) -> int:
    if atom.kind == "CAT":
        return K.OP_CAT if atom.exponent == 1 else K.OP_CATINV
    if atom.kind == "STD" and atom.exponent == -1:
        raise UnsupportedInverse("inverse standard map")
    return _OPCODES[atom.kind]


def compile_program(words: Sequence[Word]):
    ops, params, starts = [], [], [0]
    for w in words:
        for atom in as_word(w).atoms:
            ops.append(_opcode(atom))
            params.append(atom.signed_param)
        starts.append(len(ops))
    return (np.asarray(ops, dtype=np.int64), np.asarray(params, dtype=np.float64),
            np.asarray(starts, dtype=np.int64))


def midpoint_nodes(eps: float, n_quad: int) -> np.ndarray:
    """Cell midpoints of the even partition of [-eps, eps] into ``n_quad`` cells."""
    h = 2.0 * eps / n_quad
    return -eps + h * (np.arange(n_quad) + 0.5)


def make_diffusion(f0, eps: float, p: Sequence[float], n_quad: int) -> AtomicMeasure:
    """Midpoint-rule discretization of p0 delta(f0) + sum_i p_i avg_{|t|<=eps} delta(g_i^t o f0).

    Each family i in 1..4 contributes ``n_quad`` atoms ``f0;Gi(t_j)`` of weight
    p_i / n_quad.  Families with zero weight are dropped.
    """
    f0 = as_word(f0)
    p = [float(v) for v in p]
    if len(p) != 5:
        raise BadWeights("diffusion needs five weights p0..p4")
    if any(v < 0 for v in p) or abs(math.fsum(p) - 1.0) > WEIGHT_TOL:
        raise BadWeights(f"diffusion weights {p} must be non-negative and sum to 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if n_quad < 1:
        raise ValueError("n_quad must be at least 1")
    nodes = midpoint_nodes(eps, n_quad)
    pairs = [(f0, p[0])]
    for i, kind in enumerate(("G1", "G2", "G3", "G4"), start=1):
        for t in nodes:
            pairs.append((f0.then(Word((Atom(kind, float(t)),))), p[i] / n_quad))
    meta = {"preset": "diffusion", "f0": str(f0), "eps": float(eps), "p": tuple(p), "n_quad": int(n_quad)}
    return AtomicMeasure.from_pairs(pairs, meta=meta)


def symmetric_preset(alpha: float, beta: float, a: float, b: float,
                     weights: Sequence[float] = (0.125, 0.125, 0.125, 0.125)) -> AtomicMeasure:
    """Eight atoms G1(alpha), G2(beta), G3(a), G4(b) and their inverses.

    ``weights[i]`` is the mass of each of the two atoms in pair i, so the four
    weights sum to 1/2.
    """
    w = [float(v) for v in weights]
    if len(w) != 4 or any(not v > 0 for v in w) or abs(2.0 * math.fsum(w) - 1.0) > WEIGHT_TOL:
        raise BadWeights("symmetric preset needs four positive pair weights summing to 1/2")
    if not (a > 0 and b > 0):
        raise ValueError("shear amplitudes a, b must be positive")
    gens = [Atom("G1", alpha), Atom("G2", beta), Atom("G3", a), Atom("G4", b)]
    pairs = []
    for g, wi in zip(gens, w):
        pairs.append((Word((g,)), wi))
        pairs.append((Word((g.inverse(),)), wi))
    meta = {"preset": "symmetric", "alpha": float(alpha), "beta": float(beta), "a": float(a),
            "b": float(b), "weights": tuple(w)}
    return AtomicMeasure.from_pairs(pairs, meta=meta)


def translation_preset(alpha: float, beta: float) -> AtomicMeasure:
    """Uniform on {G1(alpha), G2(beta)}: isometries only."""
    return AtomicMeasure.uniform([Word((Atom("G1", alpha),)), Word((Atom("G2", beta),))],
                                 meta={"preset": "translations", "alpha": float(alpha), "beta": float(beta)})


def check_budget(measure: AtomicMeasure, n: int, budget: int) -> int:
    count = measure.k ** n
    if count > budget:
        raise BudgetExceeded(count, budget)
    return count


def branch_table(measure: AtomicMeasure, n: int, budget: int = 10**6):
    """All k**n branches as an index table (lexicographic, first draw slowest) with weights."""
    count = check_budget(measure, n, budget)
    k = measure.k
    idx = np.empty((count, n), dtype=np.int64)
    weights = np.ones(count)
    w = measure.weight_array
    r = np.arange(count)
    for j in range(n):
        digit = (r // k ** (n - 1 - j)) % k
        idx[:, j] = digit
        weights *= w[digit]
    return idx, weights


def enumerate_power(measure: AtomicMeasure, n: int, budget: int = 10**6) -> Iterator[tuple[Word, float]]:
    """Stream (composed word, product weight) over all branches of the n-th convolution power."""
    if n < 1:
        raise ValueError("n must be >= 1")
    check_budget(measure, n, budget)
    words, w = measure.words, measure.weights
    for branch in itertools.product(range(measure.k), repeat=n):
        yield compose(words[i] for i in branch), math.prod(w[i] for i in branch)


def draw_indices(measure: AtomicMeasure, size, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. atom indices by inverse-CDF lookup; prefixes are stable when ``size`` grows."""
    cdf = np.cumsum(measure.weight_array)
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), measure.k - 1).astype(np.int64)


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def sample_indices(measure: AtomicMeasure, n: int, seed: int) -> np.ndarray:
    return draw_indices(measure, n, rng_for(seed))


def sample_power(measure: AtomicMeasure, n: int, rng_seed: int) -> Word:
    """Compose n i.i.d. draws from ``measure`` in draw order."""
    return compose(measure.words[i] for i in sample_indices(measure, n, rng_seed))


# ---------------------------------------------------------------------------
# literal formats
# ---------------------------------------------------------------------------

_LINE_RE = re.compile(r"^\s*weight\s+(?P<w>\S+)\s+word\s+(?P<lit>.+?)\s*$")


def split_top_level(text: str, sep: str = ",") -> list[str]:
    """Split on ``sep`` outside parentheses."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [s.strip() for s in out if s.strip()]


def _floats(value: str) -> list[float]:
    return [float(v) for v in re.split(r"[/:\s]+", value.strip()) if v]


def _preset(text: str) -> AtomicMeasure:
    m = re.match(r"^preset:\s*(?P<name>\w+)\s*\((?P<args>.*)\)\s*$", text.strip(), re.S)
    if not m:
        raise WordSyntaxError(f"bad preset literal {text!r}")
    name = m["name"]
    kw: dict[str, str] = {}
    for item in split_top_level(m["args"]):
        if "=" not in item:
            raise WordSyntaxError(f"preset arguments must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        kw[key.strip()] = value.strip()

    def take(key, default=None, conv=float):
        if key in kw:
            return conv(kw.pop(key))
        if default is None:
            raise WordSyntaxError(f"preset {name} needs {key}")
        return default

    if name == "diffusion":
        f0 = take("f0", "ID", str)
        eps = take("eps")
        n_quad = take("n_quad", 1, int)
        if "p" in kw:
            p = _floats(kw.pop("p"))
        else:
            p = [take(f"p{i}", 0.2) for i in range(5)]
        measure = make_diffusion(f0, eps, p, n_quad)
    elif name == "symmetric":
        alpha = take("alpha")
        beta = take("beta")
        a = take("a")
        b = take("b")
        if "w" in kw:
            weights = _floats(kw.pop("w"))
        else:
            weights = [take(f"w{i}", 0.125) for i in range(1, 5)]
        measure = symmetric_preset(alpha, beta, a, b, weights)
    elif name == "translations":
        measure = translation_preset(take("alpha"), take("beta"))
    elif name == "dirac":
        measure = AtomicMeasure.dirac(take("word", None, str))
    else:
        raise WordSyntaxError(f"unknown preset {name!r}")
    if kw:
        raise WordSyntaxError(f"unknown preset arguments for {name}: {sorted(kw)}")
    return measure


def parse_measure(text: str) -> AtomicMeasure:
    """Parse a preset reference or ``weight <w> word <literal>`` lines ('|' also separates lines)."""
    text = text.strip()
    if text.startswith("preset:"):
        measure = _preset(text)
    else:
        pairs = []
        for raw in re.split(r"[\n|]", text):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = _LINE_RE.match(line)
            if not m:
                raise WordSyntaxError(f"bad measure line {line!r}")
            pairs.append((Word.parse(m["lit"]), float(m["w"])))
        if not pairs:
            raise WordSyntaxError("empty measure literal")
        measure = AtomicMeasure.from_pairs(pairs)
    meta = dict(measure.meta)
    meta["literal"] = text
    return AtomicMeasure(measure.words, measure.weights, meta)
