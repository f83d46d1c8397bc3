"""Volume-preserving diffeomorphisms of the 2-torus built from a small atom catalog.

Coordinates live on T^2 = R^2 / Z^2, represented in [0, 1)^2.  Tangent vectors
are expressed in the flat chart, so every derivative is a 2x2 real matrix of
determinant one.

Catalog (``t`` is the atom parameter):

    G1(t)   (x, y) -> (x + t, y)
    G2(t)   (x, y) -> (x, y + t)
    G3(t)   (x, y) -> (x + t*phi(y), y)
    G4(t)   (x, y) -> (x, y + t*phi(x))
    CAT     (x, y) -> (2x + y, x + y)
    STD(K)  (x, y) -> (x + y', y')   with y' = y + K/(2 pi) sin(2 pi x)
    ID      identity

with the bump ``phi(t) = sin(pi t)**2``.  Words are applied left to right.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

KINDS = ("G1", "G2", "G3", "G4", "CAT", "STD", "ID")
PARAMETRIC = frozenset({"G1", "G2", "G3", "G4", "STD"})
TRANSLATIONS = frozenset({"G1", "G2", "ID"})

TWO_PI = 2.0 * math.pi


class UnsupportedInverse(ValueError):
    """Raised when a word needs the inverse of a standard-map atom."""


class WordSyntaxError(ValueError):
    pass


def wrap(v):
    """Reduce coordinates into [0, 1); works on scalars and arrays."""
    r = v - np.floor(v)
    # x - floor(x) rounds to 1.0 for tiny negative x
    return np.where(r >= 1.0, 0.0, r) if isinstance(r, np.ndarray) else (0.0 if r >= 1.0 else float(r))


def torus_distance(p, q) -> float:
    """Wrap-aware Euclidean distance between two points of T^2."""
    dx = abs(p[0] - q[0]) % 1.0
    dy = abs(p[1] - q[1]) % 1.0
    return math.hypot(min(dx, 1.0 - dx), min(dy, 1.0 - dy))


def projective_distance(a, b):
    """Angle between the lines with directions ``a`` and ``b`` (radians), in [0, pi/2]."""
    d = np.mod(np.asarray(a) - np.asarray(b), math.pi)
    return np.minimum(d, math.pi - d)


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", wrap(float(self.x)))
        object.__setattr__(self, "y", wrap(float(self.y)))

    def __iter__(self):
        yield self.x
        yield self.y

    def __getitem__(self, i):
        return (self.x, self.y)[i]


@dataclass(frozen=True)
class UnitTangent:
    """Unit tangent vector (cos theta, sin theta) at ``base``; theta is kept mod pi."""

    base: TorusPoint
    theta: float

    def __post_init__(self):
        if not isinstance(self.base, TorusPoint):
            object.__setattr__(self, "base", TorusPoint(*self.base))
        th = float(self.theta) % math.pi
        object.__setattr__(self, "theta", 0.0 if th >= math.pi else th)

    @property
    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])


def bump_phi(t):
    """The bump phi(t) = sin^2(pi t) with its first two derivatives.

    phi vanishes at 0, peaks at 1/2, increases on (0, 1/2) and decreases on
    (1/2, 1).  Accepts scalars or arrays.
    """
    t = np.mod(t, 1.0)
    s = np.sin(math.pi * t)
    value = s * s
    d1 = math.pi * np.sin(TWO_PI * t)
    d2 = 2.0 * math.pi ** 2 * np.cos(TWO_PI * t)
    if np.ndim(t) == 0:
        return float(value), float(d1), float(d2)
    return value, d1, d2


@dataclass(frozen=True)
class Atom:
    kind: str
    param: float = 0.0
    exponent: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise WordSyntaxError(f"unknown atom kind {self.kind!r}")
        if self.exponent not in (1, -1):
            raise WordSyntaxError("exponent must be +1 or -1")
        object.__setattr__(self, "param", float(self.param) if self.kind in PARAMETRIC else 0.0)

    @property
    def signed_param(self) -> float:
        """Parameter of the equivalent forward atom (G1-G4 invert by negating t)."""
        return self.param * self.exponent

    def inverse(self) -> "Atom":
        if self.kind == "STD":
            raise UnsupportedInverse("the standard-map atom has no closed-form inverse")
        return Atom(self.kind, self.param, -self.exponent)

    def __str__(self) -> str:
        body = f"{self.kind}({self.param!r})" if self.kind in PARAMETRIC else self.kind
        return body + ("^-1" if self.exponent == -1 else "")


_ATOM_RE = re.compile(
    r"^\s*(?P<kind>[A-Z][A-Z0-9]*)\s*(?:\(\s*(?P<param>[^()]*?)\s*\))?\s*(?P<inv>\^\s*-1)?\s*$"
)


def parse_atom(text: str) -> Atom:
    m = _ATOM_RE.match(text)
    if not m:
        raise WordSyntaxError(f"cannot parse atom {text!r}")
    kind = m["kind"]
    if kind not in KINDS:
        raise WordSyntaxError(f"unknown atom kind {kind!r}")
    if kind in PARAMETRIC:
        if m["param"] is None:
            raise WordSyntaxError(f"atom {kind} needs a parameter")
        try:
            param = float(m["param"])
        except ValueError:
            raise WordSyntaxError(f"bad parameter in {text!r}") from None
    else:
        if m["param"] not in (None, ""):
            raise WordSyntaxError(f"atom {kind} takes no parameter")
        param = 0.0
    return Atom(kind, param, -1 if m["inv"] else 1)


@dataclass(frozen=True)
class Word:
    """A finite composition of atoms; ``atoms[0]`` acts first."""

    atoms: tuple[Atom, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @classmethod
    def parse(cls, text: str) -> "Word":
        parts = [p for p in text.split(";") if p.strip()]
        if not parts:
            raise WordSyntaxError("empty word literal")
        return cls(tuple(parse_atom(p) for p in parts))

    def __str__(self) -> str:
        return ";".join(str(a) for a in self.atoms) if self.atoms else "ID"

    def __len__(self) -> int:
        return len(self.atoms)

    def then(self, other: "Word") -> "Word":
        """Apply ``self`` first, then ``other``."""
        return Word(self.atoms + other.atoms)

    def power(self, n: int) -> "Word":
        return Word(self.atoms * n)

    @property
    def has_inverted_std(self) -> bool:
        return any(a.kind == "STD" and a.exponent == -1 for a in self.atoms)

    @property
    def is_linear(self) -> bool:
        """True when the derivative does not depend on the base point."""
        return all(a.kind in TRANSLATIONS or a.kind == "CAT" for a in self.atoms)


def as_word(w) -> Word:
    if isinstance(w, Word):
        return w
    if isinstance(w, Atom):
        return Word((w,))
    if isinstance(w, str):
        return Word.parse(w)
    return Word(tuple(w))


def compose(words: Iterable[Word]) -> Word:
    atoms: list[Atom] = []
    for w in words:
        atoms.extend(as_word(w).atoms)
    return Word(tuple(atoms))


def invert(word) -> Word:
    """Formal inverse: reversed atom order, every exponent flipped."""
    word = as_word(word)
    return Word(tuple(a.inverse() for a in reversed(word.atoms)))


def _check_supported(word: Word) -> None:
    if word.has_inverted_std:
        raise UnsupportedInverse("word contains an inverted STD atom")


def _atom_step(atom: Atom, x, y, a, b, c, d):
    """Push a point and left-multiply the running Jacobian [[a,b],[c,d]] by one atom."""
    kind = atom.kind
    t = atom.signed_param
    if kind == "ID":
        return x, y, a, b, c, d
    if kind == "G1":
        return wrap(x + t), y, a, b, c, d
    if kind == "G2":
        return x, wrap(y + t), a, b, c, d
    if kind == "G3":
        val, der, _ = bump_phi(y)
        s = t * der
        return wrap(x + t * val), y, a + s * c, b + s * d, c, d
    if kind == "G4":
        val, der, _ = bump_phi(x)
        s = t * der
        return x, wrap(y + t * val), a, b, c + s * a, d + s * b
    if kind == "CAT":
        if atom.exponent == 1:
            return wrap(2 * x + y), wrap(x + y), 2 * a + c, 2 * b + d, a + c, b + d
        return wrap(x - y), wrap(2 * y - x), a - c, b - d, 2 * c - a, 2 * d - b
    if kind == "STD":
        if atom.exponent == -1:
            raise UnsupportedInverse("inverse standard map")
        k = t * np.cos(TWO_PI * x)
        y1 = y + t / TWO_PI * np.sin(TWO_PI * x)
        return (wrap(x + y1), wrap(y1),
                (1 + k) * a + c, (1 + k) * b + d, k * a + c, k * b + d)
    raise AssertionError(kind)


def cocycle_arrays(word, x, y):
    """Vectorized orbit and derivative of ``word`` at points (x, y).

    Returns ``(x', y', a, b, c, d)`` where [[a, b], [c, d]] is the derivative.
    """
    word = as_word(word)
    _check_supported(word)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.ones_like(x)
    b = np.zeros_like(x)
    c = np.zeros_like(x)
    d = np.ones_like(x)
    x, y = wrap(x), wrap(y)
    for atom in word.atoms:
        x, y, a, b, c, d = _atom_step(atom, x, y, a, b, c, d)
    return x, y, a, b, c, d


def apply(word, p) -> TorusPoint:
    word = as_word(word)
    _check_supported(word)
    x, y = wrap(float(p[0])), wrap(float(p[1]))
    for atom in word.atoms:
        x, y, *_ = _atom_step(atom, x, y, 1.0, 0.0, 0.0, 1.0)
    return TorusPoint(float(x), float(y))


def derivative(word, p) -> np.ndarray:
    """Derivative of ``word`` at ``p`` as a 2x2 array (chain rule along the orbit)."""
    word = as_word(word)
    _check_supported(word)
    x, y, a, b, c, d = float(p[0]), float(p[1]), 1.0, 0.0, 0.0, 1.0
    x, y = wrap(x), wrap(y)
    for atom in word.atoms:
        x, y, a, b, c, d = _atom_step(atom, x, y, a, b, c, d)
    return np.array([[a, b], [c, d]], dtype=float)


def log_norm_growth(word, u: UnitTangent) -> float:
    """log |D f(u.base) v(u.theta)| in nats."""
    m = derivative(word, u.base)
    if np.array_equal(m, np.eye(2)):
        return 0.0
    return float(np.log(np.linalg.norm(m @ u.vector)))


def atom_jacobian(atom: Atom, p) -> np.ndarray:
    return derivative(Word((atom,)), p)
