import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from uniexp.measures import AtomicMeasure, make_diffusion, symmetric_preset, translation_preset
from uniexp.torus import Atom, Word

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ALPHA = math.sqrt(2.0) - 1.0
BETA = math.sqrt(3.0) - 1.0
CATALOG = ("G1", "G2", "G3", "G4", "CAT", "STD", "ID")
PARAMETRIC = ("G1", "G2", "G3", "G4", "STD")


def random_atom(rng, kinds=CATALOG, t_max=1.0, allow_inverse=True):
    kind = kinds[rng.integers(len(kinds))]
    t = float(rng.uniform(-t_max, t_max)) if kind in PARAMETRIC else 0.0
    exp = -1 if (allow_inverse and kind != "STD" and rng.random() < 0.5) else 1
    return Atom(kind, t, exp)


def random_word(rng, max_len=20, **kw):
    """Uniform length in 1..max_len, atoms uniform over the catalog, parameters in [-1, 1]."""
    return Word(tuple(random_atom(rng, **kw) for _ in range(rng.integers(1, max_len + 1))))


def wrapped_diff(p, q):
    return (np.asarray(p, dtype=float) - np.asarray(q, dtype=float) + 0.5) % 1.0 - 0.5


@st.composite
def atoms(draw, kinds=CATALOG, invertible=False):
    kinds = tuple(k for k in kinds if not (invertible and k == "STD"))
    kind = draw(st.sampled_from(kinds))
    t = draw(st.floats(-1.0, 1.0, allow_nan=False)) if kind in PARAMETRIC else 0.0
    exp = 1 if kind == "STD" else draw(st.sampled_from((1, -1)))
    return Atom(kind, t, exp)


@st.composite
def words(draw, max_len=8, invertible=False):
    return Word(tuple(draw(st.lists(atoms(invertible=invertible), min_size=1, max_size=max_len))))


points = st.tuples(st.floats(0.0, 1.0, exclude_max=True), st.floats(0.0, 1.0, exclude_max=True))


@st.composite
def small_measures(draw, max_atoms=3, max_len=2):
    ws = draw(st.lists(words(max_len=max_len), min_size=1, max_size=max_atoms, unique_by=str))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=len(ws), max_size=len(ws)))
    total = math.fsum(raw)
    weights = [r / total for r in raw]
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    return AtomicMeasure(tuple(ws), tuple(weights))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def cat():
    return AtomicMeasure.dirac("CAT")


@pytest.fixture(scope="session")
def translations():
    return translation_preset(ALPHA, BETA)


@pytest.fixture(scope="session")
def symmetric_half():
    return symmetric_preset(ALPHA, BETA, 0.5, 0.5)


@pytest.fixture(scope="session")
def cat_diffusion():
    return make_diffusion("CAT", 0.1, (0.2,) * 5, 2)


# -- acceptance summary --------------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict_line():
    """Record one 'criterion k: PASS/FAIL ...' line, echoed in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
