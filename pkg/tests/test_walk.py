import math

import numpy as np
import pytest

from conftest import ALPHA, BETA
from uniexp.measures import AtomicMeasure, enumerate_power, make_diffusion, sample_indices, symmetric_preset
from uniexp.torus import apply
from uniexp.walk import (BadMeasure, OrbitTrace, finite_orbit_detect, run_orbit, smoothing_check,
                         translation_pair_cells, weyl_report, weyl_sums, weyl_threshold)


# -- orbits --------------------------------------------------------------------

def test_identity_orbit_is_constant():
    tr = run_orbit(AtomicMeasure.dirac("ID"), (0.3, 0.6), 50, seed=0)
    assert tr.n == 50 and np.all(tr.points == [0.3, 0.6])


def test_rational_rotation_cycles():
    tr = run_orbit(AtomicMeasure.dirac("G1(0.25)"), (0.1, 0.6), 12, seed=0)
    assert np.allclose(tr.points[:, 0], (0.1 + 0.25 * np.arange(12)) % 1.0)
    assert np.all(tr.points[:, 1] == 0.6)


def test_orbit_reproducible(symmetric_half):
    a = run_orbit(symmetric_half, (0.1, 0.2), 1000, seed=5)
    b = run_orbit(symmetric_half, (0.1, 0.2), 1000, seed=5)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "j,x,y" and len(a.to_csv().splitlines()) == 1001


def test_orbit_steps_follow_drawn_atoms(symmetric_half):
    tr = run_orbit(symmetric_half, (0.1, 0.2), 40, seed=9)
    draws = sample_indices(symmetric_half, 39, 9)
    for j, k in enumerate(draws):
        q = apply(symmetric_half.words[k], tr.points[j])
        assert np.allclose(tr.points[j + 1], tuple(q), atol=1e-12)


def _step_tv(m, x0, j, n_seeds, bins=16):
    exact = np.zeros((bins, bins))
    for word, w in enumerate_power(m, j):
        p = apply(word, x0)
        exact[min(int(p.x * bins), bins - 1), min(int(p.y * bins), bins - 1)] += w
    pts = np.array([run_orbit(m, x0, j + 1, seed).points[j] for seed in range(n_seeds)])
    emp, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=bins, range=[[0, 1], [0, 1]])
    return 0.5 * np.abs(emp / emp.sum() - exact).sum()


# at j = 3 with 27 branches the multinomial noise of 10^3 draws alone averages about 0.053 in TV,
# so the deepest step uses 10^4 seeds (noise about 0.017) to keep the 0.05 bound meaningful
@pytest.mark.parametrize("weights", [(0.6, 0.3, 0.1), (0.5, 0.5)])
@pytest.mark.parametrize("j, n_seeds", [(1, 1000), (2, 1000), (3, 10_000)])
def test_markov_consistency(weights, j, n_seeds):
    words = ["CAT", "G3(0.4)", "G2(0.3)"][: len(weights)]
    m = AtomicMeasure.from_pairs(list(zip(words, weights)))
    assert _step_tv(m, (0.21, 0.67), j, n_seeds) <= 0.05


# -- Weyl sums ---------------------------------------------------------------

def test_iid_uniform_points_equidistribute():
    pts = np.random.default_rng(0).random((100_000, 2))
    rep = weyl_report(pts, F=5)
    assert rep.verdict == "Equidistributing"
    assert rep.max_weyl < weyl_threshold(100_000)
    assert rep.flagged == ()


def test_constant_orbit_is_suspicious():
    rep = weyl_report(np.tile([0.3, 0.4], (1000, 1)), F=5)
    assert rep.max_weyl == 1.0 and rep.verdict == "Suspicious"


def test_irrational_rotation_flags_frozen_frequencies():
    tr = run_orbit(AtomicMeasure.dirac(f"G1({ALPHA!r})"), (0.1, 0.2), 100_000, seed=0)
    rep = weyl_report(tr, F=5)
    assert rep.verdict == "Equidistributing"
    assert "(0,1)" in rep.flagged and len(rep.flagged) == 10
    assert rep.max_weyl_raw == 1.0


def test_weyl_sum_frequency_count_and_symmetry():
    pts = np.random.default_rng(1).random((500, 2))
    sums = weyl_sums(pts, 3)
    assert len(sums) == 7 * 7 - 1
    assert sums[(1, -2)] == sums[(-1, 2)]
    z = np.exp(2j * np.pi * (1 * pts[:, 0] - 2 * pts[:, 1])).mean()
    assert sums[(1, -2)] == pytest.approx(abs(z), abs=1e-14)


def test_weyl_sum_is_order_independent():
    pts = np.random.default_rng(2).random((20_000, 2))
    perm = np.random.default_rng(3).permutation(20_000)
    a, b = weyl_sums(pts, 4), weyl_sums(pts[perm], 4)
    assert all(abs(a[k] - b[k]) <= 1e-15 for k in a)


def test_report_bounds():
    rep = weyl_report(np.random.default_rng(4).random((300, 2)), F=2)
    assert 0 <= rep.max_weyl <= rep.max_weyl_raw <= 1
    with pytest.raises(ValueError):
        weyl_report(np.zeros((10, 2)), F=0)


# -- finite orbits -----------------------------------------------------------

def test_rational_rotation_is_finite():
    tr = run_orbit(AtomicMeasure.dirac("G1(0.25)"), (0.1, 0.6), 100, seed=0)
    res = finite_orbit_detect(tr)
    assert res.finite and res.size == 4 and res.verdict == "FiniteCandidate(4)"


def test_irrational_rotation_is_infinite():
    tr = run_orbit(AtomicMeasure.dirac(f"G1({ALPHA!r})"), (0.1, 0.6), 10_000, seed=0)
    assert finite_orbit_detect(tr).verdict == "Infinite"


def test_diffusion_orbit_is_infinite(cat_diffusion):
    assert finite_orbit_detect(run_orbit(cat_diffusion, (0.1, 0.6), 5000, seed=1)).verdict == "Infinite"


def test_detection_handles_wraparound():
    pts = np.array([[0.0, 0.5], [1.0 - 1e-12, 0.5]] * 10)
    assert finite_orbit_detect(OrbitTrace(None, 0, pts)).size == 1


# -- smoothing -----------------------------------------------------------------

def test_smoothing_needs_a_diffusion():
    with pytest.raises(BadMeasure):
        smoothing_check(symmetric_preset(ALPHA, BETA, 0.5, 0.5))


def test_smoothing_rejects_pure_base_map():
    m = make_diffusion("ID", 0.1, (1, 0, 0, 0, 0), 3)
    with pytest.raises(BadMeasure):
        smoothing_check(m)


def test_smoothing_example_identity():
    m = make_diffusion("ID", 0.1, (0.2,) * 5, 8)
    rep = smoothing_check(m, (0.3, 0.7), samples=100_000, g=64, seed=0)
    assert rep.translation_cells >= 64
    assert rep.passes
    assert rep.translation_mass == pytest.approx(0.08, abs=0.005)


def test_translation_cells_never_decrease_with_n_quad():
    rng = np.random.default_rng(6)
    for f0 in ("ID", "CAT"):
        for _ in range(4):
            v = tuple(rng.random(2))
            counts = [len(translation_pair_cells(f0, 0.1, n, v, 64)) for n in range(1, 13)]
            assert all(b >= a for a, b in zip(counts, counts[1:]))


def test_smoothing_histogram_counts_all_samples():
    m = make_diffusion("CAT", 0.3, (0.2,) * 5, 3)
    rep = smoothing_check(m, samples=20_000, g=32, seed=1)
    assert rep.histogram.sum() == 20_000
    assert rep.expected_translation_mass == pytest.approx(0.08)
    assert math.isfinite(rep.min_cell_density)
