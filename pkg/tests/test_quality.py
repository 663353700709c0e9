import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdprior import synthetic
from gdprior.imagecore import DimensionError, add_gaussian_noise
from gdprior.prior import default_prior
from gdprior.quality import PSNR_CAP, psnr, rank_correlations, score, score_nf, ssim
from gdprior.spectrum import DISTANCE_METRICS, UndefinedCorrelationError


def brute_kendall_b(x, y):
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx == dy:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def test_psnr_examples():
    a = synthetic.scene((32, 32), seed=1)
    assert psnr(a, a) == PSNR_CAP
    c = np.full((10, 10), 0.3)
    assert psnr(c, c + 0.1) == pytest.approx(20.0)
    rng = np.random.default_rng(0)
    noise = rng.choice([-0.1, 0.1], size=(16, 16))  # MSE exactly 0.01
    assert psnr(a[:16, :16], a[:16, :16] + noise) == pytest.approx(20.0)
    with pytest.raises(DimensionError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_examples():
    a = synthetic.scene((64, 64), seed=2)
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, 1.0 - a) < 0.3
    b = add_gaussian_noise(a, 0.05, 3)
    assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)
    assert -1 <= ssim(a, b) < 1
    with pytest.raises(DimensionError):
        ssim(np.zeros((6, 6)), np.zeros((6, 6)))


def test_ssim_matches_direct_window_formula():
    rng = np.random.default_rng(4)
    a, b = rng.random((10, 11)), rng.random((10, 11))
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for i in range(3):
        for j in range(4):
            x, y = a[i:i + 8, j:j + 8].ravel(), b[i:i + 8, j:j + 8].ravel()
            mx, my = x.mean(), y.mean()
            vx, vy = x.var(ddof=1), y.var(ddof=1)
            cxy = np.cov(x, y)[0, 1]
            vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    assert ssim(a, b) == pytest.approx(np.mean(vals), rel=1e-10)


@pytest.mark.parametrize("metric", DISTANCE_METRICS)
def test_score_zero_on_self(metric):
    a = synthetic.scene((64, 64), seed=5)
    assert score(a, a, metric) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("seed", [6, 7, 8])
def test_score_monotone_in_noise(seed):
    a = synthetic.scene((96, 96), seed=seed)
    s = [score(add_gaussian_noise(a, sig, seed), a) for sig in (0.02, 0.05, 0.1, 0.2)]
    assert all(np.diff(s) > 0)


def test_prior_and_nf_scores():
    a = synthetic.scene((64, 64), seed=9)
    assert score(a, default_prior()) > 0
    assert score_nf(a, a) == 0.0
    assert score_nf(add_gaussian_noise(a, 0.1, 1), a) > 0


def test_rank_correlations_trivial():
    x = [1.0, 4.0, 2.0, 8.0, 5.0]
    r = rank_correlations(x, x)
    assert all(v == pytest.approx(1.0) for v in r.values())
    r = rank_correlations(x, [-v for v in x])
    assert all(v == pytest.approx(-1.0) for v in r.values())
    assert rank_correlations([1, 2, 3], [2, 1, 3])["KCC"] == pytest.approx(1 / 3)


def test_rank_correlation_errors():
    with pytest.raises(UndefinedCorrelationError):
        rank_correlations([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        rank_correlations([1, 2], [1, 2])
    with pytest.raises(ValueError):
        rank_correlations([1, 2, np.nan], [1, 2, 3])
    with pytest.raises(DimensionError):
        rank_correlations([1, 2, 3], [1, 2])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=4, max_size=12))
def test_kendall_b_matches_brute_force(pairs):
    x = np.array([p[0] for p in pairs], float)
    y = np.array([p[1] for p in pairs], float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return
    r = rank_correlations(x, y)
    assert r["KCC"] == pytest.approx(brute_kendall_b(x, y), abs=1e-12)
    for v in r.values():
        assert -1 - 1e-12 <= v <= 1 + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=20),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_pcc_affine_invariant(xs, scale, shift):
    x = np.array(xs)
    y = x ** 3 - 2 * x
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    a = rank_correlations(x, y)["PCC"]
    b = rank_correlations(scale * x + shift, y)["PCC"]
    assert a == pytest.approx(b, abs=1e-9)
