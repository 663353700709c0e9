import numpy as np
import pytest

from gdprior import synthetic
from gdprior.dehaze import (DehazeConfig, HazeModel, count_components, dehaze, dehaze_energy,
                            estimate_airlight, initial_transmission, synthesize_haze)
from gdprior.quality import psnr


@pytest.fixture(scope="module")
def hazy_case():
    U0, t0, A0 = synthetic.haze_scene(seed=0)
    I = synthesize_haze(U0, t0, A0)
    return U0, t0, A0, I, dehaze(I)


def test_airlight_examples():
    assert estimate_airlight(np.full((20, 20), 0.37)) == pytest.approx(0.37)
    img = np.full((40, 40), 0.2)
    img[:5, :5] = 1.0
    assert estimate_airlight(img) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        estimate_airlight(np.zeros((0, 3)))


def test_airlight_on_composite(hazy_case):
    _, _, A0, I, res = hazy_case
    assert abs(estimate_airlight(I) - A0) < 0.05
    assert abs(res.airlight - A0) < 0.05


def test_haze_model():
    rng = np.random.default_rng(0)
    U = rng.random((8, 8))
    t = rng.uniform(0.1, 1.0, (8, 8))
    m = HazeModel(0.8, t)
    np.testing.assert_allclose(m.invert(m.compose(U)), U, atol=1e-12)
    with pytest.raises(ValueError):
        HazeModel(1.5, t)
    with pytest.raises(ValueError):
        HazeModel(0.5, np.full((2, 2), 0.05))


def test_data_term_pointwise_minimizer():
    rng = np.random.default_rng(1)
    I = rng.random((6, 6))
    t = rng.uniform(0.2, 1.0, (6, 6))
    A = 0.9
    U = HazeModel(A, t).invert(I)
    assert dehaze_energy(U, t, I, A, 0.0, 0.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-24)
    for _ in range(20):
        V = U + 1e-3 * rng.normal(size=U.shape)
        assert dehaze_energy(V, t, I, A, 0.0, 0.0, 1.0, 1.0) > 0


def test_initial_transmission_range():
    I = synthetic.scene((48, 48), seed=2)
    t = initial_transmission(I, 0.9)
    assert t.min() >= 0.1 and t.max() <= 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        DehazeConfig(lam=-1).resolved()
    with pytest.raises(ValueError):
        DehazeConfig(t_min=0.0).resolved()


def test_dehaze_gains_and_invariants(hazy_case):
    U0, _, _, I, res = hazy_case
    assert psnr(res.image, U0) - psnr(I, U0) >= 3.0
    assert res.transmission.min() >= 0.1 - 1e-12 and res.transmission.max() <= 1.0
    e = res.energies
    assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(e, e[1:]))


def test_component_separation(hazy_case):
    _, _, _, I, res = hazy_case
    assert count_components(I) == 1
    assert count_components(res.image) >= 2
    assert count_components(np.zeros((5, 5))) == 0


def test_haze_free_fixed_point():
    U0, _, A0 = synthetic.haze_scene(seed=3, ground=0.0)
    I = synthesize_haze(U0, np.ones_like(U0), A0)
    res = dehaze(I)
    assert np.sqrt(np.mean((res.image - I) ** 2)) < 0.02
    assert res.transmission.mean() > 0.98


def test_fixed_airlight_and_no_regularizer():
    U0, t0, A0 = synthetic.haze_scene((48, 64), seed=4)
    I = synthesize_haze(U0, t0, A0)
    res = dehaze(I, cfg=DehazeConfig(lam=0.0, iters=3), airlight=A0)
    assert res.airlight == A0
    # without the regularizer, U is the pointwise inverse for the final t
    np.testing.assert_allclose(res.image * res.transmission + A0 * (1 - res.transmission),
                               I, atol=1e-6)
