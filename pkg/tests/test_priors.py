import numpy as np
import pytest

from photogeo.camera import DEPTH_MAX, DEPTH_MIN
from photogeo.priors import PRIOR_FAR, PRIOR_NEAR, PriorSpec, build_prior


def test_prior_default_range_and_box():
    d = build_prior(PriorSpec(), 32, 32)
    assert d.shape == (32, 32)
    assert d.max() == pytest.approx(PRIOR_FAR, abs=1e-12)
    assert d.min() >= PRIOR_NEAR - 1e-12
    assert DEPTH_MIN < d.min() and d.max() < DEPTH_MAX


def test_prior_bulges_at_center():
    d = build_prior(PriorSpec(), 33, 33)
    assert d[16, 16] == d.min()  # nearest point at the ellipsoid center
    assert d[0, 0] == pytest.approx(PRIOR_FAR, abs=1e-12)
    # radial monotonicity along the middle row
    row = d[16, :17]
    assert (np.diff(row) <= 1e-12).all()


def test_prior_mask_placement():
    mask = np.zeros((40, 40), bool)
    mask[4:16, 20:36] = True  # center (9.5, 27.5)
    d = build_prior(PriorSpec(), 40, 40, mask=mask)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    assert abs(i - 9.5) <= 1.0 and abs(j - 27.5) <= 1.0


def test_prior_empty_mask_raises():
    with pytest.raises(ValueError, match="mask is empty"):
        build_prior(PriorSpec(), 16, 16, mask=np.zeros((16, 16), bool))


def test_prior_flat_constant():
    d = build_prior(PriorSpec(kind="flat"), 16, 16)
    assert np.allclose(d, PRIOR_FAR)


def test_prior_weak_halves_the_bulge():
    full = build_prior(PriorSpec(), 32, 32)
    weak = build_prior(PriorSpec(kind="weak"), 32, 32)
    full_bulge = PRIOR_FAR - full.min()
    weak_bulge = PRIOR_FAR - weak.min()
    assert weak_bulge == pytest.approx(full_bulge / 2.0, rel=1e-9)


def test_prior_shifted_center():
    w = 48
    base = build_prior(PriorSpec(), w, 32)
    shifted = build_prior(PriorSpec(kind="shifted"), w, 32)
    j0 = np.unravel_index(np.argmin(base), base.shape)[1]
    j1 = np.unravel_index(np.argmin(shifted), shifted.shape)[1]
    assert j1 - j0 == pytest.approx(w / 6.0, abs=1.0)


def test_prior_asymmetric_differs_across_center():
    d = build_prior(PriorSpec(kind="asymmetric"), 33, 33)
    assert not np.allclose(d, d[:, ::-1], atol=1e-9)


def test_prior_custom_geometry():
    spec = PriorSpec(center=(8.0, 8.0), radii=(4.0, 4.0), depth_range=(0.95, 1.01))
    d = build_prior(spec, 24, 24)
    assert d[8, 8] == pytest.approx(0.95, abs=1e-12)
    assert d[8, 20] == pytest.approx(1.01, abs=1e-12)


def test_prior_depth_range_validation():
    with pytest.raises(ValueError):
        PriorSpec(depth_range=(0.8, 1.0))  # near outside the working box
    with pytest.raises(ValueError):
        PriorSpec(depth_range=(1.0, 0.95))
    with pytest.raises(ValueError):
        PriorSpec(kind="banana")
