import json
import math

import numpy as np
import pytest

from photogeo.camera import compute_normals, intrinsics_from_fov, rotation_from_angles
from photogeo.metrics import EvalReport, evaluate_depth, mad, psnr, side

import reference
import torch


# ---------------------------------------------------------------------------
# side


def test_side_scale_invariance(rng):
    d = rng.uniform(0.9, 1.1, (12, 12))
    for c in (0.5, 1.0, 2.0):
        assert side(d, c * d) == 0.0


def test_side_two_pixel_example():
    # log-deltas are (0, -log 2); std is log(2)/2... no: the frozen value
    # comes from sqrt(E[d^2] - E[d]^2) with d = (0, 1) after rescaling below
    pred = np.array([[1.0, 1.0]])
    gt = np.array([[1.0, math.e]])
    # deltas = (0, -1): E[d^2] = 0.5, (E[d])^2 = 0.25 -> sqrt(0.25) = 0.5
    assert side(pred, gt) == pytest.approx(0.5, abs=1e-12)


def test_side_symmetry(rng):
    a = rng.uniform(0.9, 1.1, (8, 8))
    b = rng.uniform(0.9, 1.1, (8, 8))
    assert side(a, b) == pytest.approx(side(b, a), abs=1e-14)


def test_side_matches_reference(rng):
    a = rng.uniform(0.9, 1.1, (9, 9))
    b = rng.uniform(0.9, 1.1, (9, 9))
    mask = rng.uniform(0, 1, (9, 9)) > 0.3
    assert side(a, b, mask=mask) == pytest.approx(
        reference.side_reference(a, b, mask=mask), abs=1e-12
    )


def test_side_validation(rng):
    with pytest.raises(ValueError, match="shape"):
        side(np.ones((4, 4)), np.ones((4, 5)))
    with pytest.raises(ValueError, match="strictly positive"):
        side(np.zeros((4, 4)), np.ones((4, 4)))
    with pytest.raises(ValueError, match="no pixels"):
        side(np.ones((4, 4)), np.ones((4, 4)), mask=np.zeros((4, 4), bool))


# ---------------------------------------------------------------------------
# mad


def test_mad_identical_and_orthogonal():
    n1 = np.zeros((3, 3, 3))
    n1[..., 2] = 1.0
    assert mad(n1, n1) == pytest.approx(0.0, abs=1e-12)
    n2 = np.zeros((3, 3, 3))
    n2[..., 0] = 1.0
    assert mad(n1, n2) == pytest.approx(90.0, abs=1e-9)


def test_mad_rotation_by_known_angle(rng):
    # rotating normals that lie in the plane orthogonal to the rotation axis
    # shifts every angle by exactly theta
    n = np.zeros((6, 6, 3))
    n[..., 1] = rng.standard_normal((6, 6))
    n[..., 2] = np.abs(rng.standard_normal((6, 6))) + 1.0
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    theta = 0.2
    R = rotation_from_angles(theta, 0.0, 0.0).numpy()
    assert mad(n @ R.T, n) == pytest.approx(math.degrees(theta), abs=1e-9)


def test_mad_clamps_roundoff(rng):
    # dot products a hair above 1.0 from float noise must not produce NaN
    n = rng.standard_normal((4, 4, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    assert mad(n, n * (1.0 + 1e-16)) == pytest.approx(0.0, abs=1e-6)


def test_mad_matches_reference(rng):
    a = rng.standard_normal((5, 5, 3))
    b = rng.standard_normal((5, 5, 3))
    a /= np.linalg.norm(a, axis=-1, keepdims=True)
    b /= np.linalg.norm(b, axis=-1, keepdims=True)
    assert mad(a, b) == pytest.approx(reference.mad_reference(a, b), abs=1e-10)


# ---------------------------------------------------------------------------
# psnr


def test_psnr_identical_sentinel():
    img = np.linspace(0, 1, 48).reshape(4, 4, 3)
    assert psnr(img, img) == 99.0


def test_psnr_constant_offset():
    a = np.full((8, 8, 3), 0.5)
    b = np.full((8, 8, 3), 0.6)
    # mse = 0.01 -> 10 log10(1 / 0.01) = 20 dB
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)


def test_psnr_mask_and_reference(rng):
    a = rng.uniform(0, 1, (7, 7, 3))
    b = rng.uniform(0, 1, (7, 7, 3))
    mask = rng.uniform(0, 1, (7, 7)) > 0.4
    assert psnr(a, b, mask=mask) == pytest.approx(
        reference.psnr_reference(a, b, mask=mask), abs=1e-10
    )


# ---------------------------------------------------------------------------
# reports


def test_eval_report_json_roundtrip():
    rep = EvalReport(side=0.42, mad=12.5, psnr=31.0, pixels=1024)
    d = json.loads(rep.to_json())
    assert d == {"side": 0.42, "mad": 12.5, "psnr": 31.0, "pixels": 1024}
    rep2 = EvalReport(side=0.1, mad=5.0, psnr=None, pixels=16)
    assert "psnr" not in json.loads(rep2.to_json())


def test_eval_report_validation():
    with pytest.raises(ValueError):
        EvalReport(side=-0.1, mad=1.0, psnr=None, pixels=4)
    with pytest.raises(ValueError):
        EvalReport(side=0.1, mad=1.0, psnr=None, pixels=0)


def test_evaluate_depth_units(hemisphere16):
    # the report carries side in units of 1e-2: a raw value of 0.005 reads 0.5
    sc = hemisphere16
    pred = sc.depth * np.exp(np.where(sc.mask, 0.01, 0.0) * ((np.indices(sc.mask.shape)[1] % 2) * 2 - 1))
    rep = evaluate_depth(pred, sc.depth, sc.K, mask=sc.mask)
    raw = side(pred, sc.depth, mask=sc.mask)
    assert rep.side == pytest.approx(raw * 100.0, rel=1e-12)
    assert rep.pixels == int(sc.mask.sum())
    assert rep.psnr is None


def test_evaluate_depth_perfect(hemisphere16):
    sc = hemisphere16
    rep = evaluate_depth(
        sc.depth, sc.depth, sc.K, mask=sc.mask, image_pred=sc.image, image_gt=sc.image
    )
    assert rep.side == 0.0
    # acos roundoff on identical normals leaves sub-microdegree noise
    assert rep.mad == pytest.approx(0.0, abs=1e-5)
    assert rep.psnr == 99.0


def test_evaluate_depth_mad_consistent(hemisphere16):
    sc = hemisphere16
    bumped = sc.depth * (1.0 + 0.02 * np.sin(np.arange(16) / 3.0))[None, :]
    rep = evaluate_depth(bumped, sc.depth, sc.K, mask=sc.mask)
    n_pred = np.asarray(compute_normals(bumped, sc.K))
    n_gt = np.asarray(compute_normals(sc.depth, sc.K))
    assert rep.mad == pytest.approx(mad(n_pred, n_gt, mask=sc.mask), abs=1e-12)
