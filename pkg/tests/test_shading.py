import math

import numpy as np
import pytest
import torch

from photogeo.shading import (
    CANONICAL_LIGHTING,
    Lighting,
    albedo_from_raw,
    apply_lighting_offset,
    light_direction,
    lighting_values_from_raw,
    raw_from_albedo,
    raw_from_lighting_values,
    shade,
)

import reference


def test_light_direction_straight_on():
    d = np.asarray(light_direction(0.0, 0.0))
    assert np.allclose(d, [0.0, 0.0, 1.0], atol=1e-15)


def test_light_direction_frozen_example():
    # (-0.9, 0.8, 1) has squared norm 2.45
    d = np.asarray(light_direction(-0.9, 0.8))
    s = math.sqrt(2.45)
    assert np.allclose(d, [-0.9 / s, 0.8 / s, 1.0 / s], atol=1e-14)
    assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-14)


def test_shade_uniform_frozen():
    # flat surface facing the camera, head-on light: J = (ks + kd) * a
    albedo = np.full((4, 4, 3), 0.5)
    normals = np.zeros((4, 4, 3))
    normals[..., 2] = 1.0
    out = np.asarray(shade(albedo, normals, Lighting(0.0, 0.0, 0.2, 0.6)))
    assert np.allclose(out, 0.4, atol=1e-14)


def test_shade_canonical_returns_albedo(rng):
    albedo = rng.uniform(0, 1, (5, 7, 3))
    normals = rng.standard_normal((5, 7, 3))
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    out = np.asarray(shade(albedo, normals, CANONICAL_LIGHTING))
    assert np.allclose(out, albedo, atol=1e-15)


def test_shade_clamps_negative_dot():
    # a sideways normal is orthogonal to the head-on light: diffuse term is 0
    albedo = np.full((2, 2, 3), 0.8)
    normals = np.zeros((2, 2, 3))
    normals[..., 0] = 1.0
    out = np.asarray(shade(albedo, normals, Lighting(0.0, 0.0, 0.25, 0.75)))
    assert np.allclose(out, 0.25 * 0.8, atol=1e-14)


def test_shade_matches_reference(rng):
    albedo = rng.uniform(0, 1, (6, 5, 3))
    normals = rng.standard_normal((6, 5, 3))
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    lighting = Lighting(0.3, -0.2, 0.4, 0.5)
    ours = np.asarray(shade(albedo, normals, lighting))
    theirs = reference.lambert_shade(albedo, normals, 0.3, -0.2, 0.4, 0.5)
    assert np.allclose(ours, theirs, atol=1e-12)


def test_shade_shape_validation():
    with pytest.raises(ValueError):
        shade(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)), CANONICAL_LIGHTING)


def test_lighting_validation():
    with pytest.raises(ValueError):
        Lighting(0.0, 0.0, 1.2, 0.0)
    with pytest.raises(ValueError):
        Lighting(0.0, 0.0, 0.5, -0.1)


def test_lighting_offset_clamps():
    lit = Lighting(0.0, 0.0, 0.9, 0.1).with_offset(0.5, -0.3, 0.5, -0.4)
    assert lit.lx == pytest.approx(0.5)
    assert lit.ly == pytest.approx(-0.3)
    assert lit.ks == 1.0  # 0.9 + 0.5 clamped
    assert lit.kd == 0.0  # 0.1 - 0.4 clamped


def test_lighting_array_roundtrip():
    lit = Lighting(0.2, -0.1, 0.7, 0.3)
    assert Lighting.from_array(lit.as_array()) == lit


def test_albedo_raw_roundtrip(rng):
    a = rng.uniform(0.05, 0.95, (4, 4, 3))
    back = np.asarray(albedo_from_raw(raw_from_albedo(a)))
    assert np.allclose(back, a, atol=1e-12)
    # sigmoid keeps any raw value inside (0, 1)
    wild = np.asarray(albedo_from_raw(np.array([-100.0, 0.0, 100.0])))
    assert wild[0] >= 0.0 and wild[2] <= 1.0 and wild[1] == pytest.approx(0.5)


def test_lighting_values_from_raw_mapping():
    raw = torch.tensor([0.3, -0.2, 0.0, 1e9], dtype=torch.float64)
    vals = lighting_values_from_raw(raw)
    # direction offsets pass through, ks/kd go through 0.5 (1 + tanh)
    assert float(vals[0]) == pytest.approx(0.3, abs=1e-15)
    assert float(vals[1]) == pytest.approx(-0.2, abs=1e-15)
    assert float(vals[2]) == pytest.approx(0.5, abs=1e-15)
    assert float(vals[3]) == pytest.approx(1.0, abs=1e-12)


def test_lighting_raw_roundtrip(rng):
    vals = np.array([0.4, -0.3, 0.8, 0.25])
    back = np.asarray(lighting_values_from_raw(raw_from_lighting_values(vals)))
    assert np.allclose(back, vals, atol=1e-9)


def test_apply_lighting_offset_clamps(rng):
    base = np.array([0.1, 0.2, 0.9, 0.05])
    out = np.asarray(apply_lighting_offset(base, np.array([0.3, -0.1, 0.4, -0.2])))
    assert np.allclose(out[:2], [0.4, 0.1], atol=1e-14)
    assert out[2] == 1.0 and out[3] == 0.0
