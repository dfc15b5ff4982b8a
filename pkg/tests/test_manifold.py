import math

import numpy as np
import pytest

import photogeo as pg
from photogeo.manifold import OracleProjector, ProjectionResult, ReplayProjector
from photogeo.fileio import write_png
from photogeo.rendering import render
from photogeo.sampling import SeedPolicy


def _on_manifold_pseudo(scene, yaw_deg):
    out = render(
        scene.depth,
        scene.albedo,
        viewpoint=pg.Viewpoint(ry=math.radians(yaw_deg)),
        lighting=scene.lighting,
        K=scene.K,
    )
    return np.asarray(out.image)


def test_oracle_zero_budget_renders_hint(hemisphere16):
    # with no optimization budget the projector returns the render at the hint
    sc = hemisphere16
    proj = OracleProjector.from_scene(sc, fit_budget=0)
    hint_v = np.zeros(6)
    hint_l = sc.lighting.as_array()
    res = proj.project(sc.image, hint_v, hint_l)
    assert isinstance(res, ProjectionResult)
    expect = np.asarray(render(sc.depth, sc.albedo, lighting=sc.lighting, K=sc.K).image)
    assert np.allclose(res.image, expect, atol=1e-5)
    assert np.allclose(res.viewpoint, hint_v, atol=1e-12)


def test_oracle_recovers_yaw_from_bad_hint(hemisphere64):
    # pseudo is an exact render at yaw 10; the hint starts 3 degrees off.
    # an exhaustive yaw grid (the oracle for the oracle) bottoms out at 10,
    # and the fitted projector must land within a degree of that
    sc = hemisphere64
    pseudo = _on_manifold_pseudo(sc, 10.0)
    grid = np.radians(np.arange(0.0, 20.0001, 0.25))
    residuals = [
        np.abs(_on_manifold_pseudo(sc, math.degrees(y)) - pseudo).mean() for y in grid
    ]
    grid_best = math.degrees(grid[int(np.argmin(residuals))])
    assert grid_best == pytest.approx(10.0, abs=0.25)

    proj = OracleProjector.from_scene(sc, fit_budget=300, seeds=SeedPolicy(0))
    hint_v = np.zeros(6)
    hint_v[1] = math.radians(7.0)
    res = proj.project(pseudo, hint_v, sc.lighting.as_array())
    assert res.converged
    assert math.degrees(res.viewpoint[1]) == pytest.approx(grid_best, abs=1.0)
    assert res.residual < 0.01


def test_oracle_projection_reduces_residual(hemisphere16):
    # off-manifold pseudo (wrong shape): the projected image must sit closer
    # to the oracle manifold than a raw render at the hint does
    sc = hemisphere16
    prior = pg.build_prior(pg.PriorSpec(), 16, 16, mask=sc.mask)
    pseudo = np.asarray(
        render(prior, sc.albedo, viewpoint=pg.Viewpoint(ry=0.15), lighting=sc.lighting, K=sc.K).image
    )
    hint_v = np.zeros(6)
    hint_v[1] = 0.15
    proj = OracleProjector.from_scene(sc, fit_budget=150, seeds=SeedPolicy(0))
    res = proj.project(pseudo, hint_v, sc.lighting.as_array())
    init = np.abs(
        np.asarray(render(sc.depth, sc.albedo, viewpoint=pg.Viewpoint.from_array(hint_v), lighting=sc.lighting, K=sc.K).image)
        - pseudo
    ).mean()
    assert res.residual < init


def test_oracle_batch_matches_sequential(hemisphere16):
    sc = hemisphere16
    pseudos = np.stack([_on_manifold_pseudo(sc, 4.0), _on_manifold_pseudo(sc, -6.0)])
    hints_v = np.zeros((2, 6))
    hints_v[0, 1] = math.radians(4.0)
    hints_v[1, 1] = math.radians(-6.0)
    hints_l = np.stack([sc.lighting.as_array()] * 2)

    a = OracleProjector.from_scene(sc, fit_budget=40, seeds=SeedPolicy(9))
    batch = a.project_batch(pseudos, hints_v, hints_l, stage=2, start_index=5)
    b = OracleProjector.from_scene(sc, fit_budget=40, seeds=SeedPolicy(9))
    one = [
        b.project(pseudos[i], hints_v[i], hints_l[i], stage=2, index=5 + i)
        for i in range(2)
    ]
    for got, want in zip(batch, one):
        assert np.allclose(got.image, want.image, atol=1e-6)
        assert got.residual == pytest.approx(want.residual, abs=1e-9)


def test_oracle_noise_is_seeded(hemisphere16):
    sc = hemisphere16
    pseudo = _on_manifold_pseudo(sc, 5.0)
    hint_v = np.zeros(6)
    hint_v[1] = math.radians(5.0)
    mk = lambda: OracleProjector.from_scene(
        sc, fit_budget=0, noise_level=0.02, seeds=SeedPolicy(3)
    )
    r1 = mk().project(pseudo, hint_v, sc.lighting.as_array(), stage=2, index=7)
    r2 = mk().project(pseudo, hint_v, sc.lighting.as_array(), stage=2, index=7)
    assert np.array_equal(r1.image, r2.image)
    r3 = mk().project(pseudo, hint_v, sc.lighting.as_array(), stage=2, index=8)
    assert not np.array_equal(r1.image, r3.image)
    clean = OracleProjector.from_scene(sc, fit_budget=0).project(
        pseudo, hint_v, sc.lighting.as_array()
    )
    assert np.abs(r1.image - clean.image).max() <= 0.02 + 1e-9


def test_replay_projector_roundtrip(tmp_path, hemisphere16, rng):
    sc = hemisphere16
    frames = [rng.uniform(0, 1, (16, 16, 3)) for _ in range(3)]
    for i, f in enumerate(frames):
        write_png(tmp_path / f"proj_{i:03d}.png", f)
    proj = ReplayProjector(tmp_path)
    proj.require_count(3)
    pseudo = sc.image
    for i in range(3):
        res = proj.project(pseudo, np.zeros(6), sc.lighting.as_array(), index=i)
        assert res.converged
        assert np.abs(res.image - frames[i]).max() <= 0.5 / 255.0 + 1e-9


def test_replay_projector_missing_files(tmp_path, rng):
    write_png(tmp_path / "proj_000.png", rng.uniform(0, 1, (8, 8, 3)))
    proj = ReplayProjector(tmp_path)
    with pytest.raises(FileNotFoundError, match="missing 2 projection"):
        proj.require_count(3)


def test_replay_projector_shape_mismatch(tmp_path, rng):
    write_png(tmp_path / "proj_000.png", rng.uniform(0, 1, (8, 8, 3)))
    proj = ReplayProjector(tmp_path)
    with pytest.raises(ValueError, match="shape"):
        proj.project(np.zeros((16, 16, 3)), np.zeros(6), np.array([0.0, 0.0, 1.0, 0.0]))
