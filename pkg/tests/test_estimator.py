import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import photogeo as pg
from photogeo.estimator import ShapeRefiner


@pytest.fixture(scope="module")
def fitted():
    sc = pg.make_scene("hemisphere", 16, 16)
    proj = pg.OracleProjector.from_scene(sc, fit_budget=20)
    r = ShapeRefiner(
        stages=2, samples_per_stage=4, projector=proj, iters=(25, 25, 25), seed=3
    )
    r.fit(sc.image, mask=sc.mask)
    return sc, r


def test_get_set_params_roundtrip():
    r = ShapeRefiner(stages=3, seed=7, learning_rate=0.02)
    params = r.get_params()
    assert params["stages"] == 3
    assert params["seed"] == 7
    assert params["learning_rate"] == 0.02
    r.set_params(stages=1, symmetry="on")
    assert r.stages == 1 and r.symmetry == "on"
    with pytest.raises(ValueError):
        r.set_params(not_a_param=1)


def test_clone_preserves_params_and_unfits(fitted):
    _, r = fitted
    r2 = clone(r)
    p1, p2 = r.get_params(), r2.get_params()
    # the projector is deep-copied by clone; compare it by type only
    assert type(p2.pop("projector")) is type(p1.pop("projector"))
    assert p1 == p2
    assert not hasattr(r2, "depth_")


def test_requires_projector():
    r = ShapeRefiner()
    with pytest.raises(ValueError, match="requires a manifold projector"):
        r.fit(np.zeros((8, 8, 3)))


def test_rejects_bad_image():
    sc = pg.make_scene("hemisphere", 16, 16)
    proj = pg.OracleProjector.from_scene(sc, fit_budget=0)
    r = ShapeRefiner(projector=proj)
    with pytest.raises(ValueError, match="\\(H, W\\)"):
        r.fit(np.zeros((8, 8, 2)))  # bad channel count
    with pytest.raises(ValueError, match="lie in"):
        r.fit(2.0 * np.ones((8, 8, 3)))  # out of range
    with pytest.raises(ValueError, match="non-finite"):
        r.fit(np.full((8, 8, 3), np.nan))


def test_unfitted_access_raises():
    r = ShapeRefiner()
    for call in (r.transform, r.rotate, lambda: r.relight([(0.0, 0.0)])):
        with pytest.raises(NotFittedError):
            call()


def test_fit_sets_attributes(fitted):
    sc, r = fitted
    assert r.depth_.shape == (16, 16)
    assert r.albedo_.shape == (16, 16, 3)
    assert r.normals_.shape == (16, 16, 3)
    assert np.allclose(np.linalg.norm(r.normals_, axis=-1), 1.0, atol=1e-6)
    assert r.lighting_.shape == (4,)
    assert len(r.snapshots_) == 2 + 1  # prior + one per stage
    assert r.camera_.width == 16 and r.camera_.height == 16
    assert r.n_iter_ > 0
    # depth stays inside the modeled box
    assert r.depth_.min() > 0.9 and r.depth_.max() < 1.3


def test_transform_returns_depth(fitted):
    _, r = fitted
    assert r.transform() is r.depth_
    # transform ignores X by sklearn convention here; passing it is harmless
    assert r.transform(np.zeros((16, 16, 3))) is r.depth_


def test_fit_transform_matches_fit_then_transform():
    sc = pg.make_scene("hemisphere", 16, 16)
    proj = pg.OracleProjector.from_scene(sc, fit_budget=20)
    kw = dict(stages=1, samples_per_stage=4, projector=proj, iters=(25, 25, 25), seed=3)
    d1 = ShapeRefiner(**kw).fit_transform(sc.image, mask=sc.mask)
    d2 = ShapeRefiner(**kw).fit(sc.image, mask=sc.mask).transform()
    assert np.array_equal(d1, d2)


def test_rotate_and_relight_frames(fitted):
    _, r = fitted
    frames = r.rotate(extent_degrees=10.0, frames=5)
    assert len(frames) == 5
    assert all(f.shape == (16, 16, 3) for f in frames)
    assert not np.allclose(frames[0], frames[-1], atol=1e-4)
    lit = r.relight([(-0.5, 0.3), (0.0, 0.3), (0.5, 0.3)])
    assert len(lit) == 3
    assert all(f.min() >= 0.0 and f.max() <= 1.0 for f in lit)
