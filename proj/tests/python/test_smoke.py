import json

import numpy as np
import pytest

import evloop


@pytest.fixture(scope="module")
def scenes():
    return [evloop.generate_scene(grade=g % 4, seed=100 + i, image_size=128) for i, g in enumerate(range(16))]


@pytest.fixture(scope="module")
def model(scenes, tmp_path_factory):
    images = [s["image"] for s in scenes]
    grades = [s["grade"] for s in scenes]
    m = evloop.train(images, grades, input_size=64, epochs=2, lr=1e-3, batch_size=4, seed=3)
    path = tmp_path_factory.mktemp("bundle") / "model"
    m.save(str(path))
    return evloop.load_model(str(path))


def test_scene_layout(scenes):
    s = scenes[3]
    assert s["image"].shape == (3, 128, 128)
    assert s["image"].dtype == np.float32
    assert 0.0 <= s["image"].min() and s["image"].max() <= 1.0
    assert set(s["masks"]) == {"micro_dot", "dark_blob", "bright_blob", "diffuse_patch"}
    assert s["masks"]["dark_blob"].dtype == np.bool_
    assert any(m.any() for m in s["masks"].values())


def test_scene_is_deterministic():
    a = evloop.generate_scene(grade=2, seed=9, image_size=96)
    b = evloop.generate_scene(grade=2, seed=9, image_size=96)
    np.testing.assert_array_equal(a["image"], b["image"])


def test_png_round_trip(tmp_path, scenes):
    img = scenes[0]["image"]
    evloop.write_png(str(tmp_path / "x.png"), img)
    back = evloop.read_png(str(tmp_path / "x.png"))
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6


def test_otsu_splits_two_levels():
    m = np.zeros((16, 16), np.float32)
    m[4:8, 4:8] = 1.0
    mask, th, degenerate = evloop.binarize_otsu(m)
    assert not degenerate
    np.testing.assert_array_equal(mask, m > 0.5)
    assert 0.0 < th <= 1.0


def test_inpaint_keeps_unmasked_pixels(scenes):
    img = scenes[1]["image"]
    mask = np.zeros(img.shape[1:], bool)
    mask[60:70, 60:70] = True
    out = evloop.inpaint(img, mask, 3)
    np.testing.assert_array_equal(out[:, ~mask], img[:, ~mask])


def test_combine_maps_weights():
    a = np.ones((4, 4), np.float32)
    fused = evloop.combine_maps([a, 2 * a], 0.6)
    np.testing.assert_allclose(fused, np.exp(-0.6) + 2 * np.exp(-1.2), rtol=1e-6)


def test_metrics():
    assert evloop.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert evloop.quadratic_weighted_kappa([0, 1, 2, 3], [0, 1, 2, 3], 4) == pytest.approx(1.0)
    with pytest.raises(evloop.DegenerateError):
        evloop.quadratic_weighted_kappa([1, 1], [1, 1], 4)


def test_froc_credits_hit():
    lesions = np.zeros((20, 20), bool)
    lesions[5, 5] = True
    heat = np.zeros((20, 20), np.float32)
    heat[5, 6] = 1.0
    heat[15, 15] = 0.5
    dets, count = evloop.froc_detections(heat, lesions, radius=2)
    assert count == 1
    assert dets[0][:2] == (5, 6) and dets[0][3] == 1
    assert dets[1][:2] == (15, 15) and dets[1][3] == 0
    assert evloop.radius_from_percent(1.4, 128) == 2


def test_model_explain(model, scenes):
    assert model.input_size == 64 and model.preset == "vgg_mini"
    y = model.predict(scenes[2]["image"])
    assert np.isfinite(y)
    out = model.explain(scenes[2]["image"], method="saliency", t_max=3)
    assert out["map"].shape == (64, 64)
    assert out["prediction"] == pytest.approx(y, rel=1e-5)
    if out["referable"]:
        assert len(out["trace"]["iterations"]) <= 2
        assert out["augmented_map"].shape == (64, 64)
        assert (out["augmented_map"] >= 0).all()
    json.dumps(out["trace"])


def test_errors_map_to_exceptions(model):
    with pytest.raises(evloop.LookupError):
        model.explain(np.zeros((3, 64, 64), np.float32), method="no_such_method")
    with pytest.raises(evloop.ShapeError):
        evloop.inpaint(np.zeros((2, 8, 8), np.float32), np.zeros((8, 8), bool))
    with pytest.raises(evloop.IoError):
        evloop.read_png("/nonexistent/file.png")
