import math

import pytest

import ssg


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("ssg")
    small = dict(seed=2, train_scenes=8, val_scenes=2, test_scenes=3, feature_dim=8,
                 gen_min_points=8, gen_max_points=16)
    ssg.gen(d / "corpus", **small)
    ssg.stats(d / "corpus" / "train", d / "stats.json")
    ssg.train(d / "corpus" / "train", d / "corpus" / "val", d / "model.ckpt",
              hidden=8, point_widths=[8, 8], max_points=16, epochs=2, seed=2)
    return d


def test_inverse_softmax():
    g = ssg.inverse_softmax([0.8, 0.2])
    assert g[0] == pytest.approx(math.log(4) / 2, abs=1e-12)
    assert sum(g) == pytest.approx(0.0, abs=1e-15)
    p = [0.1, 0.2, 0.7]
    assert ssg.softmax(ssg.inverse_softmax(p)) == pytest.approx(p, abs=1e-12)


def test_quartiles():
    assert ssg.quartiles([1, 2, 3, 4]) == (1.75, 2.5, 3.25)


def test_config_keys():
    keys = ssg.config_keys()
    for k in ("no-cr", "fixed-alpha", "cr-edge-combine", "drop-top-frac", "exclude-none"):
        assert k in keys


def test_evaluate(run_dir):
    d = run_dir
    cr = ssg.evaluate(d / "corpus" / "test", d / "model.ckpt", d / "stats.json")
    off = ssg.evaluate(d / "corpus" / "test", d / "model.ckpt", no_cr=True)
    one = ssg.evaluate(d / "corpus" / "test", d / "model.ckpt", d / "stats.json", fixed_alpha=1.0)
    for k in ("recall_rel", "recall_obj", "recall_pred", "mrecall_obj", "mrecall_pred"):
        assert 0.0 <= cr[k] <= 1.0
        assert one[k] == off[k]


def test_predict(run_dir):
    d = run_dir
    g = ssg.predict(d / "corpus" / "test" / "scene_00000.json", d / "model.ckpt", d / "stats.json")
    assert g["nodes"]
    assert sum(g["nodes"][0]["distribution"]) == pytest.approx(1.0, abs=1e-9)


def test_errors(run_dir):
    with pytest.raises(ssg.ConfigError):
        ssg.run("eval", {"no-such-key": 1})
    with pytest.raises(ssg.ConfigError):
        ssg.evaluate(run_dir / "corpus" / "test", run_dir / "model.ckpt", run_dir / "stats.json", fixed_alpha=0.0)
    with pytest.raises(ssg.SsgError):
        ssg.stats(run_dir / "missing", run_dir / "x.json")
