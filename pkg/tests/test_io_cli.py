import math
import os

import numpy as np
import pytest
from PIL import Image

from uaflow import cli
from uaflow import io as uio
from uaflow.data import FeatureField, LabelDictionary
from uaflow.exceptions import ConfigError
from uaflow.manifolds import SO3

SMALL = ["height=20", "width=20", "k=4", "regions=3"]


def run_cli(tmp_path, name, command, *sets, config=None):
    out = str(tmp_path / name)
    argv = [command, "--out", out]
    if config:
        argv += ["--config", config]
    for s in sets:
        argv += ["--set", s]
    return cli.main(argv), out


def read_stats(out):
    stats = {}
    with open(os.path.join(out, "stats.txt")) as fh:
        for line in fh:
            k, _, v = line.partition(" = ")
            stats[k] = v.strip()
    return stats


def test_dictionary_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    labels = SO3().random_point(rng, 5)
    p = tmp_path / "d.txt"
    uio.write_dictionary(p, LabelDictionary(labels, "so3"))
    back = uio.read_dictionary(p)
    assert back.manifold == "so3" and np.array_equal(back.labels, labels)
    assert p.read_text().splitlines()[0] == "uaflow-dictionary 1"


def test_field_roundtrip_exact(tmp_path):
    pts = np.random.default_rng(1).random((12, 3)) * 1e-7
    field = FeatureField(pts, "euclidean", 3, 4, {"channels": 3, "note": "x"})
    p = tmp_path / "f.txt"
    uio.write_field(p, field)
    back = uio.read_field(p)
    assert np.array_equal(back.points, pts) and (back.height, back.width) == (3, 4)
    assert back.meta == {"channels": 3, "note": "x"}


def test_reader_rejects_foreign_and_newer_files(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(ConfigError):
        uio.read_dictionary(p)
    p.write_text("uaflow-dictionary 9\nmanifold so3\nshape 0\n")
    with pytest.raises(ConfigError):
        uio.read_dictionary(p)


def test_images_8_and_16_bit(tmp_path):
    u = np.random.default_rng(2).random((5, 6))
    uio.write_image(tmp_path / "a.png", u, bits=16)
    assert np.max(np.abs(uio.read_image(tmp_path / "a.png") - u)) <= 0.5 / 65535 + 1e-12
    rgb = np.random.default_rng(3).random((5, 6, 3))
    uio.write_image(tmp_path / "b.png", rgb)
    assert np.max(np.abs(uio.read_image(tmp_path / "b.png") - rgb)) <= 0.5 / 255 + 1e-12


def test_labeling_png_indexed(tmp_path):
    lab = np.arange(20) % 7
    uio.write_labeling(tmp_path / "l.png", lab, 4, 5)
    img = Image.open(tmp_path / "l.png")
    assert img.mode == "P"
    assert np.array_equal(uio.read_labeling(tmp_path / "l.png").ravel(), lab)
    rgb = np.asarray(img.convert("RGB")).reshape(-1, 3)
    assert np.array_equal(rgb, uio.PALETTE[lab])


def test_config_parsing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nsigma = inf\nk = 3  # trailing\ninput = img.png\n")
    cfg = cli.load_config(str(p), ["alpha=5", "verbose=yes"])
    assert cfg["sigma"] == math.inf and cfg["k"] == 3 and cfg["alpha"] == 5.0
    assert cfg["verbose"] is True
    assert cfg["input"] == os.path.join(str(tmp_path), "img.png")
    with pytest.raises(ConfigError):
        cli.load_config(None, ["nonsense=1"])
    with pytest.raises(ConfigError):
        cli.load_config(None, ["k=three"])


def test_exit_codes(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "a", "uaf", "bogus=1")
    assert code == 2
    code, _ = run_cli(tmp_path, "b", "uaf", "input=/nonexistent.png")
    assert code == 2
    code, _ = run_cli(tmp_path, "c", "uaf", "rho=-1")
    assert code == 2
    code, _ = run_cli(tmp_path, "d", "uaf", "max_steps=1", *SMALL)
    assert code == 4
    assert "error" in capsys.readouterr().err


def test_init_k1_constant_and_deterministic(tmp_path):
    code, out = run_cli(tmp_path, "a", "init", *SMALL[:2], "k=1")
    assert code == 0
    assert np.all(uio.read_labeling(os.path.join(out, "labeling.png")) == 0)
    _, out1 = run_cli(tmp_path, "b", "init", *SMALL)
    _, out2 = run_cli(tmp_path, "c", "init", *SMALL)
    for name in ("dictionary.txt", "labeling.png"):
        with open(os.path.join(out1, name), "rb") as a, open(os.path.join(out2, name), "rb") as b:
            assert a.read() == b.read()


def test_uaf_outputs_and_manifest(tmp_path):
    code, out = run_cli(tmp_path, "u", "uaf", *SMALL, "verbose=true")
    assert code == 0
    for name in ("dictionary.txt", "labeling.png", "ground_truth.png", "histogram.png",
                 "stats.txt", "entropy.txt", "trace.txt", "manifest.txt"):
        assert os.path.exists(os.path.join(out, name)), name
    manifest = open(os.path.join(out, "manifest.txt")).read()
    assert "command = uaf" in manifest and "sigma = inf" in manifest and "k = 4" in manifest
    stats = read_stats(out)
    assert float(stats["final_entropy"]) < 1e-3
    assert float(stats["accuracy"]) >= 0.9
    last = open(os.path.join(out, "entropy.txt")).read().splitlines()[-1]
    assert float(last.split("entropy=")[1]) < 1e-3


def test_uaf_alpha_zero_equals_flow(tmp_path):
    _, init = run_cli(tmp_path, "i", "init", *SMALL)
    dic = os.path.join(init, "dictionary.txt")
    _, a = run_cli(tmp_path, "a", "uaf", *SMALL, "alpha=0", f"dictionary={dic}")
    _, b = run_cli(tmp_path, "b", "flow", *SMALL, f"dictionary={dic}")
    for name in ("labeling.png", "entropy.txt"):
        with open(os.path.join(a, name), "rb") as fa, open(os.path.join(b, name), "rb") as fb:
            assert fa.read() == fb.read()


def test_flow_noise_free_nearest_label(tmp_path):
    _, init = run_cli(tmp_path, "i", "init", *SMALL, "noise=0", "k=3")
    dic = os.path.join(init, "dictionary.txt")
    code, out = run_cli(tmp_path, "f", "flow", *SMALL, "noise=0", "neighborhood=1",
                        f"dictionary={dic}")
    assert code == 0
    nn = uio.read_labeling(os.path.join(init, "labeling.png"))
    assert np.array_equal(uio.read_labeling(os.path.join(out, "labeling.png")), nn)


def test_cluster_commands_on_field_files(tmp_path):
    rng = np.random.default_rng(4)
    a = 2.0
    sign = np.where(rng.random(64) < 0.5, -1.0, 1.0)
    pts = sign[:, None] * a + 0.05 * rng.standard_normal((64, 2))
    path = tmp_path / "field.txt"
    uio.write_field(path, FeatureField(pts, "euclidean", 8, 8))
    code, out = run_cli(tmp_path, "s", "cluster", f"input={path}", "k=2")
    assert code == 0
    M = uio.read_dictionary(os.path.join(out, "dictionary.txt")).labels
    assert np.allclose(np.sort(M[:, 0]), [-a, a], atol=0.05)
    code, out = run_cli(tmp_path, "e", "cluster", f"input={path}", "k=2", "method=em")
    w = sorted(float(x) for x in read_stats(out)["weights"].split())
    n_pos = int((sign > 0).sum())
    assert np.allclose(w, sorted([n_pos / 64, 1 - n_pos / 64]), atol=0.02)
    uio.write_field(path, FeatureField(np.ones((16, 2)), "euclidean", 4, 4))
    code, out = run_cli(tmp_path, "same", "cluster", f"input={path}", "k=1")
    assert code == 0
    assert np.allclose(uio.read_dictionary(os.path.join(out, "dictionary.txt")).labels, 1.0)


def test_so3_outputs_trihedra(tmp_path):
    code, out = run_cli(tmp_path, "r", "uaf", "input=synth:so3", "manifold=so3", "layout=blocks",
                        "regions=2", "height=12", "width=12", "noise=0.2", "k=3")
    assert code == 0
    assert os.path.exists(os.path.join(out, "labels.png"))
    d = uio.read_dictionary(os.path.join(out, "dictionary.txt"))
    SO3().check_point(d.labels)


def test_shipped_configs_listed():
    names = sorted(os.path.basename(p) for p in cli.shipped_configs())
    assert "so3_frames.cfg" in names and "covariance_rotation.cfg" in names
    for p in cli.shipped_configs():
        cli.flow_config(cli.load_config(p))
