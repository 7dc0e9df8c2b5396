import filecmp
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_knn_classify
from rsmanifold.errors import DataError, DomainError, ShapeError
from rsmanifold.pipeline import (HsiCube, LabelRaster, evaluate, first_n_split, knn_classify,
                                 read_envi, read_labels, synth_hsi, write_envi, write_labels)
from rsmanifold.pipeline.cli import main, read_table
from rsmanifold.pipeline.envi import default_data_path
from rsmanifold.pipeline.synth import class_signatures, synth_detection


# -- containers ----------------------------------------------------------------

def test_cube_validation_and_views():
    data = np.arange(24, dtype=float).reshape(2, 3, 4)
    cube = HsiCube(data, wavelengths=[500.0, 600.0])
    assert (cube.bands, cube.rows, cube.cols) == (2, 3, 4)
    np.testing.assert_array_equal(cube.pixels()[5], data[:, 1, 1])
    assert HsiCube.from_rcb(cube.rcb(), cube.wavelengths) == cube
    with pytest.raises(DomainError):
        HsiCube(-data)
    with pytest.raises(ShapeError):
        HsiCube(data, wavelengths=[1.0])
    with pytest.raises(DomainError):
        LabelRaster(np.array([[0.5, 1.0]]))


def test_first_n_split_raster_order():
    labels = np.array([[1, 2, 0], [1, 1, 2], [2, 0, 1]])
    train, test = first_n_split(labels, 2)
    np.testing.assert_array_equal(train, [0, 1, 3, 5])
    np.testing.assert_array_equal(test, [4, 6, 8])


# -- synthetic scenes ------------------------------------------------------------

def test_synth_noise_free_pixels_equal_signatures():
    cube, raster = synth_hsi(7, rows=12, cols=10, bands=8, classes=3, noise_sigma=0.0,
                             mixing_width=0.0)
    sigs = class_signatures(np.random.default_rng(7), 3, 8)
    np.testing.assert_array_equal(cube.pixels(), sigs[raster.flat() - 1])
    assert np.all(sigs >= 0.05)
    assert set(raster.classes) == {1, 2, 3}


def test_synth_deterministic_and_seed_sensitive():
    a, la = synth_hsi(3)
    b, lb = synth_hsi(3)
    c, _ = synth_hsi(4)
    assert a == b and la == lb
    assert not np.array_equal(a.data, c.data)


def test_synth_raw_nearest_neighbour_floor():
    cube, raster = synth_hsi(42)
    x, y = cube.pixels(), raster.flat()
    train, test = first_n_split(y, 10)
    report = evaluate(knn_classify(x[train], y[train], x[test]), y[test])
    assert report.overall_accuracy >= 0.8


def test_synth_invalid_counts():
    with pytest.raises(DomainError):
        synth_hsi(0, classes=1)
    with pytest.raises(DomainError):
        synth_hsi(0, rows=0)


def test_detection_scene_targets():
    cube, raster, target = synth_detection(0)
    assert set(raster.classes) == {1, 2}
    assert np.sum(raster.flat() == 2) == round(0.05 * 24 * 24)
    assert target.shape == (30,)


# -- kNN and evaluation -----------------------------------------------------------

def test_knn_exact_match_and_forced_tie():
    train = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 6.0]])
    labels = np.array([2, 2, 1, 1])
    assert knn_classify(train, labels, train[[2]], k=1)[0] == 1
    assert knn_classify(train, labels, np.array([[3.0, 3.0]]), k=4)[0] == 1


def test_knn_distance_tie_goes_to_smaller_index():
    train = np.array([[-1.0], [1.0]])
    assert knn_classify(train, np.array([7, 3]), np.array([[0.0]]), k=1)[0] == 7


def test_knn_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 4, size=(50, 2)).astype(float)
    y = rng.integers(1, 4, size=50)
    test = rng.integers(0, 4, size=(30, 2)).astype(float)
    np.testing.assert_array_equal(knn_classify(x, y, test, k=3),
                                  brute_knn_classify(x, y, test, 3))


def test_knn_k_too_large():
    with pytest.raises(DomainError):
        knn_classify(np.zeros((3, 2)), [1, 2, 3], np.zeros((1, 2)), k=4)


def test_evaluate_perfect_and_chance():
    truth = np.array([1, 1, 2, 2])
    r = evaluate(truth, truth)
    assert r.overall_accuracy == 1.0 and r.kappa == 1.0
    r = evaluate(np.ones(4, dtype=int), truth)
    assert r.overall_accuracy == 0.5 and r.kappa == 0.0


def test_evaluate_hand_confusion():
    confusion = np.array([[5, 1, 0], [1, 4, 1], [0, 1, 5]])
    truth, pred = [], []
    for t in range(3):
        for p in range(3):
            truth += [t + 1] * confusion[t, p]
            pred += [p + 1] * confusion[t, p]
    r = evaluate(np.array(pred), np.array(truth))
    np.testing.assert_array_equal(r.confusion, confusion)
    assert r.overall_accuracy == pytest.approx(14 / 18, abs=1e-15)
    # p_e = (6*6 * 3) / 18^2 = 1/3, kappa = (7/9 - 1/3) / (2/3) = 2/3
    assert r.kappa == pytest.approx(2 / 3, abs=1e-15)
    np.testing.assert_array_equal(r.confusion.sum(1), [6, 6, 6])


def test_evaluate_ignores_unlabelled_and_checks_lengths():
    r = evaluate(np.array([1, 2, 2]), LabelRaster(np.array([[1, 0, 2]])))
    assert r.overall_accuracy == 1.0
    with pytest.raises(ShapeError):
        evaluate(np.array([1, 2]), np.array([1, 2, 3]))
    with pytest.raises(DomainError):
        evaluate(np.array([1, 2]), np.array([0, 0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3)), min_size=1, max_size=40))
def test_kappa_bounded_by_accuracy(pairs):
    pred = np.array([p for p, _ in pairs])
    truth = np.array([t for _, t in pairs])
    r = evaluate(pred, truth)
    assert r.kappa <= r.overall_accuracy + 1e-12
    diagonal = np.count_nonzero(r.confusion - np.diag(np.diag(r.confusion))) == 0
    assert (abs(r.kappa - 1.0) < 1e-12) == diagonal


# -- ENVI ------------------------------------------------------------------------

def float32_cube(shape=(3, 2, 2), seed=0, wavelengths=True):
    data = np.random.default_rng(seed).uniform(0, 1, size=shape).astype(np.float32)
    wl = np.linspace(400, 900, shape[0]) if wavelengths else None
    return HsiCube(data.astype(float), wl)


@pytest.mark.parametrize("interleave", ["bsq", "bil", "bip"])
@pytest.mark.parametrize("byte_order", [0, 1])
def test_envi_round_trip_bit_exact(tmp_path, interleave, byte_order):
    cube = float32_cube()
    hdr = tmp_path / "c.hdr"
    write_envi(cube, hdr, interleave=interleave, byte_order=byte_order)
    back = read_envi(hdr)
    assert back == cube
    assert back.data.tobytes() == cube.data.tobytes()


def test_envi_tiny_bsq_round_trip(tmp_path):
    cube = HsiCube(np.array([[[0.25, 1.5], [3.0, 0.125]]]))
    write_envi(cube, tmp_path / "t.hdr")
    assert (tmp_path / "t.img").stat().st_size == 16
    assert read_envi(tmp_path / "t.hdr") == cube


def test_envi_hand_interleaved_encodings_agree(tmp_path):
    # 2 lines x 2 samples x 3 bands; value = 100*band + 10*line + sample
    def v(b, l, s):
        return 100 * b + 10 * l + s

    orders = {
        "bsq": [v(b, l, s) for b in range(3) for l in range(2) for s in range(2)],
        "bil": [v(b, l, s) for l in range(2) for b in range(3) for s in range(2)],
        "bip": [v(b, l, s) for l in range(2) for s in range(2) for b in range(3)],
    }
    cubes = []
    for name, values in orders.items():
        (tmp_path / f"{name}.hdr").write_text(
            "ENVI\nsamples = 2\nlines = 2\nbands = 3\nheader offset = 0\n"
            f"data type = 4\ninterleave = {name}\nbyte order = 0\n")
        (tmp_path / f"{name}.img").write_bytes(np.array(values, dtype="<f4").tobytes())
        cubes.append(read_envi(tmp_path / f"{name}.hdr"))
    assert cubes[0] == cubes[1] == cubes[2]
    assert cubes[0].data[2, 1, 0] == 210


def test_envi_int16_big_endian(tmp_path):
    data = np.arange(12, dtype=float).reshape(3, 2, 2) * 100
    (tmp_path / "i.hdr").write_text("ENVI\nsamples = 2\nlines = 2\nbands = 3\n"
                                    "data type = 2\ninterleave = bsq\nbyte order = 1\n"
                                    "wavelength = {\n 1.5, 2.5,\n 3.5}\n")
    (tmp_path / "i.img").write_bytes(data.astype(">i2").tobytes())
    cube = read_envi(tmp_path / "i.hdr")
    np.testing.assert_array_equal(cube.data, data)
    np.testing.assert_array_equal(cube.wavelengths, [1.5, 2.5, 3.5])


def test_envi_errors(tmp_path):
    cube = float32_cube()
    write_envi(cube, tmp_path / "c.hdr")
    img = tmp_path / "c.img"
    img.write_bytes(img.read_bytes()[:-4])
    with pytest.raises(DataError, match="size mismatch"):
        read_envi(tmp_path / "c.hdr")
    (tmp_path / "m.hdr").write_text("ENVI\nsamples = 2\nlines = 2\ndata type = 4\n"
                                    "interleave = bsq\nbyte order = 0\n")
    with pytest.raises(DataError, match="bands"):
        read_envi(tmp_path / "m.hdr")
    (tmp_path / "d.hdr").write_text("ENVI\nsamples = 2\nlines = 2\nbands = 1\ndata type = 5\n"
                                    "interleave = bsq\nbyte order = 0\n")
    with pytest.raises(DataError, match="data type"):
        read_envi(tmp_path / "d.hdr")
    with pytest.raises(DataError):
        read_envi("")
    with pytest.raises(DataError):
        write_envi(cube, "")
    with pytest.raises(DataError):
        read_envi(tmp_path / "nope.hdr")


def test_label_raster_round_trip(tmp_path):
    raster = LabelRaster(np.array([[0, 1, 2], [3, 3, 1]]))
    write_labels(raster, tmp_path / "l.hdr")
    assert read_labels(tmp_path / "l.hdr") == raster
    assert default_data_path(tmp_path / "l.hdr") == tmp_path / "l.img"


# -- CLI -------------------------------------------------------------------------

def run(*argv):
    return main([str(a) for a in argv])


def end_to_end(folder: Path, capsys):
    folder.mkdir()
    prefix = folder / "scene"
    assert run("synth", "--seed", 42, "--rows", 20, "--cols", 20, "--out", prefix) == 0
    assert run("dr", "--cube", f"{prefix}.hdr", "--labels", f"{prefix}_labels.hdr",
               "--method", "pca", "--dim", 5, "--out", folder / "f.csv") == 0
    assert run("classify", "--labels", f"{prefix}_labels.hdr", "--features", folder / "f.csv",
               "--method", "knn", "--out", folder / "pred.csv") == 0
    capsys.readouterr()
    assert run("eval", "--pred", folder / "pred.csv", "--truth", f"{prefix}_labels.hdr",
               "--out", folder / "report.csv") == 0
    return capsys.readouterr().out


def test_cli_end_to_end_is_byte_identical(tmp_path, capsys):
    out = end_to_end(tmp_path / "a", capsys)
    assert out.startswith("OA ")
    end_to_end(tmp_path / "b", capsys)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names,
                                               shallow=False)
    assert not mismatch and not errors and len(match) == 7


def test_cli_eval_identical_files(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("pixel,label\n0,1\n1,2\n2,2\n")
    assert run("eval", "--pred", tmp_path / "p.csv", "--truth", tmp_path / "p.csv") == 0
    assert capsys.readouterr().out.strip() == "OA 1.000000 kappa 1.000000"


def test_cli_supervised_method_without_labels(tmp_path, capsys):
    run("synth", "--seed", 1, "--rows", 8, "--cols", 8, "--out", tmp_path / "s")
    code = run("dr", "--cube", tmp_path / "s.hdr", "--method", "lda", "--dim", 2,
               "--out", tmp_path / "f.csv")
    assert code == 1
    assert "needs --labels" in capsys.readouterr().err


def test_cli_unknown_flag_lists_valid_flags(capsys):
    assert run("eval", "--pred", "a", "--truth", "b", "--bogus") == 1
    err = capsys.readouterr().err
    assert "--bogus" in err and "--pred" in err and "--truth" in err
    assert run("nonsense") == 1


def test_cli_data_and_numeric_errors(tmp_path):
    assert run("denoise", "--cube", tmp_path / "missing.hdr", "--k", 2,
               "--out", tmp_path / "o") == 2
    zero = HsiCube(np.zeros((3, 4, 4)))
    write_envi(zero, tmp_path / "z.hdr")
    assert run("denoise", "--cube", tmp_path / "z.hdr", "--k", 2, "--out", tmp_path / "o") == 3


def test_cli_config_precedence(tmp_path):
    run("synth", "--seed", 2, "--rows", 12, "--cols", 12, "--out", tmp_path / "s")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# dimensionality reduction defaults\nmethod = pca\ndim = 3\n"
                   "train-per-class = 4\n")
    assert run("dr", "--config", cfg, "--cube", tmp_path / "s.hdr",
               "--labels", tmp_path / "s_labels.hdr", "--out", tmp_path / "a.csv") == 0
    assert read_table(tmp_path / "a.csv")[1].shape[1] == 3
    assert run("dr", "--config", cfg, "--dim", 2, "--cube", tmp_path / "s.hdr",
               "--out", tmp_path / "b.csv") == 0
    assert read_table(tmp_path / "b.csv")[1].shape[1] == 2
    cfg.write_text("colour = blue\n")
    assert run("dr", "--config", cfg, "--method", "pca", "--dim", 2,
               "--cube", tmp_path / "s.hdr", "--out", tmp_path / "c.csv") == 1


def test_cli_detect_and_stm(tmp_path, capsys):
    run("synth", "--seed", 0, "--scene", "detection", "--rows", 24, "--cols", 24,
        "--out", tmp_path / "d")
    capsys.readouterr()
    assert run("detect", "--cube", tmp_path / "d.hdr", "--labels", tmp_path / "d_labels.hdr",
               "--out", tmp_path / "scores.csv") == 0
    auc = float(capsys.readouterr().out.split()[1])
    assert auc >= 0.95
    lines = (tmp_path / "scores.csv").read_text().splitlines()
    assert len(lines) == 25 and len(lines[1].split(",")) == 24
    assert run("detect", "--cube", tmp_path / "d.hdr", "--target", tmp_path / "d_target.csv",
               "--metric", "identity", "--out", tmp_path / "s2.csv") == 0
    assert run("detect", "--cube", tmp_path / "d.hdr", "--out", tmp_path / "s3.csv") == 1

    run("synth", "--seed", 5, "--rows", 16, "--cols", 16, "--classes", 2, "--out", tmp_path / "c")
    assert run("classify", "--labels", tmp_path / "c_labels.hdr", "--cube", tmp_path / "c.hdr",
               "--method", "stm", "--train-per-class", 5, "--out", tmp_path / "p.csv") == 0
    capsys.readouterr()
    assert run("eval", "--pred", tmp_path / "p.csv", "--truth", tmp_path / "c_labels.hdr") == 0
    assert float(capsys.readouterr().out.split()[1]) >= 0.8
