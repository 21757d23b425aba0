import csv

import numpy as np
import pytest

from skimattn import plotting as P

BOXES = np.array([[0, 0, 500, 500], [500, 500, 1000, 1000], [0, 500, 100, 1000]])


def test_raster_identity_row_lights_one_box():
    # unit {i} under identity attention scores 1 at i and 0 elsewhere
    A = np.eye(3)
    img = P.raster_scores(BOXES, A[1], size=(10, 10))
    assert img[5:, 5:].min() == 255 and img[:5].max() == 0 and img[5:, :5].max() == 0


def test_raster_intensity_scaling_and_overlap():
    boxes = np.array([[0, 0, 1000, 1000], [0, 0, 500, 500]])
    img = P.raster_scores(boxes, [0.5, 0.2], size=(4, 4))
    assert (img == 255).all()
    img = P.raster_scores(boxes, [0.2, 0.8], size=(4, 4))
    assert img[0, 0] == 255 and img[3, 3] == int(np.floor(255 * 0.25 + 0.5))


def test_raster_all_zero_is_black():
    assert not P.raster_scores(BOXES, np.zeros(3), size=(5, 5)).any()


def test_pgm_is_byte_stable(tmp_path):
    img = P.raster_scores(BOXES, [0.1, 0.7, 0.3], size=(20, 30))
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    P.write_pgm(a, img)
    P.write_pgm(b, img.copy())
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[:3] == ["P2", "30 20", "255"]
    assert np.array_equal(P.read_pgm(a), img)


def test_read_pgm_rejects_other_formats(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_text("P5\n1 1\n255\n0\n")
    with pytest.raises(ValueError):
        P.read_pgm(p)


def test_attention_csv_round_trips_scores(tmp_path):
    scores = np.array([1 / 3, 0.1, 2 / 7])
    p = tmp_path / "a.csv"
    P.write_attention_csv(p, ["a", "b,c", "d"], BOXES, scores)
    with open(p, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["token"] for r in rows] == ["a", "b,c", "d"]
    assert [float(r["score"]) for r in rows] == scores.tolist()
    assert [int(r["x1"]) for r in rows] == [500, 1000, 100]


def is_png(path):
    return path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_figures_written(tmp_path):
    P.plot_attention_map(tmp_path / "m.png", BOXES, [0.2, 0.5, 0.3], unit=[1], title="doc")
    rows = [{"variant": v, "seq_len": n, "median_time_s": 0.01 * n, "peak_mem_mib": 0.5 * n}
            for v in ("a", "b") for n in (8, 32)]
    P.plot_bench(tmp_path / "b.png", rows)
    P.plot_loss_curve(tmp_path / "l.png", [3.0, 2.0, 1.5])
    assert all(is_png(tmp_path / f) for f in ("m.png", "b.png", "l.png"))


def test_png_bytes_repeat(tmp_path):
    for name in ("x.png", "y.png"):
        P.plot_loss_curve(tmp_path / name, [3.0, 2.0, 1.5])
    assert (tmp_path / "x.png").read_bytes() == (tmp_path / "y.png").read_bytes()
