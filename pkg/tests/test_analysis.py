import csv

import numpy as np
import pytest

from nasaswin.analysis import analyze
from nasaswin.data import ManifestEntry, load_manifest, synth, write_manifest
from nasaswin.imageio import write_image
from nasaswin.residual import DenoiserSpec


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return load_manifest(synth(root, 48, seed=0, size=64, splits=("test",))["test"])


def test_constant_image_gives_zero_maps(tmp_path):
    write_image(tmp_path / "c.png", np.full((3, 16, 16), 0.4))
    write_manifest(tmp_path / "m.csv", [ManifestEntry(str(tmp_path / "c.png"), 0, "flat")])
    res = analyze(load_manifest(tmp_path / "m.csv"))
    s = res.sources["flat"].stats
    assert s.count == 1 and not s.mean_residual.any()


def test_grid_source_has_comb_peaks(corpus, tmp_path):
    res = analyze(corpus, DenoiserSpec.parse("median:3"), tmp_path)
    assert res.sources["grid"].contrast >= 5
    assert res.sources["nature"].contrast < 2
    names = {p.name for p in res.files}
    assert {"grid_residual.pgm", "grid_spectrum.csv", "nature_spectrum.pgm", "summary.csv"} <= names
    with open(tmp_path / "summary.csv") as fh:
        rows = {r["source"]: r for r in csv.DictReader(fh)}
    assert int(rows["grid"]["count"]) == 24 and float(rows["grid"]["peak_contrast"]) == res.sources["grid"].contrast


def test_spectrum_csv_uses_signed_bins(corpus, tmp_path):
    analyze(corpus, out_dir=tmp_path)
    with open(tmp_path / "grid_spectrum.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 64 * 64
    assert rows[0]["bin_y"] == "-32" and rows[-1]["bin_x"] == "31"


def test_order_invariance(corpus, tmp_path):
    a = analyze(corpus)
    corpus.entries.reverse()
    try:
        b = analyze(corpus, threads=3)
    finally:
        corpus.entries.reverse()
    for name in a.sources:
        np.testing.assert_allclose(a.sources[name].stats.mean_log_spectrum, b.sources[name].stats.mean_log_spectrum, atol=1e-9)
        np.testing.assert_allclose(a.sources[name].stats.mean_residual, b.sources[name].stats.mean_residual, atol=1e-9)


def test_unreadable_files_skipped_and_counted(tmp_path):
    write_image(tmp_path / "ok.png", np.full((3, 8, 8), 0.5))
    (tmp_path / "bad.png").write_bytes(b"garbage")
    write_manifest(
        tmp_path / "m.csv",
        [ManifestEntry(str(tmp_path / "ok.png"), 0, "s"), ManifestEntry(str(tmp_path / "bad.png"), 0, "s")],
    )
    res = analyze(load_manifest(tmp_path / "m.csv"))
    assert res.skipped == 1 and res.sources["s"].skipped == 1 and res.sources["s"].stats.count == 1


def test_png_heatmaps(corpus, tmp_path):
    res = analyze(corpus, out_dir=tmp_path, heatmap_format="png")
    assert (tmp_path / "grid_residual.png").exists()
    with pytest.raises(ValueError):
        analyze(corpus, heatmap_format="tiff")
