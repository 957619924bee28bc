"""SVG report rendering: deterministic bytes, valid documents, CLI wiring."""

import json

import numpy as np

from spectrees import cli, plots, scaling
from spectrees import evaluate as ev
from spectrees.ingest import AsciiGrid
from spectrees.scaling import SweepRow


def small_report():
    ref = [1, 1, 1, 2, 2, 3, 3, 3, 3]
    pred = [1, 1, 2, 2, 2, 3, 3, 1, 3]
    return ev.compute_metrics(ref, pred)


def sweep_rows():
    rows = []
    for fold in range(3):
        for m in (50, 100, 200):
            err = 0.8 * m ** -0.25 + 0.01 * fold
            rows.append(SweepRow(x=float(m), fold=fold, overall_error=err,
                                 macro_error=err * 1.1))
    return rows


def is_svg(path):
    head = path.read_bytes()[:200]
    return head.startswith(b"<?xml") and b"<svg" in head


class TestPlotFunctions:
    def test_confusion_plot_is_valid_svg(self, tmp_path):
        out = tmp_path / "confusion.svg"
        plots.plot_confusion(small_report(), out, names={1: "pine", 2: "spruce"})
        assert is_svg(out)

    def test_error_curve_with_and_without_fit(self, tmp_path):
        rows = sweep_rows()
        xs, oe, _ = scaling.aggregate_sweep(rows)
        fit = scaling.fit_power_law(xs, oe)
        plots.plot_error_curve(rows, fit, tmp_path / "with_fit.svg")
        plots.plot_error_curve(rows, None, tmp_path / "no_fit.svg")
        assert is_svg(tmp_path / "with_fit.svg")
        assert is_svg(tmp_path / "no_fit.svg")
        # the fitted line adds geometry the bare plot lacks
        assert (tmp_path / "with_fit.svg").read_bytes() != \
               (tmp_path / "no_fit.svg").read_bytes()

    def test_chm_plot_is_valid_svg(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = AsciiGrid(ncols=20, nrows=20, xllcorner=0.0, yllcorner=0.0,
                         cellsize=0.5, nodata_value=-9999.0,
                         values=rng.random((20, 20)) * 25)
        plots.plot_chm(grid, tmp_path / "chm.svg", title="stand")
        assert is_svg(tmp_path / "chm.svg")

    def test_rendering_is_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        plots.plot_confusion(small_report(), a)
        plots.plot_confusion(small_report(), b)
        assert a.read_bytes() == b.read_bytes()


class TestReportCommand:
    def test_report_writes_text_and_figures(self, tmp_path):
        report = small_report()
        doc = report.as_dict()
        doc["overall_accuracy_ci95"] = [0.5, 0.95]
        metrics_path = tmp_path / "metrics.json"
        metrics_path.write_text(json.dumps(doc), encoding="utf-8")
        sweep_path = tmp_path / "sweep.csv"
        scaling.write_sweep_rows(sweep_path, sweep_rows(), stamp="unit")
        out = tmp_path / "report"

        rc = cli.main(["report", "--metrics", str(metrics_path),
                       "--sweep", str(sweep_path), "--out", str(out)])
        assert rc == 0
        text = (out / "report.txt").read_text(encoding="utf-8")
        assert "overall accuracy" in text.lower()
        assert "95% CI (overall accuracy): [0.5000, 0.9500]" in text
        assert is_svg(out / "confusion.svg")
        assert is_svg(out / "error_curve.svg")

    def test_report_without_sweep_skips_error_curve(self, tmp_path):
        doc = small_report().as_dict()
        metrics_path = tmp_path / "metrics.json"
        metrics_path.write_text(json.dumps(doc), encoding="utf-8")
        out = tmp_path / "report"
        assert cli.main(["report", "--metrics", str(metrics_path),
                         "--out", str(out)]) == 0
        assert (out / "confusion.svg").exists()
        assert not (out / "error_curve.svg").exists()
