import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from hrmp.bench import dataset_io
from hrmp.bench.cli import main
from hrmp.bench.metrics import confusion, misclassification_error
from hrmp.bench.plot import OUTLIER_COLOR, PALETTE, emit_plot, render_svg
from hrmp.bench.runner import run_benchmark
from hrmp.bench.synthetic import (
    Structure,
    SyntheticSpec,
    four_circles,
    generate_synthetic,
    three_lines,
    two_planes,
)
from hrmp.errors import LengthMismatch, ParseError, SchemaMismatch
from hrmp.geometry import PointSet, residuals
from hrmp.hypothesis import SamplerConfig
from hrmp.pipeline import FitConfig

from .helpers import CIRCLE, HOMOGRAPHY, LINE
from .oracles import brute_force_error

SVG = "{http://www.w3.org/2000/svg}"


def random_labelling(rng, n, k):
    return rng.integers(0, k + 1, n)


class TestMetric:
    def test_perfect(self):
        gt = np.array([0, 1, 1, 2, 2, 0])
        assert misclassification_error(gt, gt) == 0.0

    def test_swapped_ids(self):
        gt = np.array([0, 1, 1, 2, 2, 0])
        assert misclassification_error(np.array([0, 2, 2, 1, 1, 0]), gt) == 0.0

    def test_one_wrong_in_ten(self):
        gt = np.array([1] * 5 + [2] * 5)
        pred = gt.copy()
        pred[0] = 2
        assert misclassification_error(pred, gt) == pytest.approx(10.0)

    def test_outlier_not_matched_to_structure(self):
        # pred calls everything structure 1; 0 cannot be renamed
        assert misclassification_error([1, 1, 1, 1], [0, 0, 1, 1]) == pytest.approx(50.0)
        assert misclassification_error([0, 0, 0, 0], [1, 1, 1, 1]) == pytest.approx(100.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            misclassification_error([0, 1], [0, 1, 1])

    def test_confusion_counts(self):
        C = confusion([0, 1, 1, 2], [0, 1, 2, 2])
        assert C.sum() == 4
        assert C[0, 0] == 1 and C[1, 1] == 1 and C[1, 2] == 1 and C[2, 2] == 1

    def test_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 40))
            pred = random_labelling(rng, n, int(rng.integers(0, 6)))
            gt = random_labelling(rng, n, int(rng.integers(0, 6)))
            assert misclassification_error(pred, gt) == pytest.approx(brute_force_error(pred, gt), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(1, 7)))
def test_metric_permutation_invariant(seed, perm):
    rng = np.random.default_rng(seed)
    pred = rng.integers(0, 7, 50)
    gt = rng.integers(0, 5, 50)
    relabel = np.array([0, *perm])
    assert misclassification_error(relabel[pred], gt) == pytest.approx(misclassification_error(pred, gt), abs=1e-12)
    assert 0.0 <= misclassification_error(pred, gt) <= 100.0


class TestSynthetic:
    def test_noise_free_line(self):
        spec = SyntheticSpec(LINE, [Structure([0.6, -0.8, 0.1], 100)], seed=3)
        ps = generate_synthetic(spec)
        assert residuals(LINE, spec.structures[0].params, ps.data).max() <= 1e-9

    def test_noise_free_homography(self):
        spec = two_planes(seed=1, noise=0.0, gross=0)
        ps = generate_synthetic(spec)
        for k, s in enumerate(spec.structures, start=1):
            H = s.params / np.linalg.norm(s.params)
            assert residuals(HOMOGRAPHY, H, ps.data[ps.labels == k]).max() <= 1e-9

    @pytest.mark.parametrize("make", [three_lines, four_circles, two_planes])
    def test_label_histogram(self, make):
        spec = make(seed=5)
        ps = generate_synthetic(spec)
        counts = np.bincount(ps.labels, minlength=len(spec.structures) + 1)
        assert counts[0] == spec.gross_outliers
        assert_array_equal(counts[1:], [s.inliers for s in spec.structures])

    @pytest.mark.parametrize("make", [three_lines, four_circles, two_planes])
    def test_gross_rate_exact(self, make):
        ps = generate_synthetic(make())
        assert ps.meta["gross_outlier_rate"] == 100.0 * make().gross_outliers / len(ps)

    def test_three_line_contamination(self):
        meta = generate_synthetic(three_lines()).meta
        # target contamination: 84.25% total, 52.63% gross
        assert abs(meta["outlier_rate"] - 84.25) <= 0.5
        assert abs(meta["gross_outlier_rate"] - 52.63) <= 0.5

    def test_four_circle_contamination(self):
        assert abs(generate_synthetic(four_circles()).meta["outlier_rate"] - 84.70) <= 0.5

    def test_deterministic(self):
        assert generate_synthetic(three_lines(seed=4)) == generate_synthetic(three_lines(seed=4))
        assert generate_synthetic(three_lines(seed=4)) != generate_synthetic(three_lines(seed=5))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(CIRCLE, [Structure([0, 0, 1], 2)])
        with pytest.raises(ValueError):
            SyntheticSpec(LINE, [Structure([1, 0, 0], 5, noise=-1.0)])

    def test_spec_dict_round_trip(self):
        spec = three_lines(seed=2)
        again = SyntheticSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
        assert generate_synthetic(again) == generate_synthetic(spec)


class TestDatasetIO:
    def test_json_round_trip(self, tmp_path, rng):
        ps = PointSet("correspondence", rng.normal(size=(7, 4)) * 1e3, rng.integers(0, 3, 7), {"name": "x"})
        dataset_io.write_points(ps, tmp_path / "a.json")
        assert dataset_io.read_points(tmp_path / "a.json") == ps

    def test_csv_round_trip(self, tmp_path, rng):
        ps = PointSet("planar-point", rng.normal(size=(9, 2)) / 3.0, rng.integers(0, 4, 9))
        dataset_io.write_points(ps, tmp_path / "a.csv")
        back = dataset_io.read_points(tmp_path / "a.csv")
        assert_array_equal(back.data, ps.data)
        assert_array_equal(back.labels, ps.labels)

    def test_csv_without_labels(self, tmp_path):
        (tmp_path / "b.csv").write_text("x,y\n0.5,1\n2,3.25\n")
        ps = dataset_io.read_points(tmp_path / "b.csv")
        assert_array_equal(ps.data, [[0.5, 1.0], [2.0, 3.25]])
        assert ps.labels is None

    def test_short_correspondence_row(self, tmp_path):
        doc = {"kind": "correspondence", "data": [[0, 0, 1, 1], [1, 2, 3]]}
        (tmp_path / "c.json").write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="row 1"):
            dataset_io.read_points(tmp_path / "c.json")

    def test_empty_data(self):
        with pytest.raises(SchemaMismatch):
            dataset_io.from_dict({"kind": "planar-point", "data": []})

    def test_unknown_kind(self):
        with pytest.raises(SchemaMismatch):
            dataset_io.from_dict({"kind": "voxel", "data": [[0, 0]]})

    def test_bad_field(self, tmp_path):
        (tmp_path / "d.csv").write_text("0,1\n2,oops\n")
        with pytest.raises(ParseError, match="line 2"):
            dataset_io.read_points(tmp_path / "d.csv")

    def test_broken_json(self, tmp_path):
        (tmp_path / "e.json").write_text('{"kind": "planar-point",\n "data": [[0, 1]')
        with pytest.raises(ParseError, match="line"):
            dataset_io.read_points(tmp_path / "e.json")


class TestPlot:
    def test_legend_colours(self, rng):
        svg = render_svg(rng.uniform(size=(30, 2)), np.repeat([0, 1, 2, 3, 0], 6))
        root = ET.fromstring(svg)
        legend = root.find(f"{SVG}g")
        fills = [r.get("fill") for r in legend.iter(f"{SVG}rect")]
        assert fills == PALETTE[:3] + [OUTLIER_COLOR]
        assert len(list(root.iter(f"{SVG}circle"))) == 18
        assert len(list(root.iter(f"{SVG}path"))) == 12

    def test_empty(self):
        root = ET.fromstring(render_svg(np.zeros((0, 2)), []))
        assert root.tag == f"{SVG}svg"
        assert not list(root.iter(f"{SVG}circle"))

    def test_deterministic_bytes(self, tmp_path):
        ps = generate_synthetic(three_lines())
        emit_plot(ps, ps.labels, tmp_path / "a.svg")
        emit_plot(ps, ps.labels, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            render_svg(np.zeros((3, 2)), [0, 1])


def clean_line_spec():
    return SyntheticSpec(LINE, [Structure([0.6, -0.8, 0.1], 60, 0.0, ((-0.5, -0.25), (0.5, 0.5)))],
                         name="clean line")


class TestRunner:
    cfg = FitConfig(kind=LINE, sampler=SamplerConfig(hypothesis_count=200))

    def test_singleton(self):
        stats = run_benchmark([clean_line_spec()], self.cfg, repeats=1)
        (d,) = stats.datasets
        assert (d.mean, d.median, d.std, d.runs, d.failures) == (0.0, 0.0, 0.0, 1, 0)
        assert stats.total_average == stats.total_median == 0.0
        assert len(stats.log) == 1

    def test_deterministic(self):
        specs = [three_lines(seed=1)]
        a = run_benchmark(specs, self.cfg, repeats=2).to_dict()
        b = run_benchmark(specs, self.cfg, repeats=2).to_dict()
        for d in (a, b):
            for rec in d["runs"]:
                rec.pop("time")
            for ds in d["datasets"]:
                ds.pop("mean_time")
        assert a == b
        assert [r["seed"] for r in a["runs"]] == [1, 2]

    def test_failure_recorded(self):
        # too few points for a circle: every run fails but the sweep completes
        tiny = PointSet("planar-point", [[0.0, 0.0], [1.0, 0.0]], [1, 1], {"name": "tiny"})
        cfg = FitConfig(kind=CIRCLE, sampler=SamplerConfig(hypothesis_count=10))
        stats = run_benchmark([tiny, clean_line_spec()], cfg, repeats=2)
        assert stats.datasets[0].failures == 2
        assert stats.datasets[0].mean == 100.0
        assert "NotEnoughPoints" in stats.log[0].failure

    def test_aggregates_recomputable(self):
        stats = run_benchmark([three_lines(), clean_line_spec()], self.cfg, repeats=2)
        errs = {d.name: [r.error for r in stats.log if r.dataset == d.name] for d in stats.datasets}
        for d in stats.datasets:
            assert d.mean == pytest.approx(np.mean(errs[d.name]))
            assert 0.0 <= d.median <= 100.0
        assert stats.total_average == pytest.approx(np.mean([d.mean for d in stats.datasets]))

    def test_repeats_validated(self):
        with pytest.raises(ValueError):
            run_benchmark([clean_line_spec()], self.cfg, repeats=0)


class TestCli:
    def test_generate_fit_plot(self, tmp_path):
        (tmp_path / "spec.json").write_text(json.dumps({"preset": "three_lines", "seed": 2}))
        assert main(["generate", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "d.json")]) == 0
        code = main(["fit", "--in", str(tmp_path / "d.json"), "--kind", "line2d", "--hypotheses", "500",
                     "--out", str(tmp_path / "r.json"), "--plot", str(tmp_path / "p.svg")])
        assert code == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert len(report["labels"]) == 475
        assert 0.0 <= report["misclassification_error"] <= 100.0
        ET.parse(tmp_path / "p.svg")

    def test_ablate(self, tmp_path, capsys):
        dataset_io.write_points(generate_synthetic(three_lines()), tmp_path / "d.csv")
        code = main(["ablate", "--in", str(tmp_path / "d.csv"), "--kind", "line2d", "--variant", "SAP",
                     "--hypotheses", "300"])
        assert code == 0
        assert "counts" in json.loads(capsys.readouterr().out)

    def test_bench(self, tmp_path):
        (tmp_path / "suite.json").write_text(json.dumps({"datasets": [{"preset": "three_lines"}]}))
        code = main(["bench", "--suite", str(tmp_path / "suite.json"), "--repeats", "2", "--hypotheses", "300",
                     "--out", str(tmp_path / "s.json")])
        assert code == 0
        stats = json.loads((tmp_path / "s.json").read_text())
        assert len(stats["runs"]) == 2

    def test_parse_error_exit_code(self, tmp_path):
        (tmp_path / "bad.json").write_text(json.dumps({"kind": "correspondence", "data": [[1, 2, 3]]}))
        assert main(["fit", "--in", str(tmp_path / "bad.json"), "--kind", "homography"]) == 2

    def test_missing_file_exit_code(self, tmp_path):
        assert main(["fit", "--in", str(tmp_path / "nope.json"), "--kind", "line2d"]) == 2

    def test_stage_error_exit_code(self, tmp_path):
        dataset_io.write_points(PointSet("planar-point", [[0.0, 0.0], [1.0, 1.0]]), tmp_path / "t.json")
        assert main(["fit", "--in", str(tmp_path / "t.json"), "--kind", "circle2d", "--hypotheses", "5"]) == 1
