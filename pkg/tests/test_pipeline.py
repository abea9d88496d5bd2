import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from hrmp.bench.synthetic import Structure, SyntheticSpec, generate_synthetic
from hrmp.clustering import build_knn_graph, refine_clusters, sparse_affinity_propagation
from hrmp.errors import HRMPError, NotEnoughPoints
from hrmp.hierarchy import build_representation, propagate, prune_layers
from hrmp.hypothesis import SamplerConfig, generate_hypotheses
from hrmp.pipeline import VARIANTS, FitConfig, ablate, default_tau, fit, preference_vectors

from .helpers import CIRCLE, LINE, line_points, planar


def small_cfg(kind=LINE, M=400, seed=0, **kw):
    return FitConfig(kind=kind, sampler=SamplerConfig(hypothesis_count=M), seed=seed, **kw)


def segment(p, q, n, noise):
    d = np.subtract(q, p)
    normal = np.array([-d[1], d[0]]) / np.hypot(*d)
    return Structure(np.append(normal, -normal @ p), n, noise, (p, q))


def two_lines(seed=0, gross=150, noise=0.002):
    # equal lengths and heavy contamination, as in the benchmark presets
    spec = SyntheticSpec(
        LINE,
        [segment((0.1, 0.2), (0.9, 0.7), 50, noise), segment((0.2, 0.85), (0.8, 0.15), 50, noise)],
        gross_outliers=gross,
        seed=seed,
    )
    return generate_synthetic(spec)


def strip_timings(d):
    d = dict(d)
    d.pop("timings")
    return d


class TestConfig:
    def test_defaults(self):
        cfg = FitConfig()
        assert (cfg.propagation_iters, cfg.damping, cfg.ap_max_iters, cfg.ap_stable_window) == (3, 0.9, 1000, 50)

    @pytest.mark.parametrize("kw", [{"propagation_iters": 0}, {"tau": 0}, {"damping": 1.0}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            FitConfig(**kw)

    def test_default_tau(self):
        assert default_tau(100) == 30
        assert default_tau(5) == 4


class TestFit:
    def test_single_clean_line(self):
        truth = np.array([0.6, -0.8, 0.1])
        pts = planar(line_points(50, truth))
        report = fit(pts, small_cfg(M=200))
        assert len(report.instances) == 1
        assert_array_equal(report.labels, 1)
        p = report.instances[0][0]
        p = p * np.sign(p @ truth)
        assert_allclose(p, truth, atol=1e-6)

    def test_deterministic(self):
        pts = two_lines()
        a = fit(pts, small_cfg(seed=3)).to_dict()
        b = fit(pts, small_cfg(seed=3)).to_dict()
        assert strip_timings(a) == strip_timings(b)

    def test_two_lines(self):
        pts = two_lines()
        report = fit(pts, small_cfg(M=1000))
        assert report.counts["instances"] == 2

    def test_report_contract(self):
        pts = two_lines()
        report = fit(pts, small_cfg())
        c = report.counts
        assert c["M_kept"] <= c["M"] and c["N_kept"] <= c["N"] == len(pts)
        assert c["instances"] <= c["significant_clusters"]
        assert report.labels.shape == (len(pts),)
        seen = np.concatenate([m for _, m in report.instances])
        assert np.unique(seen).size == seen.size
        assert_array_equal(np.sort(seen), np.flatnonzero(report.labels))
        for j, (_, members) in enumerate(report.instances, start=1):
            assert_array_equal(report.labels[members], j)
        assert set(report.timings) == {"hypotheses", "representation", "propagation", "pruning", "graph",
                                       "clustering", "estimation"}
        assert all(t >= 0 for t in report.timings.values())
        assert "ap_converged" in report.diagnostics

    def test_matches_manual_composition(self):
        pts = two_lines(seed=4)
        cfg = small_cfg(seed=9)
        report = fit(pts, cfg)

        rng = np.random.default_rng(cfg.seed)
        hyps = generate_hypotheses(pts, LINE, dataclasses.replace(cfg.sampler, seed=cfg.seed), cfg.ikose, rng=rng)
        rep = build_representation(pts, hyps)
        msg = propagate(rep, 3)
        pruned = prune_layers(rep, msg)
        P = preference_vectors(rep, msg.hyp_score, pruned.kept_points, pruned.kept_hypotheses)
        nz = np.diff(P.indptr) > 0
        vertices, P = pruned.kept_points[nz], P[nz]
        g = build_knn_graph(P, default_tau(vertices.size))
        stage1 = sparse_affinity_propagation(g)
        clusters = refine_clusters(stage1, P, pts.data[vertices], LINE)

        assert len(report.instances) == len(clusters.instances)
        for (p1, m1), (p2, m2) in zip(report.instances, clusters.instances):
            assert_array_equal(m1, vertices[m2])
            assert_array_equal(p1, p2)
        assert report.counts["N_kept"] == pruned.kept_points.size

    def test_pruned_points_are_outliers(self):
        pts = two_lines(seed=1)
        report = fit(pts, small_cfg(seed=1))
        assert report.counts["N_kept"] < len(pts)
        # every point the pipeline did not assign carries label 0, nothing else does
        members = np.zeros(len(pts), dtype=bool)
        for _, m in report.instances:
            members[m] = True
        assert_array_equal(report.labels == 0, ~members)

    def test_stage_error_annotated(self):
        pts = planar([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(NotEnoughPoints) as info:
            fit(pts, small_cfg(kind=CIRCLE, M=10))
        assert info.value.stage == "hypotheses"
        assert str(info.value).startswith("[hypotheses]")

    def test_wrong_data_kind(self):
        pts = planar(line_points(20))
        with pytest.raises(ValueError):
            fit(pts, small_cfg(kind="homography"))


class TestAblate:
    def test_full_variant_is_fit(self):
        pts = two_lines()
        cfg = small_cfg(seed=2)
        a = strip_timings(ablate(pts, cfg, "HMP+IAP").to_dict())
        b = strip_timings(fit(pts, cfg).to_dict())
        assert a == b

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_clean_single_line(self, variant):
        # noise-free: every point weight is equal, so pruning keeps everything
        pts = planar(line_points(40))
        report = ablate(pts, small_cfg(M=200), variant)
        assert report.counts["instances"] == 1
        assert report.diagnostics["variant"] == variant

    def test_unpruned_variants_keep_everything(self):
        pts = two_lines()
        for variant in ("IAP", "SAP"):
            c = ablate(pts, small_cfg(), variant).counts
            assert c["M_kept"] == c["M"] and c["N_kept"] == c["N"]

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            ablate(two_lines(), small_cfg(), "XYZ")


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 60))
def test_monotone_data_flow(seed, gross):
    pts = two_lines(seed=seed, gross=gross)
    try:
        report = fit(pts, small_cfg(M=200, seed=seed))
    except HRMPError:
        return
    c = report.counts
    assert c["M_kept"] <= c["M"] <= 200
    assert c["N_clustered"] <= c["N_kept"] <= c["N"]
    assert np.count_nonzero(report.labels) <= c["N_clustered"]
