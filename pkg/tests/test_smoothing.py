"""Switch statistics, region detection, repair, and varimax rotation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvmfm.estimation import LoadingPath, MatrixSeries
from tvmfm.kernels import LEFT, KernelSpec, rot_bandwidth
from tvmfm.metrics import space_distance
from tvmfm.simulate import ExperimentConfig, gen_coalescing
from tvmfm.smoothing import (
    CoalescingRegion,
    SwitchDiagnostics,
    _runs_above,
    align_signs,
    apply_global_rotation,
    detect_switches,
    gram_schmidt,
    mvp_bootstrap_regions,
    repair_and_smooth,
    switch_statistic,
    switch_statistic_swapform,
    varimax,
    varimax_criterion,
)

from .oracles import varimax_grid_2col


def orthonormal(rng, n, d):
    Q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return Q[:, :d]


class TestSwitchStatistic:
    def test_two_forms_agree(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = rng.integers(4, 12)
            d = rng.integers(2, min(n, 5) + 1)
            A = orthonormal(rng, n, d)
            B = orthonormal(rng, n, d)
            i = int(rng.integers(1, d))
            assert switch_statistic(A, B, i) == pytest.approx(
                switch_statistic_swapform(A, B, i), abs=1e-10)

    def test_swapped_columns_give_four(self):
        rng = np.random.default_rng(1)
        A = orthonormal(rng, 9, 3)
        B = A[:, [1, 0, 2]]
        assert switch_statistic(A, B, 1) == pytest.approx(4.0, abs=1e-10)

    def test_identical_columns_give_zero(self):
        rng = np.random.default_rng(2)
        A = orthonormal(rng, 9, 3)
        assert switch_statistic(A, A, 2) == pytest.approx(0.0, abs=1e-12)

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(3)
        A = orthonormal(rng, 8, 3)
        B = orthonormal(rng, 8, 3)
        Bf = B * np.array([-1.0, 1.0, -1.0])
        assert switch_statistic(A, B, 1) == pytest.approx(
            switch_statistic(A, Bf, 1), abs=1e-12)

    def test_index_bounds(self):
        rng = np.random.default_rng(4)
        A = orthonormal(rng, 6, 3)
        with pytest.raises(ValueError):
            switch_statistic(A, A, 0)
        with pytest.raises(ValueError):
            switch_statistic(A, A, 3)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_range_zero_to_four(self, seed):
        rng = np.random.default_rng(seed)
        A = orthonormal(rng, 7, 3)
        B = orthonormal(rng, 7, 3)
        val = switch_statistic(A, B, 1)
        assert -1e-12 <= val <= 4.0 + 1e-12


class TestRunsAbove:
    def test_basic_runs(self):
        x = np.array([0.0, 2.0, 2.0, 0.0, 3.0, 0.0, 4.0])
        assert _runs_above(x, 1.0) == [(2, 3), (5, 5), (7, 7)]

    def test_nan_breaks_runs(self):
        x = np.array([2.0, np.nan, 2.0])
        assert _runs_above(x, 1.0) == [(1, 1), (3, 3)]

    def test_empty(self):
        assert _runs_above(np.zeros(5), 1.0) == []


class TestCoalescingRegion:
    def test_validation(self):
        with pytest.raises(ValueError):
            CoalescingRegion(a=5, b=5, kappa=1)
        with pytest.raises(ValueError):
            CoalescingRegion(a=-1, b=5, kappa=1)
        with pytest.raises(ValueError):
            CoalescingRegion(a=1, b=5, kappa=0)

    def test_contains_half_open(self):
        r = CoalescingRegion(a=10, b=20, kappa=1)
        assert not r.contains(10)
        assert r.contains(11)
        assert r.contains(20)
        assert not r.contains(21)


@pytest.fixture(scope="module")
def coalescing_fixture():
    cfg = ExperimentConfig(dgp="coalescing", p=12, q=12, T=400, k=4, r=4,
                           psi=0.1, scenario="s0", coalescing_side="row",
                           seed=8)
    series, truth = gen_coalescing(cfg, 0)
    spec = KernelSpec("epanechnikov", rot_bandwidth(12, 400), LEFT)
    diag = detect_switches(series, spec, 4, side="row")
    return series, truth, spec, diag


class TestDetectSwitches:

    def test_statistics_marked_outside_core(self, coalescing_fixture):
        _, _, spec, diag = coalescing_fixture
        T = 400
        w = int(np.floor(spec.bandwidth * T))
        assert np.all(np.isnan(diag.stats[:, :w]))
        assert np.all(np.isnan(diag.stats[:, T - w:]))
        core = diag.stats[:, w:T - w]
        assert np.all(np.isfinite(core))
        assert core.min() >= -1e-12 and core.max() <= 4.0 + 1e-12

    def test_finds_crossing_region(self, coalescing_fixture):
        _, truth, _, diag = coalescing_fixture
        t_cross = int(np.ceil(truth["points"][0] * 400))
        matched = [r for r in diag.regions if r.contains(t_cross)]
        assert matched
        assert any(r.kappa == 3 for r in matched)

    def test_thresholds_and_reference(self, coalescing_fixture):
        _, _, _, diag = coalescing_fixture
        assert diag.thresholds.shape == (3,)
        assert np.all(diag.thresholds > 0)
        assert diag.upper_q95.shape == (3,)

    def test_rank_one_yields_empty(self):
        rng = np.random.default_rng(9)
        series = MatrixSeries(data=rng.standard_normal((60, 6, 6)))
        diag = detect_switches(series, KernelSpec("epanechnikov", 0.2, LEFT),
                               1, side="row")
        assert diag.regions == []
        assert diag.stats.shape == (0, 60)


class TestMvpBootstrap:
    def test_smoke_and_determinism(self):
        cfg = ExperimentConfig(dgp="coalescing", p=10, q=10, T=150, k=4, r=4,
                               psi=0.1, seed=10)
        series, _ = gen_coalescing(cfg, 0)
        spec = KernelSpec("epanechnikov", rot_bandwidth(10, 150))
        regs1 = mvp_bootstrap_regions(series, spec, 4, n_boot=20, side="row",
                                      rng=np.random.default_rng(1))
        regs2 = mvp_bootstrap_regions(series, spec, 4, n_boot=20, side="row",
                                      rng=np.random.default_rng(1))
        assert regs1 == regs2
        for r in regs1:
            assert 0 <= r.a < r.b <= 150
            assert 1 <= r.kappa <= 3


class TestGramSchmidt:
    def test_orthonormal_output(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((8, 4))
        Q = gram_schmidt(A)
        assert np.abs(Q.T @ Q - np.eye(4)).max() < 1e-12

    def test_identity_on_orthonormal(self):
        rng = np.random.default_rng(12)
        Q = orthonormal(rng, 8, 3)
        assert np.abs(gram_schmidt(Q) - Q).max() < 1e-12

    def test_first_column_direction_preserved(self):
        rng = np.random.default_rng(13)
        A = rng.standard_normal((6, 2))
        Q = gram_schmidt(A)
        cos = Q[:, 0] @ A[:, 0] / np.linalg.norm(A[:, 0])
        assert cos == pytest.approx(1.0)

    def test_dependent_columns_rejected(self):
        A = np.ones((5, 2))
        with pytest.raises(ValueError):
            gram_schmidt(A)


class TestAlignSigns:
    def test_recovers_smooth_path(self):
        rng = np.random.default_rng(14)
        T, n, d = 50, 6, 2
        base = orthonormal(rng, n, d)
        smooth = np.repeat(base[None], T, axis=0)
        flips = rng.choice([-1.0, 1.0], size=(T, d))
        flips[0] = 1.0
        aligned = align_signs(smooth * flips[:, None, :])
        assert np.abs(aligned - smooth).max() < 1e-14


class TestRepairAndSmooth:
    def make_truth(self, rng, n=8, T=200):
        B = orthonormal(rng, n, 3)
        theta = 0.8 * np.arange(1, T + 1) / T
        truth = np.empty((T, n, 2))
        for t in range(T):
            c, s = np.cos(theta[t]), np.sin(theta[t])
            truth[t, :, 0] = B[:, 0] * c + B[:, 1] * s
            truth[t, :, 1] = (np.cos(0.5 * theta[t]) * B[:, 2]
                              + np.sin(0.5 * theta[t]) * B[:, 1])
            Q, _ = np.linalg.qr(truth[t])
            truth[t] = Q * np.sqrt(n)
        return truth

    def test_synthetic_swap_recovered(self):
        rng = np.random.default_rng(15)
        n, T = 8, 200
        truth = self.make_truth(rng, n, T)
        raw = truth.copy()
        half = T // 2
        raw[half:, :, [0, 1]] = raw[half:, :, [1, 0]]
        raw *= rng.choice([-1.0, 1.0], size=(T, 1, 2))
        region = CoalescingRegion(a=half - 6, b=half + 6, kappa=1)
        diag = SwitchDiagnostics(stats=np.empty((1, T)),
                                 thresholds=np.array([1.0]),
                                 regions=[region])
        path = LoadingPath(side="row", mats=raw, eigvals=np.ones((T, n)))
        out = repair_and_smooth(path, diag)
        assert out.smoothed
        w = 12
        for t in range(T):
            if abs(t + 1 - half) <= w:
                continue
            for i in range(2):
                assert space_distance(out.mats[t][:, i:i + 1],
                                      truth[t][:, i:i + 1]) <= 0.05

    def test_output_columns_orthonormal(self):
        rng = np.random.default_rng(16)
        n, T = 8, 120
        truth = self.make_truth(rng, n, T)
        diag = SwitchDiagnostics(stats=np.empty((1, T)),
                                 thresholds=np.array([1.0]),
                                 regions=[CoalescingRegion(50, 70, 1)])
        path = LoadingPath(side="row", mats=truth, eigvals=np.ones((T, n)))
        out = repair_and_smooth(path, diag)
        for t in (0, 60, 119):
            G = out.mats[t].T @ out.mats[t] / n
            assert np.abs(G - np.eye(2)).max() < 1e-10

    def test_whole_sample_region_rejected(self):
        rng = np.random.default_rng(17)
        truth = self.make_truth(rng, 8, 50)
        path = LoadingPath(side="row", mats=truth, eigvals=np.ones((50, 8)))
        diag = SwitchDiagnostics(stats=np.empty((1, 50)),
                                 thresholds=np.array([1.0]),
                                 regions=[CoalescingRegion(0, 50, 1)])
        with pytest.raises(ValueError):
            repair_and_smooth(path, diag)

    def test_kappa_out_of_range_rejected(self):
        rng = np.random.default_rng(18)
        truth = self.make_truth(rng, 8, 50)
        path = LoadingPath(side="row", mats=truth, eigvals=np.ones((50, 8)))
        diag = SwitchDiagnostics(stats=np.empty((1, 50)),
                                 thresholds=np.array([1.0]),
                                 regions=[CoalescingRegion(10, 20, 2)])
        with pytest.raises(ValueError):
            repair_and_smooth(path, diag)


class TestVarimax:
    def test_rotation_is_orthogonal(self):
        rng = np.random.default_rng(19)
        A = rng.standard_normal((40, 3))
        B, G = varimax(A)
        assert np.abs(G.T @ G - np.eye(3)).max() < 1e-12
        assert np.abs(A @ G - B).max() < 1e-12

    def test_criterion_not_decreased(self):
        rng = np.random.default_rng(20)
        for _ in range(10):
            A = rng.standard_normal((30, 4))
            B, _ = varimax(A)
            assert varimax_criterion(B) >= varimax_criterion(A) - 1e-12

    def test_matches_grid_search_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            A = rng.standard_normal((25, 2))
            B, _ = varimax(A)
            _, best = varimax_grid_2col(A)
            assert varimax_criterion(B) == pytest.approx(best, abs=1e-6)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            varimax(np.ones((5, 1)))
        with pytest.raises(ValueError):
            varimax(np.ones((2, 3)))


class TestApplyGlobalRotation:
    def test_span_preserved_per_t(self):
        rng = np.random.default_rng(22)
        mats = rng.standard_normal((30, 8, 2))
        path = LoadingPath(side="row", mats=mats, eigvals=np.ones((30, 8)))
        out = apply_global_rotation(path)
        for t in (0, 15, 29):
            assert space_distance(out.mats[t], mats[t]) < 1e-8

    def test_window_validation(self):
        rng = np.random.default_rng(23)
        path = LoadingPath(side="row", mats=rng.standard_normal((20, 6, 2)),
                           eigvals=np.ones((20, 6)))
        with pytest.raises(ValueError):
            apply_global_rotation(path, window=(0, 10))
        with pytest.raises(ValueError):
            apply_global_rotation(path, window=(5, 25))

    def test_window_subset_used_for_fit(self):
        rng = np.random.default_rng(24)
        mats = rng.standard_normal((20, 6, 2))
        path = LoadingPath(side="row", mats=mats, eigvals=np.ones((20, 6)))
        out = apply_global_rotation(path, window=(3, 12))
        assert out.mats.shape == mats.shape
