import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from causaldecomp.bootstrap import BootstrapConfig, split_rng
from causaldecomp.estimators import DecompositionEstimate, EstimatorId
from causaldecomp.simulation import (PUBLISHED_DELTAS, PUBLISHED_RATIOS, CalibrationError,
                                     Coefficients,
                                     MetricsReport, ScenarioConfig, aggregate_metrics,
                                     calibrate_scenario, compute_ratio, default_estimators,
                                     estimator_label, generate_scenario_data, published_grid,
                                     read_metrics_csv, run_simulation, true_effects,
                                     truncated_normal, truncated_normal_mean,
                                     write_metrics_csv)

from conftest import SIM_SEED, calibrated


class TestDataGeneration:
    def test_columns_and_coding(self):
        data = generate_scenario_data(ScenarioConfig.default("binary", n=500), 0)
        assert data.column_names == ["R", "C", "S", "M", "Y"]
        assert set(np.unique(data["C"])) == {1.0, 2.0}
        assert set(np.unique(data["M"])) == {0.0, 1.0}
        assert set(np.unique(data["R"])) == {0.0, 1.0}

    def test_deterministic(self):
        cfg = ScenarioConfig.default(n=200, seed=5)
        a, b = generate_scenario_data(cfg, 3), generate_scenario_data(cfg, 3)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a.column_names)
        c = generate_scenario_data(cfg, 4)
        assert a["Y"].tobytes() != c["Y"].tobytes()

    def test_null_dgp(self):
        k = Coefficients(a1=0.0, b1=0.0, c1=0.0, c4=0.0)
        data = generate_scenario_data(ScenarioConfig.default(n=1_000_000, coefficients=k), 0)
        R, C, Y = data["R"], data["C"], data["Y"]
        tau = Y[(R == 1) & (C == 1)].mean() - Y[(R == 0) & (C == 1)].mean()
        assert abs(tau) < 0.01

    def test_truncated_normal_moments(self):
        x = truncated_normal(split_rng(1, 0), 50.0, 12.0, 25.0, 75.0, 1_000_000)
        closed = truncated_normal_mean(50.0, 12.0, 25.0, 75.0)
        assert x.min() >= 25.0 and x.max() <= 75.0
        assert abs(x.mean() - closed) < 0.02
        ref = stats.truncnorm((25 - 48) / 12, (75 - 48) / 12, loc=48, scale=12).mean()
        assert truncated_normal_mean(48.0, 12.0, 25.0, 75.0) == pytest.approx(ref, abs=1e-10)

    def test_exposure_shifts_covariate(self):
        # the comparison group has the higher covariate mean, so more of it lands at C = 2
        data = generate_scenario_data(ScenarioConfig.default(n=200_000), 0)
        R, C = data["R"], data["C"]
        assert (C[R == 1] == 2).mean() > (C[R == 0] == 2).mean()


def mc_gap(cfg, draws=1_000_000, seed=0):
    """Monte Carlo E[M|R=1,c] - E[M|R=0,c] from the structural equations written out directly."""
    k = cfg.coefficients
    c = cfg.reference_c
    rng = np.random.default_rng(seed)
    out = []
    for r in (1.0, 0.0):
        s = k.a0 + k.a1 * r + k.a2 * c + rng.standard_normal(draws)
        lin = k.b0 + k.b1 * r + k.b2 * c + k.b3 * s
        out.append((1 / (1 + np.exp(-lin))).mean() if cfg.mediator_kind == "binary"
                   else lin.mean())
    return out[0] - out[1]


class TestRatio:
    def test_direct_substitution(self):
        k = Coefficients(b1=0.5, b3=0.0, c3=-1.52, c4=0.52)
        assert compute_ratio(ScenarioConfig.default(coefficients=k)) == pytest.approx(0.5)

    def test_null_numerator(self):
        k = Coefficients(b1=0.0, b3=0.0)
        assert compute_ratio(ScenarioConfig.default(coefficients=k)) == 0.0

    def test_zero_denominator(self):
        with pytest.raises(ValueError):
            compute_ratio(ScenarioConfig.default(coefficients=Coefficients(c3=-0.52, c4=0.52)))

    def test_binary_monte_carlo(self):
        cfg = ScenarioConfig.default("binary")
        k = cfg.coefficients
        assert compute_ratio(cfg) == pytest.approx(abs(mc_gap(cfg)) / abs(k.c3 + k.c4), rel=0.02)

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(["continuous", "binary"]), st.floats(0.0, 4.0), st.floats(0.01, 2.0),
           st.floats(0.0, 0.5))
    def test_monotone_in_b1(self, kind, b1, step, a1):
        base = ScenarioConfig.default(kind)
        k = replace(base.coefficients, b1=b1, a1=a1, b3=0.15)
        lo = compute_ratio(replace(base, coefficients=k))
        hi = compute_ratio(replace(base, coefficients=replace(k, b1=b1 + step)))
        assert hi > lo


class TestTruth:
    @pytest.mark.parametrize("kind", ["continuous", "binary"])
    def test_null_mediation(self, kind):
        cfg = ScenarioConfig.default(kind, coefficients=Coefficients(b1=0.0, b3=0.0))
        t = true_effects(cfg, method="analytic")
        assert t.delta_true == pytest.approx(0.0, abs=1e-12)
        assert t.zeta_true == pytest.approx(t.tau_true, abs=1e-12)
        # the plug-in path compares two finite group means, so only Monte Carlo error remains
        assert abs(true_effects(cfg, method="population").delta_true) < 2e-3

    def test_dual_oracle_continuous(self):
        cfg = ScenarioConfig.default("continuous")
        a = true_effects(cfg, method="analytic")
        p = true_effects(cfg, method="population")
        assert abs(a.delta_true - p.delta_true) < 0.01
        assert abs(a.tau_true - p.tau_true) < 0.01

    def test_dual_oracle_binary(self):
        cfg = ScenarioConfig.default("binary")
        q = true_effects(cfg, method="analytic")
        p = true_effects(cfg, method="population")
        assert q.method == "quadrature" and p.method == "population"
        assert abs(q.delta_true - p.delta_true) < 0.01

    def test_analytic_formula(self):
        cfg = ScenarioConfig.default("continuous")
        k = cfg.coefficients
        t = true_effects(cfg)
        assert t.delta_true == pytest.approx((k.b1 + k.b3 * k.a1) * (k.c3 + k.c4), abs=1e-12)

    @pytest.mark.parametrize("kind", ["continuous", "binary"])
    def test_identity(self, kind):
        t = true_effects(ScenarioConfig.default(kind))
        assert t.tau_true == pytest.approx(t.delta_true + t.zeta_true, abs=1e-6)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            true_effects(ScenarioConfig.default(), method="guess")


class TestCalibration:
    @pytest.mark.parametrize("kind", ["continuous", "binary"])
    @pytest.mark.parametrize("ratio", PUBLISHED_RATIOS)
    def test_postconditions(self, kind, ratio):
        cfg = calibrated(kind, 1000, ratio)
        t = true_effects(cfg)
        assert abs(compute_ratio(cfg) - ratio) < 0.01 * ratio
        assert abs(t.reduction_fraction - 0.30) < 0.005
        assert t.delta_true == pytest.approx(PUBLISHED_DELTAS[kind][ratio], abs=0.02)

    def test_table_row_coefficients(self):
        k = Coefficients(b1=0.244, c1=-1.048, c3=-1.322)
        cfg = calibrate_scenario(ScenarioConfig.default(coefficients=k), target_ratio=0.3)
        assert abs(compute_ratio(cfg) - 0.3) < 0.15 * 0.3
        assert 0.297 <= compute_ratio(cfg) <= 0.303

    def test_published_row_fraction(self):
        assert -0.263 / (-0.263 + -0.610) == pytest.approx(0.30, abs=0.005)

    def test_fixed_point(self):
        cfg = calibrated("continuous", 500, 1.0)
        again = calibrate_scenario(cfg)
        for name in ("b1", "c1", "c3"):
            assert getattr(again.coefficients, name) == pytest.approx(
                getattr(cfg.coefficients, name), abs=1e-8)

    def test_out_of_bracket(self):
        with pytest.raises(CalibrationError):
            calibrate_scenario(ScenarioConfig.default(), target_ratio=1e6)

    def test_no_mediation(self):
        with pytest.raises(CalibrationError):
            calibrate_scenario(ScenarioConfig.default(), target_delta=0.0)

    def test_grid(self):
        grid = published_grid()
        assert len(grid) == 30
        assert {(g.mediator_kind, g.n) for g in grid} == {
            (k, n) for k in ("continuous", "binary") for n in (100, 500, 1000)}


class TestScenarioConfig:
    @settings(max_examples=30)
    @given(st.sampled_from(["continuous", "binary"]), st.integers(20, 10 ** 6),
           st.floats(0.01, 10.0), st.integers(0, 2 ** 64 - 1), st.floats(-5, 5))
    def test_json_round_trip(self, kind, n, ratio, seed, b1):
        cfg = ScenarioConfig.default(kind, n=n, target_ratio=ratio, seed=seed,
                                     coefficients=Coefficients(b1=b1))
        assert ScenarioConfig.from_json(cfg.to_json()) == cfg
        assert json.loads(cfg.to_json())["coefficients"]["b1"] == b1

    @pytest.mark.parametrize("kw", [{"n": 10}, {"target_ratio": 0.0}, {"mediator_kind": "ordinal"},
                                    {"reference_c": 3.0}, {"seed": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ScenarioConfig.default(**kw)

    def test_binary_defaults(self):
        k = ScenarioConfig.default("binary").coefficients
        assert (k.b1, k.c1, k.c3) == (1.993, -0.709, -0.913)


class TestMetrics:
    def test_hand_enumerated(self):
        bias, rmse, cov = aggregate_metrics(2.0, [1.0, 2.0, 3.0])
        assert bias == 0.0
        assert rmse == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
        assert math.isnan(cov)

    def test_sign_and_inclusive_coverage(self):
        bias, _, cov = aggregate_metrics(1.0, [0.5, 0.5], [1.0, 0.0], [2.0, 0.9])
        assert bias == 0.5
        assert cov == 0.5

    @given(st.floats(-10, 10), st.lists(st.floats(-10, 10), min_size=1, max_size=50))
    def test_rmse_dominates_bias(self, truth, est):
        bias, rmse, _ = aggregate_metrics(truth, est)
        assert rmse ** 2 >= bias ** 2 - 1e-9 * max(1.0, rmse ** 2)

    def test_oracle_injection(self):
        cfg = ScenarioConfig.default(n=100, seed=3)
        truth = true_effects(cfg)

        def perfect(est, data, spec, ref, plan, **kw):
            return DecompositionEstimate(truth.tau_true, truth.delta_true, truth.zeta_true,
                                         EstimatorId.parse(est))

        rep = run_simulation(cfg, [4], M=4, boot=BootstrapConfig(5, seed=1), truth=truth,
                             estimate_fn=perfect)
        for target in ("delta", "zeta"):
            row = rep.cell(4, target)
            assert (row.bias, row.rmse, row.coverage) == (0.0, 0.0, 1.0)

    def test_report_shape(self):
        cfg = ScenarioConfig.default("binary", n=150, seed=4)
        rep = run_simulation(cfg, M=3, boot=BootstrapConfig(10, seed=2))
        labels = {r.estimator for r in rep.rows}
        assert labels == {estimator_label(e) for e in default_estimators("binary")}
        assert all(0.0 <= r.coverage <= 1.0 for r in rep.rows)
        assert all(r.rmse >= abs(r.bias) for r in rep.rows)
        assert {r.target for r in rep.rows} == {"delta", "zeta"}

    def test_unavailable_skipped(self):
        cfg = ScenarioConfig.default("binary", n=150, seed=4)
        rep = run_simulation(cfg, [1, 4], M=2)
        assert "diff_in_coeffs" in rep.skipped
        assert {r.estimator for r in rep.rows} == {"single_imputation"}

    def test_parallel_identical(self):
        cfg = ScenarioConfig.default(n=120, seed=8)
        boot = BootstrapConfig(8, seed=3)
        a = run_simulation(cfg, M=4, boot=boot, n_jobs=1)
        b = run_simulation(cfg, M=4, boot=boot, n_jobs=3)
        assert a.rows == b.rows

    def test_csv_round_trip(self, tmp_path):
        cfg = ScenarioConfig.default(n=120, seed=8)
        rep = run_simulation(cfg, [2], M=3)
        path = tmp_path / "m.csv"
        write_metrics_csv([rep], path, provenance="seed 8\nversion x")
        text = path.read_text()
        assert text.startswith("# seed 8\n# version x\nestimator,target,n,ratio,bias,rmse,")
        rows = read_metrics_csv(path)
        assert len(rows) == 2
        assert rows[0]["bias"] == rep.rows[0].bias
        assert math.isnan(rows[0]["coverage"])

    def test_report_json(self):
        rep = run_simulation(ScenarioConfig.default(n=120, seed=8), [2], M=2)
        assert isinstance(rep, MetricsReport)
        doc = rep.to_dict()
        assert doc["truth"]["tau_true"] == pytest.approx(
            doc["truth"]["delta_true"] + doc["truth"]["zeta_true"])


@pytest.mark.slow
class TestSimulationScale:
    def test_estimator1_bias(self, criterion6_report):
        row = criterion6_report.cell(1, "delta")
        assert abs(row.bias) > 0.05
        assert row.coverage < 0.90

    def test_consistency_sweep(self):
        for kind in ("continuous", "binary"):
            for ratio in PUBLISHED_RATIOS:
                cfg = calibrated(kind, 100, ratio)
                truth = true_effects(cfg)
                small = run_simulation(cfg, [5], M=200, truth=truth).cell(5, "delta")
                big = run_simulation(replace(cfg, n=100_000), [5], M=10,
                                     truth=truth).cell(5, "delta")
                mc_se = small.rmse / math.sqrt(small.M)
                assert big.rmse < small.rmse
                assert abs(big.bias) < abs(small.bias) + 2 * mc_se, (kind, ratio)
