import numpy as np
import pytest

from eventlab import (
    AssumptionSet,
    CV_OVERFLOW,
    EstimandSpec,
    WeightedContrast,
    classify,
    ess,
    fit_twfe,
    ideal_contrast,
    implied_weights,
    influence,
    influence_refit,
    load_panel,
    sign_reversal_scan,
    smd_table,
    build_report,
    weight_dispersion,
)
from eventlab.balance import robust_contrast

from conftest import make_random_panel, pick_estimand


def make_contrast(weights_t, weights_c, outcomes=None):
    nt, nc = len(weights_t), len(weights_c)
    obs = np.array([[k, 1] for k in range(nt + nc)])
    w = np.concatenate([weights_t, weights_c])
    mask = np.array([True] * nt + [False] * nc)
    y = outcomes if outcomes is not None else np.zeros(nt + nc)
    return WeightedContrast(obs_index=obs, weights=w, treatment_mask=mask,
                            outcomes=np.asarray(y, dtype=float))


def uniform_tags(contrast, group="IdealExperiment"):
    g = np.full((len(contrast.weights), 2), group, dtype=object)
    role = np.full_like(g, "Treatment")
    return (g, role)


class TestEss:
    def test_uniform_weights_give_n(self):
        c = make_contrast(np.full(4, 0.25), np.full(4, 0.25))
        table = ess(c, uniform_tags(c))
        assert table["IdealExperiment"]["ess"] == pytest.approx(8.0)
        assert table["IdealExperiment"]["n"] == 8

    def test_hand_computed_kish(self):
        # (0.5, 0.25, 0.25): (sum)^2 / sum of squares = 1 / 0.375 = 8/3
        c = make_contrast(np.array([0.5, 0.25, 0.25]), np.array([1.0]))
        g = np.full((4, 2), "IdealExperiment", dtype=object)
        g[3, :] = "TimeInvariance"
        table = ess(c, (g, np.full_like(g, "Control")))
        assert table["IdealExperiment"]["ess"] == pytest.approx(8 / 3)
        assert table["TimeInvariance"]["ess"] == pytest.approx(1.0)

    def test_info_shares_sum_to_one(self):
        rng = np.random.default_rng(2)
        panel = make_random_panel(rng, n_units=9, n_times=6)
        est = pick_estimand(rng, panel)
        c = ideal_contrast(panel, est.validate(panel))
        tags = classify(panel, est, AssumptionSet(invariance="strong"))
        table = ess(c, tags)
        assert sum(v["p_info"] for v in table.values()) == pytest.approx(1.0, abs=1e-12)


class TestInfluence:
    def test_fast_equals_refit(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            panel = make_random_panel(rng, n_units=6, n_times=5, effect=0.5)
            fit = fit_twfe(panel)
            name = fit.tau_names()[0]
            fast, flags_fast = influence(fit, name, mode="fast")
            slow, flags_slow = influence(fit, name, mode="refit")
            both = ~np.isnan(fast) & ~np.isnan(slow)
            np.testing.assert_allclose(fast[both], slow[both], atol=1e-8)
            assert len(flags_fast) == len(flags_slow)

    def test_zero_estimator_row_entry_gives_zero_influence(self):
        rng = np.random.default_rng(9)
        panel = make_random_panel(rng, n_units=7, n_times=5, effect=1.0)
        fit = fit_twfe(panel)
        name = fit.tau_names()[0]
        h = fit.estimator_row(name)
        pe, _ = influence(fit, name, mode="fast")
        zero = (np.abs(h) < 1e-14) & ~np.isnan(pe)
        assert np.abs(pe[zero]).max(initial=0.0) < 1e-10

    def test_leverage_one_flagged_as_breaking(self):
        # a unit observed only once is fit exactly by its own dummy
        rows = [{"unit": "a", "time": t, "outcome": float(t), "g": 2}
                for t in (1, 2, 3)]
        rows += [{"unit": "b", "time": t, "outcome": 0.0, "g": "never"}
                 for t in (1, 2, 3)]
        panel = load_panel(rows)
        fit = fit_twfe(panel)
        pe, flags = influence(fit, fit.tau_names()[0], mode="fast")
        # every flagged entry carries the identification note
        for f in flags:
            assert f["note"] == "breaks identification"
        assert np.isnan(pe).sum() == len(flags)

    def test_generic_refit_helper(self):
        vals = [1.0, 2.0, 3.0]

        def without(k):
            if k == 1:
                raise ValueError("degenerate")
            return vals[k]

        pe, flags = influence_refit(without, base=1.5, n=3)
        np.testing.assert_allclose(pe[[0, 2]], [-0.5, 1.5])
        assert np.isnan(pe[1])
        assert flags and "breaks identification" in flags[0]["note"]


class TestSmd:
    def test_hand_formula(self):
        rng = np.random.default_rng(3)
        rows = [{"unit": f"u{k}", "time": t, "outcome": 0.0,
                 "g": 2 if k < 6 else "never", "x_0": float(rng.normal())}
                for k in range(12) for t in (1, 2, 3)]
        panel = load_panel(rows)
        resolved = EstimandSpec(t1=2, ty=3).validate(panel)
        c = ideal_contrast(panel, resolved)
        tab = smd_table(panel, c, columns=["x_0"])
        x = panel.covariates["x_0"][c.obs_index[:, 0]]
        xt, xc = x[c.treatment_mask], x[~c.treatment_mask]
        denom = np.sqrt((np.var(xt, ddof=1) + np.var(xc, ddof=1)) / 2)
        assert tab.loc[0, "smd_before"] == pytest.approx(
            (xt.mean() - xc.mean()) / denom)

    def test_identical_components_give_zero(self):
        c = make_contrast(np.full(3, 1 / 3), np.full(3, 1 / 3))
        rows = [{"unit": f"u{k}", "time": t, "outcome": 0.0,
                 "g": 2 if k < 3 else "never", "x_0": float(k % 3)}
                for k in range(6) for t in (1, 2)]
        panel = load_panel(rows)
        obs = np.array([[k, 2] for k in range(6)])
        c = WeightedContrast(obs_index=obs, weights=np.full(6, 1 / 3),
                             treatment_mask=np.array([True] * 3 + [False] * 3),
                             outcomes=np.zeros(6))
        tab = smd_table(panel, c, columns=["x_0"])
        assert tab.loc[0, "smd_before"] == pytest.approx(0.0, abs=1e-12)
        assert tab.loc[0, "smd_after"] == pytest.approx(0.0, abs=1e-12)

    def test_constant_column_flagged(self):
        rows = [{"unit": f"u{k}", "time": 1, "outcome": 0.0,
                 "g": 1 if k < 2 else "never", "x_0": 1.0} for k in range(4)]
        panel = load_panel(rows)
        resolved = EstimandSpec(t1=1, ty=1).validate(panel)
        c = ideal_contrast(panel, resolved)
        tab = smd_table(panel, c, columns=["x_0"])
        assert "undefined" in tab.loc[0, "flag"]

    def test_balanced_design_columns_after_weighting(self):
        """Exact balancing drives the weighted difference to zero on every
        retained design column."""
        rng = np.random.default_rng(13)
        panel = make_random_panel(rng, n_units=8, n_times=5, effect=0.6)
        fit = fit_twfe(panel)
        name = fit.tau_names()[0]
        c = implied_weights(fit, name)
        j = fit.column_names.index(name)
        keep = [k for k, nm in enumerate(fit.column_names) if k != j]
        design = (fit.design[:, keep], [fit.column_names[k] for k in keep])
        tab = smd_table(panel, c, design=design)
        defined = tab["smd_after"].dropna()
        assert np.abs(defined.to_numpy()).max() < 1e-8


class TestDispersion:
    def test_uniform_cv_zero(self):
        c = make_contrast(np.full(4, 0.25), np.full(4, 0.25))
        disp = weight_dispersion(c, uniform_tags(c))
        assert disp["IdealExperiment"]["cv"] == pytest.approx(0.0, abs=1e-12)

    def test_zero_mean_reports_overflow(self):
        c = make_contrast(np.array([2.0, -1.0]), np.array([0.5, 0.5, -1e-17, 1e-17]))
        g = np.full((6, 2), "IdealExperiment", dtype=object)
        g[4:, :] = "TimeInvariance"
        tags = (g, np.full_like(g, "Control"))
        disp = weight_dispersion(c, tags)
        assert disp["TimeInvariance"]["cv"] == CV_OVERFLOW


class TestSignReversal:
    def test_twfe_weights_with_many_cohorts_reverse(self):
        rng = np.random.default_rng(23)
        panel = make_random_panel(rng, n_units=10, n_times=6, effect=0.4)
        fit = fit_twfe(panel)
        found = False
        for name in fit.tau_names():
            c = implied_weights(fit, name)
            hits = sign_reversal_scan(c, panel)
            for h in hits:
                assert h["weight"] < 0
                assert h["component"] in ("treatment", "control")
            found = found or bool(hits)
        assert found

    def test_nonneg_weights_never_reverse(self, toy_panel, toy_estimand):
        c, _ = robust_contrast(toy_panel, toy_estimand,
                               AssumptionSet(invariance="strong"), nonneg=True)
        assert sign_reversal_scan(c, toy_panel) == []


class TestReport:
    def test_report_round_trip_serializes(self):
        rng = np.random.default_rng(29)
        panel = make_random_panel(rng, n_units=8, n_times=5, n_cov=1)
        est = pick_estimand(rng, panel)
        c = ideal_contrast(panel, est.validate(panel))
        tags = classify(panel, est, AssumptionSet())
        report = build_report(panel, c, tags, columns=["x_0"])
        d = report.to_dict()
        assert sum(d["info_share"].values()) == pytest.approx(1.0)
        assert isinstance(d["balance"], list) and d["balance"][0]["column"] == "x_0"
        import json
        json.dumps(d, allow_nan=False)
