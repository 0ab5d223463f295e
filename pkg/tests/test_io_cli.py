import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from eventlab import (
    AssumptionSet,
    EstimandSpec,
    PanelError,
    config_hash,
    load_divorce_dataset,
    parse_spec,
    read_weights_csv,
    spec_to_dict,
    write_csv,
    write_json,
)
from eventlab.cli import EXIT_INFEASIBLE, EXIT_VALIDATION, main

from conftest import toy_rows


@pytest.fixture
def workdir(tmp_path):
    data = tmp_path / "panel.csv"
    pd.DataFrame(toy_rows()).to_csv(data, index=False)
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "estimand": {"t1": 2002, "ty": 2003},
        "assumptions": {"invariance": "off"},
    }))
    return tmp_path


def run_cli(args, **kwargs):
    return CliRunner().invoke(main, args, **kwargs)


class TestSerialization:
    def test_config_hash_stable_and_order_free(self):
        a = {"x": 1, "y": [1, 2], "z": {"k": 0.5}}
        b = {"z": {"k": 0.5}, "y": [1, 2], "x": 1}
        assert config_hash(a) == config_hash(b)
        assert len(config_hash(a)) == 16
        assert config_hash(a) != config_hash({**a, "x": 2})

    def test_spec_round_trip(self):
        doc = {
            "estimand": {"t1": 2002, "ty": 2004,
                         "reference": {"2004": 0.5, "never": 0.5},
                         "target_population": "treated"},
            "assumptions": {"invariance": "per-cohort", "anticipation_kappa": 1,
                            "delay_phi": 0, "dissipation_xi": 3,
                            "adjustment_set": ["x_0"]},
        }
        est, asm = parse_spec(doc)
        assert est.reference == {2004: 0.5, "never": 0.5}
        assert asm.delay_phi == 0 and asm.adjustment_set == ("x_0",)
        rt_est, rt_asm = parse_spec(spec_to_dict(est, asm))
        assert rt_est == est and rt_asm == asm

    def test_spec_missing_estimand_rejected(self):
        with pytest.raises(PanelError, match="estimand"):
            parse_spec({"assumptions": {}})

    def test_float_round_trip_through_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        vals = rng.normal(size=20)
        df = pd.DataFrame({"unit": [f"u{k}" for k in range(20)],
                           "time": 1, "component": "treatment", "weight": vals})
        path = tmp_path / "w.csv"
        write_csv(path, df)
        back = read_weights_csv(path)
        np.testing.assert_array_equal(back["weight"].to_numpy(), vals)

    def test_weights_csv_requires_columns(self, tmp_path):
        path = tmp_path / "w.csv"
        pd.DataFrame({"unit": ["a"], "weight": [1.0]}).to_csv(path, index=False)
        with pytest.raises(PanelError, match="missing columns"):
            read_weights_csv(path)

    def test_write_json_rejects_nan(self, tmp_path):
        with pytest.raises(ValueError):
            write_json(tmp_path / "x.json", {"v": float("nan")})
        write_json(tmp_path / "x.json", {"v": np.float64(1.5), "n": np.int64(2)})
        assert json.loads((tmp_path / "x.json").read_text()) == {"v": 1.5, "n": 2}


class TestCli:
    def test_validate(self, workdir):
        res = run_cli(["validate", "--data", str(workdir / "panel.csv"),
                       "--out", str(workdir / "out")])
        assert res.exit_code == 0, res.output
        payload = json.loads((workdir / "out" / "validate.json").read_text())
        assert payload["units"] == 6 and payload["times"] == 6
        assert list(payload)[0] == "config_hash"

    def test_classify_artifacts(self, workdir):
        res = run_cli(["classify", "--data", str(workdir / "panel.csv"),
                       "--spec", str(workdir / "spec.json"),
                       "--out", str(workdir / "out")])
        assert res.exit_code == 0, res.output
        tags = pd.read_csv(workdir / "out" / "classification.csv")
        active = tags[tags["group"] != "Excluded"]
        assert len(active) == 6
        assert set(active["time"]) == {2003}

    def test_estimate_matches_difference_in_means(self, workdir):
        res = run_cli(["estimate", "--data", str(workdir / "panel.csv"),
                       "--spec", str(workdir / "spec.json"),
                       "--adjust", "none", "--out", str(workdir / "out")])
        assert res.exit_code == 0, res.output
        payload = json.loads((workdir / "out" / "estimate.json").read_text())
        # toy outcomes: treated mean at 2003 minus the never-treated value
        df = pd.DataFrame(toy_rows())
        at_ty = df[df["time"] == 2003]
        expected = (at_ty[at_ty["g"] != "never"]["outcome"].mean()
                    - at_ty[at_ty["g"] == "never"]["outcome"].mean())
        assert payload["estimate"] == pytest.approx(expected, abs=1e-12)
        w = pd.read_csv(workdir / "out" / "weights.csv")
        assert set(w["component"]) == {"treatment", "control"}
        assert w[w["component"] == "treatment"]["weight"].sum() == pytest.approx(1.0)

    def test_validation_error_exit_code(self, workdir, tmp_path):
        bad = tmp_path / "bad.csv"
        pd.DataFrame([{"unit": "u", "time": t, "outcome": 0.0, "treat": z}
                      for t, z in ((1, 0), (2, 1), (3, 0))]).to_csv(bad, index=False)
        res = run_cli(["validate", "--data", str(bad)])
        assert res.exit_code == EXIT_VALIDATION
        assert "non-staggered" in res.output

    def test_infeasible_exit_code(self, workdir, tmp_path):
        rows = []
        x = {"a": 0.0, "b": 0.1, "c": 5.0, "d": 5.1}
        init = {"a": 2, "b": 2, "c": "never", "d": "never"}
        for u in init:
            for t in (1, 2):
                rows.append({"unit": u, "time": t, "outcome": 1.0, "g": init[u],
                             "x_0": x[u]})
        data = tmp_path / "sep.csv"
        pd.DataFrame(rows).to_csv(data, index=False)
        spec = tmp_path / "sep_spec.json"
        spec.write_text(json.dumps({"estimand": {"t1": 2, "ty": 2}}))
        res = run_cli(["estimate", "--data", str(data), "--spec", str(spec),
                       "--adjust", "x_0", "--nonneg", "--delta", "0",
                       "--out", str(tmp_path / "out")])
        assert res.exit_code == EXIT_INFEASIBLE
        assert "infeasible" in res.output

    def test_twfe_decompose_and_diagnose(self, workdir):
        out = workdir / "out"
        res = run_cli(["twfe", "--data", str(workdir / "panel.csv"),
                       "--decompose", "tau=1", "--out", str(out)])
        assert res.exit_code == 0, res.output
        payload = json.loads((out / "twfe.json").read_text())
        assert payload["coefficients"]["tau[1]"] == pytest.approx(2.0, abs=1e-9)
        weights = out / "weights.csv"
        assert weights.exists()
        res = run_cli(["diagnose", "--data", str(workdir / "panel.csv"),
                       "--spec", str(workdir / "spec.json"),
                       "--in", str(weights), "--out", str(out)])
        assert res.exit_code == 0, res.output
        diag = json.loads((out / "diagnose.json").read_text())
        assert sum(diag["info_share"].values()) == pytest.approx(1.0, abs=1e-9)

    def test_event_study_artifacts(self, workdir):
        out = workdir / "out"
        res = run_cli(["event-study", "--data", str(workdir / "panel.csv"),
                       "--spec", str(workdir / "spec.json"),
                       "--family", "twfe", "--l-min", "-2", "--l-max", "3",
                       "--out", str(out)])
        assert res.exit_code == 0, res.output
        curve = pd.read_csv(out / "curve.csv")
        assert list(curve["l"]) == list(range(-2, 4))
        ref = curve[curve["l"] == -1]
        assert ref["estimate"].iloc[0] == 0.0

    def test_bootstrap_command(self, workdir):
        out = workdir / "out"
        res = run_cli(["bootstrap", "--data", str(workdir / "panel.csv"),
                       "--spec", str(workdir / "spec.json"),
                       "--family", "twfe", "--reps", "20", "--seed", "0",
                       "--out", str(out)])
        assert res.exit_code == 0, res.output
        payload = json.loads((out / "bootstrap.json").read_text())
        assert payload["replications"] == 20
        assert payload["se"] is not None


class TestDivorceLoader:
    def make_file(self, tmp_path, n_pre=0, n_post=0):
        states = [f"s{k}" for k in range(49)]
        years = list(range(1964, 1997))
        rows = []
        for j, s in enumerate(states):
            if j < n_pre:
                g = 1960
            elif j < n_pre + n_post:
                g = 2000
            elif j % 2 == 0:
                g = 1970 + (j % 20)
            else:
                g = "never"
            for y in years:
                rows.append({"state": s, "year": y, "suicide_rate": float(j + y % 7),
                             "divorce_year": g})
        path = tmp_path / "divorce.csv"
        pd.DataFrame(rows).to_csv(path, index=False)
        return path

    def test_loads_full_grid(self, tmp_path):
        panel = load_divorce_dataset(self.make_file(tmp_path))
        assert panel.n_units == 49 and panel.n_times == 33

    def test_pre_window_states_dropped_with_warning(self, tmp_path):
        path = self.make_file(tmp_path, n_pre=3)
        with pytest.warns(UserWarning, match="adoption before 1964"):
            panel = load_divorce_dataset(path)
        assert panel.n_units == 46

    def test_post_window_adopters_become_never(self, tmp_path):
        panel = load_divorce_dataset(self.make_file(tmp_path, n_post=2))
        assert panel.init_label(panel.units.index("s0")) == "never"
        assert panel.init_label(panel.units.index("s1")) == "never"

    def test_row_count_enforced(self, tmp_path):
        path = self.make_file(tmp_path)
        df = pd.read_csv(path).iloc[:-1]
        short = tmp_path / "short.csv"
        df.to_csv(short, index=False)
        with pytest.raises(PanelError, match="1,617"):
            load_divorce_dataset(short)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_divorce_dataset(tmp_path / "nope.csv")
