import json

import numpy as np
import pytest

from torsionlab import experiments as ex
from torsionlab.exceptions import PrerequisiteError


def test_loglog_fit_recovers_power():
    x = np.array([16.0, 32.0, 64.0])
    fit = ex.loglog_fit(x, 3.0 * x**-2)
    assert fit["slope"] == pytest.approx(-2.0, abs=1e-12)
    assert fit["residual_rms"] < 1e-12


def test_criterion_kinds():
    assert ex.Criterion.check("a", 1.0, "<=", 2.0).passed
    assert not ex.Criterion.check("a", 3.0, ">=", 4.0).passed
    assert ex.Criterion.check("a", 0.9, "in", (0.8, 1.05)).passed
    assert not ex.Criterion.check("a", float("nan"), "<=", 1.0).passed
    assert ex.Criterion.check("a", None, "<=", 1.0).line().startswith("FAIL")
    with pytest.raises(ValueError):
        ex.Criterion.check("a", 1.0, "<", 2.0)


def test_report_roundtrip_and_recompute(tmp_path):
    rep = ex.ExperimentReport(name="demo", params={"N": 4}, domains=[])
    rep.add("small", 1e-4, "<=", 1e-3)
    rep.series["rows"] = [{"N": 4.0, "err": 1e-4}, {"N": 8.0, "err": 2.5e-5}]
    path = rep.write(tmp_path)
    data = json.loads(path.read_text())
    assert ex.ExperimentReport.recompute(data)
    assert (tmp_path / "demo_rows.csv").read_text().splitlines()[0] == "N,err"
    assert (tmp_path / "demo_rows.dat").read_text().startswith("# N err")
    data["verdicts"][0]["measured"] = 1.0
    with pytest.raises(ValueError):
        ex.ExperimentReport.recompute(data)


def test_rectangle_convergence_report():
    rep = ex.exp_approx_convergence("rectangle", (4, 8), 1 / 64)
    assert rep.passed, rep.summary()
    assert len(rep.series["per_N"]) == 2


def test_sandwich_on_rectangle():
    rep = ex.exp_max_value_sandwich(16, "rectangle", 4.0, 1 / 64)
    assert rep.passed, rep.summary()
    assert rep.metrics["delta"] == 0.0
    assert rep.metrics["v_star"] == pytest.approx(rep.metrics["v_star_series"], abs=1e-4)


def test_torsion_near_eigenmax_rectangle():
    rep = ex.exp_torsion_near_eigenmax("rectangle", 16, 1 / 64)
    assert rep.passed, rep.summary()
    assert rep.metrics["K"] >= 0


def test_directional_without_certificate_carries_report():
    with pytest.raises(PrerequisiteError) as info:
        ex.exp_directional_hessian(64, 8.0, 1 / 64, 4.0)
    rep = info.value.report
    assert rep is not None and not rep.passed
    assert len(rep.series["directions"]) == 16
    assert rep.metrics["neg_vyy"] == pytest.approx(1.0, abs=0.05)


def test_cache_is_shared():
    a = ex.torsion("rectangle", 4, 1 / 32)
    assert ex.torsion("rectangle", 4, 1 / 32) is a
    assert any(f is a for f in ex.solved_torsion_fields())
