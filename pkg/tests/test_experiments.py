import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import elastoscat.fem as fem
from elastoscat.experiments import (DEFAULT_EPS, RATE_COLUMNS, ConfigWarning, ExperimentConfig, RateStudyError,
                                    RateStudyRow, fit_loglog_slope, fit_rows, in_band, oracle_rate_study,
                                    read_rate_csv, run_rate_study, run_validation)

SMALL = dict(h=0.2, eps=(1e-1, 1e-2, 1e-3), layer_first=None, n_dtn=20, n_far=16)


class TestSlopeFit:
    def test_linear(self):
        fit = fit_loglog_slope([(e, e) for e in DEFAULT_EPS])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_sqrt(self):
        fit = fit_loglog_slope([(e, 3 * math.sqrt(e)) for e in DEFAULT_EPS])
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)

    def test_seeded_noise(self):
        rng = np.random.default_rng(0)
        noise = rng.standard_normal(len(DEFAULT_EPS))
        fit = fit_loglog_slope([(e, 2 * math.sqrt(e) * (1 + 0.01 * n)) for e, n in zip(DEFAULT_EPS, noise)])
        assert 0.48 <= fit.slope <= 0.52

    @settings(max_examples=50)
    @given(st.floats(0.1, 3.0), st.floats(1e-3, 1e3), st.integers(3, 12))
    def test_power_law_recovered(self, p, c, n):
        eps = np.logspace(-4, -1, n)
        fit = fit_loglog_slope(list(zip(eps, c * eps**p)))
        assert fit.slope == pytest.approx(p, abs=1e-9)

    @pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 3)], [(1, 1), (2, -1), (3, 3)],
                                     [(1, 1), (2, float("nan")), (3, 3)]])
    def test_rejects(self, pts):
        with pytest.raises(ValueError):
            fit_loglog_slope(pts)

    def test_band(self):
        assert in_band(0.45) and in_band(1.1) and not in_band(0.449) and not in_band(1.11)

    def test_low_r2_warns(self):
        rows = [dict(eps=e, h1_diff=v) for e, v in zip(DEFAULT_EPS, (1, 5, 1, 5, 1, 5, 1))]
        fits, notes = fit_rows(rows, ("h1_diff",))
        assert fits["h1_diff"].r2 < 0.98 and "R^2" in notes[0]


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.eps == DEFAULT_EPS
        assert cfg.ext.lam == 2.0 and cfg.ext.omega == math.pi
        assert cfg.scene.get(2)[1] == 1 + 0.2j
        assert cfg.h <= cfg.max_h()
        assert cfg.max_h() == pytest.approx(0.2476, abs=1e-4)

    def test_parse(self):
        cfg = ExperimentConfig.from_ini("""
[scene]
a = 0.4
[materials]
annulus = homogeneous
annulus.rho = 1+0.5j
[wave]
omega = pi
incident = plane_s
source = bump 1.25 0 0.2 0 1
[study]
case = 2
eps = 0.1, 0.01, 0.001   # comment
[discretization]
h = 0.1
layer_first = none
""")
        assert cfg.a == 0.4 and cfg.annulus == (2.0, 1.0, 1 + 0.5j)
        assert cfg.obstacle == "rigid" and cfg.eps == (0.1, 0.01, 0.001)
        assert cfg.layer() is None and cfg.source_field().radius == 0.2
        assert cfg.incident_field().kind == "plane_s"

    def test_round_trip(self):
        cfg = ExperimentConfig(case=2, obstacle="rigid", h=0.1, polygon=((0.5, 0), (0, 0.5), (-0.5, 0), (0, -0.5)),
                               source=(1.25, 0.0, 0.2, 0.0, 1.0), layer_first=0.01, mms_h0=0.3)
        assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg
        assert ExperimentConfig.from_ini(ExperimentConfig().to_ini()) == ExperimentConfig()

    @pytest.mark.parametrize("kw", [
        dict(eps=(1e-1, 1e-2)), dict(eps=(1e-2, 1e-1, 1e-3)), dict(eps=(2.0, 1e-1, 1e-2)),
        dict(case=2), dict(case=3), dict(h=0.3), dict(n_far=7), dict(annulus=(-2.0, 1.0, 1.0)),
        dict(params=(1, 1, 0, 1)), dict(degree=3), dict(incident="spherical"),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_unknown_section_and_preset(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_ini("[mystery]\nx = 1\n")
        with pytest.raises(ValueError):
            ExperimentConfig.from_ini("[materials]\nannulus = unobtainium\n")

    def test_lossless_warns_and_notes(self):
        with pytest.warns(ConfigWarning):
            cfg = ExperimentConfig(params=(1, 1, 1, 0))
        assert any("tau0" in n for n in cfg.notes)
        assert math.isinf(cfg.decay_length(1e-4))

    def test_layer_rule(self):
        cfg = ExperimentConfig()
        lay = cfg.layer()
        assert lay.first == pytest.approx(0.25 * cfg.decay_length(1e-4))
        assert ExperimentConfig(case=2, obstacle="rigid").layer() is None
        assert ExperimentConfig(layer_first=0.01).layer().first == 0.01

    def test_mms_meshes(self):
        assert ExperimentConfig().mms_meshes() == (0.2, 0.1, 0.05, 0.025)
        assert ExperimentConfig(h=0.2).mms_meshes()[0] == pytest.approx(0.45)


class TestRows:
    def test_row_invariants(self):
        with pytest.raises(ValueError):
            RateStudyRow(1e-2, -1.0, 0, 0, 0, 0, 0.1, 10)
        with pytest.raises(ValueError):
            RateStudyRow(1e-2, 1.0, float("nan"), 0, 0, 0, 0.1, 10)


class TestRateStudy:
    def test_deterministic_and_single_obstacle_solve(self, tmp_path, monkeypatch):
        calls = []
        orig = fem.solve_obstacle

        def counting(*a, **k):
            calls.append(1)
            return orig(*a, **k)

        monkeypatch.setattr(fem, "solve_obstacle", counting)
        cfg = ExperimentConfig(**SMALL)
        r1 = run_rate_study(cfg, tmp_path / "a")
        assert len(calls) == 1 and r1.obstacle_solves == 1
        r2 = run_rate_study(cfg, tmp_path / "b")
        a = (tmp_path / "a" / "rates.csv").read_bytes()
        assert a == (tmp_path / "b" / "rates.csv").read_bytes()
        assert (tmp_path / "a" / "fits.csv").read_bytes() == (tmp_path / "b" / "fits.csv").read_bytes()
        rows = read_rate_csv(tmp_path / "a" / "rates.csv")
        assert tuple(rows[0]) == RATE_COLUMNS and len(rows) == 3
        assert [r["eps"] for r in rows] == list(cfg.eps)
        assert r1.rows[0].h1_diff > r1.rows[-1].h1_diff

    def test_failure_records_eps(self, monkeypatch):
        def boom(*a, **k):
            raise FloatingPointError("synthetic")

        monkeypatch.setattr(fem, "solve_effective", boom)
        with pytest.raises(RateStudyError) as info:
            run_rate_study(ExperimentConfig(**SMALL))
        assert info.value.eps == 1e-1

    def test_oracle_study_schema(self, tmp_path):
        res = oracle_rate_study(ExperimentConfig(), tmp_path)
        rows = read_rate_csv(tmp_path / "oracle_rates.csv")
        assert tuple(rows[0]) == RATE_COLUMNS and len(rows) == 7
        assert in_band(res.slope("h1_diff"))
        assert any("homogeneous background" in n for n in res.warnings)
        with pytest.raises(ValueError):
            oracle_rate_study(ExperimentConfig(polygon=((0.5, 0), (0, 0.5), (-0.5, 0), (0, -0.5))))


class TestValidation:
    def test_coarse_negative_control(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = run_validation(ExperimentConfig(h=0.2, oracle_h=0.1, n_dtn=30))
        mms = rep.get("mms_p1")
        assert not mms.passed and mms.value > 1.1
        assert not rep.passed
        assert rep.get("dtn_modes").passed and rep.get("oracle_rigid").passed
        assert "FAIL" in rep.text() and "mms_p1" in rep.text()
