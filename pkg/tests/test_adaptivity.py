import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_afem.adaptivity import (
    CampaignError,
    ConvergenceTable,
    IterationRecord,
    RunConfig,
    TSHAPE_LAMBDA,
    effectivity,
    fit_rate,
    mark_elements,
    reference_eigenvalue,
    richardson_extrapolate,
    run_campaign,
)
from stokes_afem.estimators import IndicatorField


def field(beta):
    return IndicatorField(np.asarray(beta, float) ** 2)


def test_marking_examples():
    np.testing.assert_array_equal(mark_elements(field([1.0, 0.6, 0.4])), [0, 1])
    np.testing.assert_array_equal(mark_elements(field([0.3] * 5)), np.arange(5))
    np.testing.assert_array_equal(mark_elements(field([0.01, 0.02, 5.0, 0.03])), [2])


def test_marking_rejects_zero_field():
    with pytest.raises(ValueError):
        mark_elements(field([0.0, 0.0]))
    with pytest.raises(ValueError):
        mark_elements(field([]))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.0, 1e3, allow_nan=False), min_size=1, max_size=40).filter(lambda b: max(b) > 1e-100),
    st.floats(0.05, 1.0),
    st.floats(0.05, 1.0),
)
def test_marking_monotone_in_fraction(beta, f1, f2):
    lo, hi = sorted((f1, f2))
    small = set(mark_elements(field(beta), hi))
    large = set(mark_elements(field(beta), lo))
    assert small <= large
    assert int(np.argmax(np.sqrt(np.asarray(beta) ** 2))) in small


def test_fit_rate_exact_data():
    N = np.array([1e2, 4e2, 1.6e3, 6.4e3, 2.56e4])
    assert fit_rate((N, 1 / N)) == pytest.approx(-1.0, abs=1e-12)
    assert fit_rate((N, 3.0 * N**-0.67)) == pytest.approx(-0.67, abs=1e-12)
    assert fit_rate((N, np.r_[1.0, 1.0, N[2:] ** -2.0]), window=3) == pytest.approx(-2.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate((N[:1], N[:1]))
    with pytest.raises(ValueError):
        fit_rate((N, np.zeros(5)))


def test_fit_rate_on_published_uniform_column():
    # T-shape uniform full-scheme column of the published comparison table
    N = np.array([709, 2761, 10897, 43297, 172609, 689281, 2754817])
    lam = np.array([57.92345, 72.62093, 77.83306, 79.70449, 80.40016, 80.67504, 80.80019])
    assert fit_rate((N, TSHAPE_LAMBDA - lam)) == pytest.approx(-0.68, abs=5e-3)


def test_effectivity_examples():
    assert effectivity(2.18027e01, 1.71691e02) == pytest.approx(1.26988e-01, rel=1e-5)
    assert effectivity(3.5, 3.5) == 1.0
    assert effectivity(0.0, 2.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        effectivity(1.0, 0.0)


def test_reference_eigenvalues():
    assert reference_eigenvalue("tshape") == 80.87944
    assert reference_eigenvalue("tshape", mu=1.0) == pytest.approx(2 * 80.87944)
    assert reference_eigenvalue("square") == pytest.approx(52.3479, abs=1e-3)
    assert reference_eigenvalue("lshape", "reduced") == pytest.approx(32.1331, abs=1e-3)
    with pytest.raises(KeyError):
        reference_eigenvalue("disk")


def test_richardson_recovers_synthetic_limit():
    N = 1e3 * 4.0 ** np.arange(6)
    lam = 10.0 - 3.0 * N**-0.8
    a, c, r, rms = richardson_extrapolate(N, lam)
    assert (a, c, r) == pytest.approx((10.0, -3.0, 0.8), rel=1e-6)
    assert rms < 1e-10
    a2, *_ = richardson_extrapolate(N, lam, rate=0.8)
    assert a2 == pytest.approx(10.0, rel=1e-12)


def test_config_validation():
    with pytest.raises(ValueError, match="estimator"):
        RunConfig(scheme="reduced", estimator="eta")
    with pytest.raises(ValueError, match="domain"):
        RunConfig(domain="disk")
    with pytest.raises(ValueError, match="n0"):
        RunConfig(domain="tshape", n0=4)
    cfg = RunConfig(domain="square")
    assert (cfg.scheme, cfg.estimator, cfg.mu) == ("full", "eta", 0.5)


def test_table_requires_increasing_dofs():
    t = ConvergenceTable()
    t.append(IterationRecord(0, 10, 1.0, 0.1, 1.0, 0.1, 2, 0.0))
    with pytest.raises(ValueError):
        t.append(IterationRecord(1, 10, 1.0, 0.1, 1.0, 0.1, 2, 0.0))


def test_zero_iterations_single_solve():
    t = run_campaign(RunConfig(domain="square", max_iterations=0))
    assert len(t) == 1 and t.rows[0].iter == 0


def test_uniform_square_three_iterations():
    t = run_campaign(RunConfig(domain="square", refinement="uniform", max_iterations=3))
    N, err = t.column("N"), t.column("err")
    assert np.all(N[1:] / N[:-1] > 3.5)
    assert np.all(np.diff(err) < 0)
    assert np.all(t.column("estimator_sq") > 0)


def test_adaptive_tshape_monotone_eigenvalues():
    rows = []
    t = run_campaign(RunConfig(domain="tshape", max_iterations=6), on_row=rows.append)
    lam = t.column("lambda_h1")
    assert rows == t.rows
    assert np.all(np.diff(lam) > 0) and lam[-1] < TSHAPE_LAMBDA
    assert np.all(np.diff(t.column("N")) > 0)


def test_dof_cap_stops_campaign():
    t = run_campaign(RunConfig(domain="square", refinement="uniform", max_iterations=10, dof_cap=1000))
    assert t.rows[-1].N <= 1000 and len(t) == 3


def test_missing_reference_gives_nan_error(monkeypatch):
    import stokes_afem.adaptivity as ad

    monkeypatch.setattr(ad, "reference_eigenvalue", lambda *a, **k: (_ for _ in ()).throw(KeyError("x")))
    t = run_campaign(RunConfig(domain="square", max_iterations=0))
    assert math.isnan(t.rows[0].err)


def test_solver_failure_keeps_partial_table(monkeypatch):
    import stokes_afem.adaptivity as ad
    from stokes_afem.linalg import EigenSolverError

    real = ad.shift_invert_eigensolve
    calls = []

    def flaky(*a, **k):
        calls.append(1)
        if len(calls) > 2:
            raise EigenSolverError("forced")
        return real(*a, **k)

    monkeypatch.setattr(ad, "shift_invert_eigensolve", flaky)
    with pytest.raises(CampaignError) as info:
        run_campaign(RunConfig(domain="square", max_iterations=5))
    assert len(info.value.table) == 2


def test_deterministic_reruns():
    cfg = RunConfig(domain="lshape", max_iterations=5)
    a, b = run_campaign(cfg), run_campaign(cfg)
    strip = lambda t: [(r.iter, r.N, r.lambda_h1, r.err, r.estimator_sq, r.elements) for r in t.rows]  # noqa: E731
    assert strip(a) == strip(b)
    np.testing.assert_array_equal(a.mesh.triangles, b.mesh.triangles)
    np.testing.assert_array_equal(a.indicators.local, b.indicators.local)
