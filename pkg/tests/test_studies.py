import numpy as np
import pytest

from harmflow import studies as st
from harmflow.errors import DomainError

np.seterr(over="ignore", invalid="ignore")


def test_fit_slope_synthetic():
    rs = [0.4, 0.2, 0.1, 0.05]
    slope, _, r2 = st.fit_slope([(r, r ** 2) for r in rs])
    assert abs(slope - 2.0) < 1e-12 and r2 > 0.999999
    slope, _, _ = st.fit_slope([(r, 7.0) for r in rs])
    assert abs(slope) < 1e-12
    rng = np.random.default_rng(0)
    noisy = [(r, 3.0 * r ** 1.5 * (1.0 + 0.01 * rng.normal())) for r in rs]
    slope, _, _ = st.fit_slope(noisy)
    assert 1.4 <= slope <= 1.6
    # all-zero values signal exact decay
    slope, _, r2 = st.fit_slope([(r, 0.0) for r in rs])
    assert slope == np.inf and r2 == 1.0
    with pytest.raises(DomainError):
        st.fit_slope([(0.1, 1.0), (0.05, 0.5)])


def test_flat_registry_references():
    # analytic energies agree with a direct quadrature of the densities
    from scipy.integrate import dblquad
    for name, tm in st.FLAT_MAPS.items():
        val, err = dblquad(lambda y, x: tm.density(x, y), 0, 1, 0, 1,
                           epsabs=1e-10)
        assert abs(val - tm.energy) < 1e-8, name


def test_flat_identity_gaps_vanish():
    res = st.flat_convergence_study("id", grid=4, levels=3)
    gaps = [row[res.columns.index("energy_gap")] for row in res.rows]
    assert max(gaps) < 1e-10


def test_flat_sine_slopes():
    res = st.flat_convergence_study("sine", grid=4, levels=4)
    assert res.checks["energy_gap_slope>=1.7"]
    assert res.checks["tension_slope>=1.7"]
    assert res.checks["density_slope>=1.7"]
    assert res.checks["measure_slope>=0.7"]
    assert res.slopes["energy_gap"][2] is None or res.slopes["energy_gap"][2] > 0.99


def test_shear_map_energy():
    res = st.flat_convergence_study("shear", grid=2, levels=2)
    energies = [row[res.columns.index("discrete_energy")] for row in res.rows]
    assert all(abs(e - 1.5) < 1e-10 for e in energies)


def test_flat_pl_exactness():
    res = st.flat_pl_exactness_study(grid=3, levels=1, n_maps=8, seed=1)
    assert res.passed and res.extras["worst"] < 1e-8


def test_run_study_dispatch():
    res = st.run_study({"kind": "flat_convergence", "map_name": "id",
                        "grid": "2", "levels": "3"})
    assert res.kind == "flat_convergence"
    with pytest.raises(DomainError):
        st.run_study({"kind": "nope"})
    with pytest.raises(DomainError):
        st.run_study({"kind": "flat_convergence", "bogus": "1"})


@pytest.mark.slow
def test_hyperbolic_flow_study_small():
    res = st.hyperbolic_flow_study(levels=2, presubdivide=1)
    assert res.checks["cauchy_decreasing"]
