from fractions import Fraction
import numpy as np
import pytest
from scipy import integrate
from couettelab import multipliers as mp
from couettelab import utils as u

@pytest.fixture
def params():
    return mp.MultiplierParams(nu=1e-6, gamma2=1.0)

def test_params_validation():
    with pytest.raises(ValueError, match="γ² > 1/4"):
        mp.MultiplierParams(nu=1e-3, gamma2=0.25)
    with pytest.raises(ValueError, match="s ≥ 6"):
        mp.MultiplierParams(nu=1e-3, s=5)
    with pytest.raises(ValueError):
        mp.MultiplierParams(nu=1e-3, c=0.2)
    with pytest.raises(ValueError):
        mp.MultiplierParams(nu=0.0)
    with pytest.raises(ValueError):
        mp.MultiplierParams(nu=1e-3, gamma2=1.0, K=1.0)
    p = mp.MultiplierParams(nu=1e-3, gamma2=1.0)
    assert np.isclose(p.sigma, np.sqrt(3))
    assert p.K == 4.0
    assert mp.MultiplierParams(nu=1e-3, gamma2=0.3).K == pytest.approx(3 / np.sqrt(0.2))

def test_smoothstep():
    assert mp.smoothstep(0.0) == 0 and mp.smoothstep(-1.0) == 0
    assert mp.smoothstep(1.0) == 1 and mp.smoothstep(2.0) == 1
    assert np.isclose(mp.smoothstep(0.5), 0.5)
    x = np.linspace(0, 1, 11)
    assert np.allclose(mp.smoothstep(x) + mp.smoothstep(1 - x), 1.0)

def test_phi_profile():
    phi = mp.PhiProfile()
    assert np.isclose(phi(0.0), 0.5)
    assert np.isclose(phi(0.5), 0.625) and np.isclose(phi(-0.5), 0.375)
    assert np.isclose(phi(1.0), 0.75)
    assert phi(5.0) == 1.0 and phi(-5.0) == 0.0
    x = np.linspace(-4, 4, 801)
    vals = phi(x)
    assert np.all(np.diff(vals) >= -1e-12)
    assert np.all((vals >= 0) & (vals <= 1))
    assert np.all(phi.derivative(np.linspace(-1, 1, 21)) == 0.25)

@pytest.mark.parametrize("x", [-2.5, -1.7, 1.3, 2.0, 2.9])
def test_phi_derivative_matches_values(x):
    phi = mp.PhiProfile()
    h = 1e-5
    fd = (phi(x + h) - phi(x - h)) / (2 * h)
    assert np.isclose(fd, phi.derivative(x), atol=1e-6)

def test_m1_flat_region(params):
    # x(t) stays inside [-1, 1] so M1 = -(1/4) nu^{1/3} |k|^{2/3} t
    assert np.isclose(mp.m1(50.0, 1, 0.0, params), -0.25 * 1e-2 * 50)
    assert np.isclose(mp.m1_rate(50.0, 1, 0.0, params), -0.25 * 1e-2)
    assert mp.m1(0.0, 3, 7.0, params) == 0

def test_m2_examples():
    assert mp.m2(0.0, 2, 3.0) == 0
    assert np.isclose(mp.m2(1.0, 1, 1.0), -np.pi / 4)
    assert np.isclose(mp.m2(1e12, 1, 0.0), -np.pi / 2)
    assert mp.m2_rate(2.0, 1, 2.0) == -1.0

def test_k_zero_rejected(params):
    for fun in [lambda: mp.m2(1.0, 0, 1.0), lambda: mp.m3(1.0, 0, 1.0),
                lambda: mp.m1(1.0, 0, 1.0, params), lambda: mp.symbol_N(1.0, 0, 1.0)]:
        with pytest.raises(ValueError):
            fun()

def test_gfunc():
    assert mp.gfunc(0.0) == 0
    assert np.isclose(mp.gfunc(-2.0), -mp.gfunc(2.0))
    for x in [0.3, 1.0, 4.0, 50.0]:
        val, _ = integrate.quad(lambda v: (1 + v * v)**(-0.75), 0, x, epsabs=1e-14, epsrel=1e-14)
        assert np.isclose(mp.gfunc(x), val, rtol=1e-10)
    assert np.isclose(mp.gfunc(1e12), mp.I_INF / 2, rtol=1e-5)

@pytest.mark.parametrize("t, k, eta", [(0.5, 1, 0.0), (3.0, 1, 2.0), (10.0, -2, 7.5), (40.0, 5, -3.0)])
def test_m3_quadrature_matches_table(t, k, eta):
    assert np.isclose(mp.m3(t, k, eta), mp.m3_table(t, k, eta), rtol=1e-10, atol=1e-12)

def test_m3_limits():
    assert mp.m3(0.0, 1, 3.0) == 0
    assert mp.m3_table(0.0, 2, 3.0) == 0
    assert mp.m3_table(1e8, 1, 0.0) >= -mp.I_INF
    assert np.isclose(mp.m3_table(1e12, 1, 0.0), -mp.I_INF / 2, rtol=1e-5)

def test_script_M_and_calA(params):
    assert mp.script_M(0.0, 1, 0.0, params) == 1.0
    p = mp.MultiplierParams(nu=1e-3, s=6)
    assert np.isclose(mp.calA(0.0, 1, 0.0, p), 8.0)

    key = u.PRNGKey("script-M")
    k1, k2, k3 = key.split(3)
    t = u.uniform(k1, 0, 300, 500)
    k = np.floor(u.uniform(k2, 1, 20, 500))
    eta = u.uniform(k3, -100, 100, 500)
    M = mp.script_M(t, k, eta, params)
    assert np.all(M <= 1) and np.all(M >= params.c0)

def test_script_M_non_increasing(params):
    ts = np.linspace(0, 100, 1001)
    M = mp.script_M(ts, 2, 30.0, params)
    assert np.all(np.diff(M) <= 1e-15)

def test_ck_rates_nonnegative(params):
    ts = np.linspace(0, 50, 101)
    for rate in mp.ck_rates(ts, -3, 12.0, params):
        assert np.all(rate >= 0)

def test_symbol_N():
    assert mp.symbol_N(0.0, 1, 0.0) == 1
    assert np.isclose(mp.symbol_N(1.0, 1, 3.0), 5**0.25)
    assert np.isclose(mp.symbol_N(0.0, 4, 0.0), 1.0)
    assert mp.symbol_Ndot(3.0, 1, 3.0) == 0
    h = 1e-5
    for t, k, eta in [(0.4, 1, 2.0), (7.0, -2, 3.0), (20.0, 3, 1.0)]:
        fd = (mp.symbol_N(t + h, k, eta) - mp.symbol_N(t - h, k, eta)) / (2 * h)
        assert np.isclose(fd, mp.symbol_Ndot(t, k, eta), rtol=1e-6, atol=1e-10)

# ====================
# zero-mode multiplier
# ====================

def test_resonance_partition_eta9():
    parts = mp.resonance_partition(9.0)
    assert [p.k for p in parts] == [3, 2, 1]
    assert np.allclose([p.interval for p in parts], [(18/7, 18/5), (18/5, 6), (6, 18)])
    assert np.isclose(mp.critical_start(9.0), 18 / 7)
    assert [p.k for p in mp.resonance_partition(-9.0)] == [-3, -2, -1]

def test_resonance_partition_eta3():
    parts = mp.resonance_partition(3.0)
    assert len(parts) == 1
    assert parts[0].k == 1 and np.allclose(parts[0].interval, (2.0, 6.0))
    assert mp.critical_start(3.0) == 2.0
    with pytest.raises(ValueError):
        mp.resonance_partition(2.5)

@pytest.mark.parametrize("eta", [3, 4, 9, 10, 24, 25, 100])
def test_resonance_intervals_tile(eta):
    # exact arithmetic: consecutive intervals share endpoints, from t(eta) to 2|eta|
    n = u.floor_sqrt(eta)
    bounds = [(Fraction(2 * eta, 2 * k + 1), Fraction(2 * eta, 2 * k - 1)) for k in range(n, 0, -1)]
    assert bounds[0][0] == Fraction(2 * eta, 2 * n + 1)
    assert bounds[-1][1] == 2 * eta
    for (_, right), (left, _) in zip(bounds[:-1], bounds[1:]):
        assert right == left
    parts = mp.resonance_partition(float(eta))
    assert np.allclose([p.interval for p in parts], [(float(a), float(b)) for a, b in bounds])

def test_m_zero_mode_trivial_regions():
    assert mp.m_zero_mode(5.0, 2.0) == 1.0
    assert mp.m_zero_mode(18.0, 9.0) == 1.0
    assert mp.m_zero_mode(100.0, -9.0) == 1.0

def test_m_zero_mode_eta3_closed_form():
    # only k = 1 resonates: m(2) = exp(-int_{-1}^{3} (1 + v^2)^{-3/4} dv)
    expected = np.exp(-(mp.gfunc(3.0) + mp.gfunc(1.0)))
    assert np.isclose(mp.m_zero_mode(2.0, 3.0), expected, rtol=1e-9)
    assert mp.m_zero_mode(0.0, 3.0) == mp.m_zero_mode(2.0, 3.0)
    expected = np.exp(-mp.gfunc(3.0))
    assert np.isclose(mp.m_zero_mode(3.0, 3.0), expected, rtol=1e-9)

def test_m_zero_mode_properties():
    ts = np.linspace(0, 40, 161)
    vals = np.array([mp.m_zero_mode(t, 17.3) for t in ts])
    assert np.all(np.diff(vals) >= -1e-10)
    assert np.all((vals >= mp.M_MIN) & (vals <= 1))
    assert mp.m_zero_mode(5.0, 17.3) == mp.m_zero_mode(5.0, -17.3)
    assert np.allclose(mp.m_table(4.0, np.array([[2.0, 9.0], [-9.0, 0.0]])),
                       [[1.0, mp.m_zero_mode(4.0, 9.0)], [mp.m_zero_mode(4.0, 9.0), 1.0]])

@pytest.mark.parametrize("t, eta", [(4.0, 3.0), (7.0, 9.0), (3.0, 9.0)])
def test_m_rate_matches_finite_difference(t, eta):
    h = 1e-4
    fd = (mp.m_zero_mode(t + h, eta) - mp.m_zero_mode(t - h, eta)) / (2 * h)
    assert np.isclose(fd, mp.m_rate(t, eta), rtol=1e-6)

def test_nonzero_tables_zero_row():
    K, ETA = np.meshgrid([0, 1, -1], [0.0, 0.5], indexing='ij')
    A, N, Nd = mp.nonzero_tables(1.0, K, ETA, mp.MultiplierParams(nu=1e-3))
    assert np.all(A[0] == 0) and np.all(N[0] == 0) and np.all(Nd[0] == 0)
    assert np.all(A[1:] > 0) and np.all(N[1:] > 0)

# ====================
# sampled properties
# ====================

def test_low_bound_margin_nonnegative():
    key = u.PRNGKey("low-bound")
    k1, k2, k3, k4 = key.split(4)
    nu = 10**u.uniform(k1, -8, -1, 2000)
    k = np.floor(u.uniform(k2, 1, 40, 2000))
    eta = u.uniform(k3, -200, 200, 2000)
    t = u.uniform(k4, 0, 400, 2000)
    assert np.min(mp.low_bound_margin(nu, k, eta, t, mp.PhiProfile())) >= -1e-12

def test_verify_lemmas_all_pass():
    reports = mp.verify_lemmas(400, u.PRNGKey("lemmas"), mp.MultiplierParams(nu=1e-3), fd_samples=15)
    names = [r.lemma for r in reports]
    assert "low-bound" in names and "m-range" in names and "ode-m" in names
    failed = [r for r in reports if not r.passed]
    assert not failed, failed
