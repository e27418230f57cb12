import numpy as np
import pytest
from scipy import integrate
from couettelab import linear as lin
from couettelab import diagnostics as dg
from couettelab import spectral as sp
from couettelab import utils as u

@pytest.fixture
def params():
    return lin.LinearParams(nu=0.0, gamma2=1.0)

def test_mode_rhs_examples(params):
    assert lin.mode_rhs(lin.ModeState(1, 0.0, 1.0, 0.0), params) == (0, 1)
    assert lin.mode_rhs(lin.ModeState(1, 0.0, 0.0, 1.0), params) == (-1, 0)
    df, dTh = lin.mode_rhs(lin.ModeState(1, 0.0, 1.0, 1.0, t=3.0), lin.LinearParams(nu=0.1, gamma2=1.0))
    assert np.isclose(df, -2.0)
    assert np.isclose(dTh, -0.9)

def test_zero_mode_rejected():
    with pytest.raises(ValueError):
        lin.ModeState(0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        lin.decay_envelope(0, 1.0, 1.0, 0.0)

def test_params_validation():
    with pytest.raises(ValueError):
        lin.LinearParams(nu=-1.0)
    with pytest.raises(ValueError):
        lin.LinearParams(gamma2=0.0)
    with pytest.raises(ValueError):
        lin.LinearParams(gamma2=0.2).sigma
    assert np.isclose(lin.LinearParams(gamma2=1.25).sigma**2, 4.0)

def test_integrate_mode_rejects_bad_step(params):
    with pytest.raises(ValueError):
        lin.integrate_mode(lin.ModeState(1, 0.0, 1.0, 0.0), params, 1.0, 0.0)

def test_viscous_integral_closed_form():
    k, eta, t0, t1 = 3, 2.5, 0.7, 4.1
    val, _ = integrate.quad(lambda s: k**2 + (eta - k * s)**2, t0, t1)
    assert np.isclose(lin.viscous_integral(k, eta, t0, t1), val, rtol=1e-13)
    assert np.isclose(lin.viscous_integral(1, 0.0, 0.0, 2.0), 2 + 8 / 3)

def test_decoupled_viscous_decay():
    p = lin.LinearParams(nu=0.01, gamma2=1e-300)
    traj = lin.integrate_mode(lin.ModeState(1, 0.0, 1.0, 0.0), p, 5.0, 0.1)
    assert np.isclose(traj[-1].t, 5.0)
    for s in traj:
        assert np.isclose(s.f_hat, np.exp(-0.01 * (s.t + s.t**3 / 3)), rtol=1e-12)

def test_integrate_mode_against_dop853(params):
    traj = lin.integrate_mode(lin.ModeState(1, 0.0, 1.0, 0.0), params, 100.0, 0.01)
    assert np.isclose(traj[-1].t, 100.0)

    def rhs(t, y):
        return [-y[1], y[0] / (1 + t * t)]
    sol = integrate.solve_ivp(rhs, (0, 100.0), [1.0 + 0j, 0j], method="DOP853",
                              rtol=1e-12, atol=1e-14)
    ref = sol.y[:, -1]
    got = np.array([traj[-1].f_hat, traj[-1].Theta_hat])
    assert np.linalg.norm(got - ref) <= 1e-8 * np.linalg.norm(ref)

def test_decay_envelope_examples():
    assert lin.decay_envelope(1, 0.0, 0.0, 0.0) == (1.0, 1.0)
    g, _ = lin.decay_envelope(1, 0.0, 10.0, 0.0)
    assert np.isclose(g, 101**0.25)
    g, d = lin.decay_envelope(1, 10.0, 10.0, 0.0)
    assert np.isclose(g, (1 / 101)**0.25)
    assert np.isclose(g * d, 1.0)
    g, d = lin.decay_envelope(2, 1.0, 3.0, 1e-3, c=0.1)
    assert np.isclose(g * d, np.exp(-2 * 0.1 * 1e-3 * 4 * 27))
    assert g > 0 and d > 0

def test_symmetrized_energy_examples():
    p = lin.LinearParams(gamma2=2.0)
    assert lin.symmetrized_energy(lin.ModeState(1, 0.0, 0.0, 0.0), p) == 0
    assert np.isclose(lin.symmetrized_energy(lin.ModeState(2, 4.0, 1.0, 0.0, t=2.0), p), 1.0)
    p = lin.LinearParams(gamma2=0.3)
    assert np.isclose(lin.symmetrized_energy(lin.ModeState(1, 3.0, 1.0, -1.0, t=3.0), p), 0.3)
    with pytest.raises(ValueError):
        lin.symmetrized_energy(lin.ModeState(1, 0.0, 1.0, 0.0), lin.LinearParams(gamma2=0.25))

def test_symmetrized_energy_matches_form_eigenvalue():
    # E(f, Theta) >= lambda_min (|f|^2 + |Theta|^2)
    key = u.PRNGKey("form")
    vals = u.normal(key, size=(50, 4))
    for t, (a, b, c, d) in zip(np.linspace(0, 20, 50), vals):
        s = lin.ModeState(1, 5.0, a + 1j * b, c + 1j * d, t=t)
        lam = lin.min_form_eigenvalue(t, 1, 5.0, 1.0)
        assert lin.symmetrized_energy(s, lin.LinearParams(gamma2=1.0)) >= lam * (abs(s.f_hat)**2 + abs(s.Theta_hat)**2) - 1e-12

def test_miles_howard_transition():
    ts = np.linspace(0, 50, 201)
    assert any(lin.min_form_eigenvalue(t, 1, 5.0, 0.20) < 0 for t in ts)
    assert all(lin.min_form_eigenvalue(t, 1, 5.0, 0.26) > 0 for t in ts)

@pytest.mark.parametrize("gamma2", [0.3, 1.0, 4.0])
@pytest.mark.parametrize("eta", [0.0, 5.0])
def test_inviscid_damping_exponents(gamma2, eta):
    p = lin.LinearParams(nu=0.0, gamma2=gamma2)
    traj = lin.integrate_mode(lin.ModeState(1, eta, 1.0, 0.0), p, 2000.0, 0.5)
    t, env_f, env_th = lin.mode_envelopes(traj, p)
    fit_f = dg.fit_rates((t, env_f), (20.0, 2000.0))
    fit_th = dg.fit_rates((t, env_th), (20.0, 2000.0))
    assert abs(fit_f.power_exponent - 0.5) <= 0.05
    assert abs(fit_th.power_exponent + 0.5) <= 0.05

def test_inviscid_growth_envelope():
    p = lin.LinearParams(nu=0.0, gamma2=1.0)
    traj = lin.integrate_mode(lin.ModeState(1, 0.0, 1.0, 0.0), p, 1000.0, 0.5)
    _, env_f, _ = lin.mode_envelopes(traj, p)
    growth = np.array([lin.decay_envelope(1, 0.0, s.t, 0.0)[0] for s in traj])
    ratio = env_f / growth
    assert 1 / 10 <= ratio.min() and ratio.max() <= 10

@pytest.mark.parametrize("gamma2", [0.3, 1.0, 4.0])
@pytest.mark.parametrize("eta", [0.0, -3.0])
def test_gronwall_constant(gamma2, eta):
    p = lin.LinearParams(nu=0.0, gamma2=gamma2)
    traj = lin.integrate_mode(lin.ModeState(1, eta, 1.0, 0.0), p, 200.0, 0.1)
    assert 0 <= lin.gronwall_constant(traj, p) <= 10

def test_enhanced_dissipation_scaling():
    times = [lin.dissipation_time(1, 0.0, lin.LinearParams(nu=nu, gamma2=1.0))
             for nu in [1e-4, 1e-5, 1e-6]]
    for t1, t2 in zip(times[:-1], times[1:]):
        assert abs(t2 / t1 / 10**(1/3) - 1) <= 0.15

def test_trajectory_frame(params):
    traj = lin.integrate_mode(lin.ModeState(1, 0.0, 1.0, 0.0), params, 1.0, 0.1)
    df = lin.trajectory_frame(traj)
    assert list(df.columns) == ['t', 'f_re', 'f_im', 'Theta_re', 'Theta_im']
    assert len(df) == len(traj)

# ====================
# good unknowns
# ====================

@pytest.fixture
def grid():
    return sp.Grid(8, 16, L_y=np.pi)

def random_nonzero_field(grid, key):
    k1, k2 = key.split()
    c = u.normal(k1, size=grid.shape) + 1j * u.normal(k2, size=grid.shape)
    c = sp.enforce_reality(sp.zero_nyquist(np.where(grid.band_mask(), c, 0), grid))
    c[0] = 0
    return sp.SpectralField(grid, c)

def test_good_unknowns_zero(grid, params):
    z = sp.zeros(grid)
    X1, X2 = lin.to_good_unknowns(z, z, sp.ShearFrame(1.0), params)
    assert np.all(X1.coeffs == 0) and np.all(X2.coeffs == 0)
    f, th = lin.from_good_unknowns(z, z, sp.ShearFrame(1.0), params)
    assert np.all(f.coeffs == 0) and np.all(th.coeffs == 0)

@pytest.mark.parametrize("t", [0.0, 2.0, 5.0, 50.0])
def test_good_unknowns_round_trip(grid, t):
    p = lin.LinearParams(gamma2=0.7)
    f = random_nonzero_field(grid, u.PRNGKey(("f", t)))
    th = random_nonzero_field(grid, u.PRNGKey(("th", t)))
    frame = sp.ShearFrame(t)
    X1, X2 = lin.to_good_unknowns(f, th, frame, p)
    f2, th2 = lin.from_good_unknowns(X1, X2, frame, p)
    assert np.allclose(f2.coeffs, f.coeffs, rtol=1e-12, atol=1e-12)
    assert np.allclose(th2.coeffs, th.coeffs, rtol=1e-12, atol=1e-12)
    Y1, Y2 = lin.to_good_unknowns(f2, th2, frame, p)
    assert np.allclose(Y1.coeffs, X1.coeffs, rtol=1e-12, atol=1e-12)
    assert np.allclose(Y2.coeffs, X2.coeffs, rtol=1e-12, atol=1e-12)

def test_good_unknowns_single_mode(grid, params):
    f = sp.from_modes(grid, {(1, 0): 1.0})
    X1, X2 = lin.to_good_unknowns(f, sp.zeros(grid), sp.ShearFrame(0.0), params)
    assert np.isclose(X1.coeffs[grid.index_of(1, 0)], 1.0)
    assert X2.coeffs[grid.index_of(1, 0)] == 0

    X1 = sp.from_modes(grid, {(1, 3): 1.0})
    f, _ = lin.from_good_unknowns(X1, sp.zeros(grid), sp.ShearFrame(1.0), params)
    assert np.isclose(f.coeffs[grid.index_of(1, 3)], 5**0.25)

def test_good_unknowns_rejections(grid, params):
    mean = sp.from_modes(grid, {(0, 1): 1.0})
    with pytest.raises(ValueError):
        lin.to_good_unknowns(mean, sp.zeros(grid), sp.ShearFrame(0.0), params)
    f = sp.from_modes(grid, {(1, 1): 1.0})
    with pytest.raises(ValueError):
        lin.to_good_unknowns(f, sp.zeros(grid), sp.ShearFrame(0.0), lin.LinearParams(gamma2=0.25))
