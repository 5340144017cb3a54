import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptqm.darboux import (
    Grid1D,
    complexify_superpotential,
    core_mask,
    crank_nicolson,
    export_snapshots_csv,
    free_gaussian,
    gaussian_packet,
    grid_spectrum,
    susy_factorize,
    td_darboux_hermitian,
    td_darboux_nonhermitian,
    tdse_residual,
)
from ptqm.errors import DomainError, SingularTransformationError, ValidationError


def zero(x, t):
    return np.zeros_like(x)


@pytest.fixture(scope="module")
def free_pair():
    g = Grid1D(-20, 20, 2000)
    t = np.arange(0, 501) * 1e-3
    u = crank_nicolson(zero, gaussian_packet(g.x, 0, 1, 0.5), g, t)
    return td_darboux_hermitian(zero, u, g, t)


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid1D(0, 1, 50)
    with pytest.raises(ValidationError):
        Grid1D(1, 0, 500)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 2.0), st.floats(-1, 1))
def test_grid_derivatives_of_gaussians(a, x0):
    g = Grid1D(-10, 10, 1000)
    f = np.exp(-a * (g.x - x0) ** 2)
    df = -2 * a * (g.x - x0) * f
    d2f = (4 * a**2 * (g.x - x0) ** 2 - 2 * a) * f
    assert np.abs(g.d1(f) - df).max() < 1e-5
    assert np.abs(g.d2(f) - d2f).max() < 1e-4


def test_integrate_matches_erf():
    from scipy.special import erf

    g = Grid1D(-6, 6, 1201)
    F = g.integrate(np.exp(-g.x**2))
    exact = 0.5 * np.sqrt(np.pi) * (erf(g.x) + erf(6))
    assert np.abs(F - exact).max() < 1e-8


def test_laplacian_orders():
    errs = {2: [], 4: []}
    for n in (400, 800):
        g = Grid1D(-10, 10, n)
        f = np.exp(-g.x**2)
        d2 = (4 * g.x**2 - 2) * f
        for order in errs:
            errs[order].append(np.abs(g.laplacian(order) @ f - d2)[5:-5].max())
    assert 3.5 < errs[2][0] / errs[2][1] < 4.5
    assert errs[4][0] / errs[4][1] > 12


def test_harmonic_superpotential_spectra():
    # W = x: V1 = x^2 - 1 has E = 2n, V2 = x^2 + 1 has E = 2n + 2
    g = Grid1D(-10, 10, 2000)
    pair = susy_factorize(lambda x: x, g)
    e1, e2 = pair.spectra(5)
    assert np.abs(e1 - 2 * np.arange(5)).max() < 1e-4
    assert np.abs(e2 - 2 * np.arange(1, 6)).max() < 1e-4
    assert pair.pairing_error(5) < 1e-4


def test_factorization_defect_converges():
    tests = lambda x: [np.exp(-x**2), x * np.exp(-(x**2) / 2), np.cos(x) * np.exp(-(x**2) / 4)]
    d = []
    for n in (500, 1000):
        g = Grid1D(-8, 8, n)
        d.append(max(susy_factorize(np.tanh(2 * g.x), g).factorization_defect(tests(g.x))))
    assert d[1] < d[0] / 4
    assert d[1] < 1e-5


def test_tanh_ground_state_annihilated():
    # W = tanh x: L_- sech x = 0 and V1 = 1 - 2 sech^2 x
    g = Grid1D(-15, 15, 3000)
    pair = susy_factorize(np.tanh, g)
    psi0 = 1 / np.cosh(g.x)
    assert np.abs(pair.L_minus(psi0)).max() < 1e-7
    assert np.abs(pair.V1 - (1 - 2 / np.cosh(g.x) ** 2)).max() < 1e-7


def test_susy_rejects_under_resolved():
    g = Grid1D(-1, 1, 200)
    with pytest.raises(DomainError):
        susy_factorize(np.where(g.x > 0, 1e3, -1e3), g)


@pytest.mark.parametrize("sign,real", [(1, "V1"), (-1, "V2")])
def test_complexified_superpotential_reality(sign, real):
    g = Grid1D(-5, 5, 1000)
    _, rep = complexify_superpotential(np.cosh, g, sign=sign)
    assert rep["real"] == [real]
    assert not rep["degenerate"]


def test_complexified_constant_is_degenerate():
    g = Grid1D(-5, 5, 400)
    pair, rep = complexify_superpotential(lambda x: np.full_like(x, 2.0), g)
    assert rep["degenerate"]
    assert np.allclose(pair.V1, pair.V2)


def test_complexified_requires_positive_imaginary_part():
    g = Grid1D(-5, 5, 400)
    with pytest.raises(DomainError):
        complexify_superpotential(np.sinh, g)
    with pytest.raises(ValidationError):
        complexify_superpotential(np.cosh, g, sign=2)


def test_grid_spectrum_complex_potential_is_pt_real():
    g = Grid1D(-8, 8, 1600)
    # x^2 + i x = (x + i/2)^2 + 1/4, so E = 2n + 1 + 1/4
    w = grid_spectrum(g, g.x**2 + 1j * g.x, 3)
    assert np.abs(w - (2 * np.arange(3) + 1 + 0.25)).max() < 1e-4


def test_crank_nicolson_free_gaussian():
    g = Grid1D(-20, 20, 2000)
    t = np.arange(0, 201) * 1e-3
    u = crank_nicolson(zero, gaussian_packet(g.x, 0, 1, 0.5), g, t)
    exact = np.array([free_gaussian(g.x, s, 1, 0.5) for s in t])
    assert np.abs(u - exact).max() < 1e-5
    # unitary up to the boundary
    norms = np.trapezoid(np.abs(u) ** 2, g.x, axis=1)
    assert np.ptp(norms) < 1e-10


def test_free_gaussian_solves_tdse():
    g = Grid1D(-20, 20, 2000)
    t = np.linspace(0, 0.5, 101)
    psi = np.array([free_gaussian(g.x, s, 1, 0.5) for s in t])
    r = tdse_residual(g, t, psi, 0.0)
    assert np.abs(r[2:-2]).max() < 1e-5


def test_hermitian_darboux_partner(free_pair):
    d = free_pair.diagnostics
    assert d["seed_residual"] < 1e-5
    assert d["phi1_residual"] < 1e-4
    assert not d["x_dependent"]
    assert np.all(free_pair.ell1 > 0)
    psi = np.array([free_gaussian(free_pair.grid.x, s, 1.2, -0.3) for s in free_pair.times])
    assert free_pair.intertwining_residual(psi) < 1e-4


def test_darboux_refinement_order():
    res = []
    for n, dt in ((500, 4e-3), (1000, 2e-3)):
        g = Grid1D(-20, 20, n)
        t = np.arange(0, int(round(0.5 / dt)) + 1) * dt
        u = crank_nicolson(zero, gaussian_packet(g.x, 0, 1, 0.5), g, t)
        res.append(td_darboux_hermitian(zero, u, g, t).diagnostics["phi1_residual"])
    assert np.log2(res[0] / res[1]) >= 1.8


def test_darboux_seed_with_zero_raises():
    g = Grid1D(-5, 5, 200)
    t = np.linspace(0, 0.1, 11)
    u = np.array([np.sin(g.x) + 0j for _ in t])
    with pytest.raises(SingularTransformationError):
        td_darboux_hermitian(zero, u, g, t)


def test_darboux_unknown_anchor():
    g = Grid1D(-5, 5, 200)
    t = np.linspace(0, 0.1, 11)
    u = np.array([gaussian_packet(g.x) for _ in t])
    with pytest.raises(ValidationError):
        td_darboux_hermitian(zero, u, g, t, anchor="edge")


def test_harmonic_background_darboux():
    g = Grid1D(-10, 10, 2000)
    t = np.arange(0, 301) * 1e-3
    v0 = lambda x, s: x**2
    u = crank_nicolson(v0, gaussian_packet(g.x, 0.5, 0.8, 0.0), g, t)
    dp = td_darboux_hermitian(v0, u, g, t)
    assert dp.diagnostics["phi1_residual"] < 1e-3


def test_nonhermitian_lift(free_pair):
    nh = td_darboux_nonhermitian(
        free_pair,
        lambda x, s: np.exp(-0.05 * x**2),
        lambda x, s: np.exp(-0.03 * x**2 * (1 + s)),
    )
    d = nh.diagnostics
    assert d["integral_monotone"] and d["nodeless"] and d["rho1_norm_finite"]
    assert d["psi1_residual"] < 1e-3
    psi = np.array([free_gaussian(free_pair.grid.x, s, 1.2, -0.3) for s in free_pair.times]) / nh.eta0
    assert nh.intertwining_residual(psi) < 1e-3
    assert nh.tdse_residual(nh.psi0, 0) < 1e-3


def test_nonhermitian_singular_map(free_pair):
    with pytest.raises(SingularTransformationError):
        td_darboux_nonhermitian(free_pair, lambda x, s: x, lambda x, s: np.ones_like(x))


def test_core_mask():
    u = np.array([[1.0, 0.5, 1e-3], [1.0, 0.02, 0.5]])
    assert core_mask(u).tolist() == [True, True, False]


def test_export_snapshots(tmp_path, free_pair):
    p = tmp_path / "snap.csv"
    export_snapshots_csv(p, free_pair.grid, free_pair.v1, free_pair.phi1, t_index=-1)
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert data.shape == (free_pair.grid.n, 4)
    assert p.read_text().splitlines()[0] == "x,re_v,im_v,abs_psi_sq"
