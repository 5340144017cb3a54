import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptqm.errors import DomainError, TruncationError, ValidationError
from ptqm.ermakov import (
    dissipative_ep_chi,
    gamma_chain,
    hk_hermitian_and_energy,
    hk_product_eta,
    integrate_source,
    linear_pair,
    pinney_constraint,
    pinney_constraint_report,
    pinney_sigma,
)
from ptqm.models import build_fock_two_mode


def lam_slow(t):
    return 0.3 * (1 + 0.5 * np.sin(t))


def test_linear_pair_wronskian():
    t = np.linspace(0, 3, 61)
    u, ud, v, vd = linear_pair(lambda s: -1.0 - 0.2 * s, t, v_scale=2.0)
    assert np.abs(u * vd - v * ud - 2.0).max() < 1e-10


def test_linear_pair_harmonic_exact():
    t = np.linspace(0, 3, 31)
    u, ud, v, vd = linear_pair(lambda s: -4.0, t)
    assert np.abs(u - np.cos(2 * t)).max() < 1e-10
    assert np.abs(v - 0.5 * np.sin(2 * t)).max() < 1e-10


def test_pinney_constant_frequency_closed_form():
    # kappa = -w0^2, u = cos w0 t, v = sin(w0 t)/w0: A = omega/w0, B = omega w0 gives sigma^2 = omega/w0
    w0, omega = 1.7, 0.9
    t = np.linspace(0, 4, 81)
    sol = pinney_sigma(lambda s: -(w0**2), omega, omega / w0, omega * w0, 0.0, t_grid=t)
    assert np.abs(sol.values.values - np.sqrt(omega / w0)).max() < 1e-10
    assert np.abs(sol.residual).max() < 1e-10


def test_pinney_squared_constraint_is_the_consistent_one():
    kappa = lambda s: -(1.0 + 0.3 * np.cos(s))
    rep = pinney_constraint_report(kappa, 0.8, 2.0, 1.5, np.linspace(0, 5, 201), v_scale=2.0)
    assert rep["squared"] < 1e-8
    assert rep["printed"] > 1e-3


def test_pinney_constraint_validation():
    with pytest.raises(ValidationError):
        pinney_constraint(1, 1, 1, 1, form="other")
    with pytest.raises(DomainError):
        pinney_constraint(0.1, 0.1, 1, 1)


def test_pinney_rejects_nonpositive_sigma():
    with pytest.raises(DomainError):
        pinney_sigma(lambda s: -1.0, 1.0, 1.0, 1.0, 2.0, t_grid=np.linspace(0, 3, 11))


def test_integrate_source_polynomial():
    t = np.linspace(0, 2, 21)
    assert np.abs(integrate_source(lambda s: 1 + s**2, t) - (t + t**3 / 3)).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(-1.0, 1.0), st.floats(0.2, 2.0), st.floats(-0.5, 0.5))
def test_dissipative_ep_residual_random_lambda(c3, c4, a0, a1):
    lam = lambda s: a0 + a1 * np.sin(2 * s)
    sol = dissipative_ep_chi(lam, c3, c4, np.linspace(0, 1, 101))
    scale = np.maximum(1.0, np.abs(sol.values.values) * np.abs(sol.meta["lam"]) ** 2)
    assert np.abs(sol.residual / scale).max() < 1e-8


def test_dissipative_ep_rejects_vanishing_lambda():
    with pytest.raises(DomainError):
        dissipative_ep_chi(lambda s: s, 0.5, 0.2, np.linspace(0, 1, 11))


def test_gamma_chain_constraint_and_flow():
    t = np.linspace(0, 1, 201)
    ch = gamma_chain(dissipative_ep_chi(lam_slow, 0.5, 0.3, t))
    assert np.abs(ch.constraint_residual()).max() < 1e-14
    r3, r4 = ch.flow_residual()
    assert max(np.abs(r3[4:-4]).max(), np.abs(r4[4:-4]).max()) < 1e-7


def test_gamma_chain_flow_converges_under_refinement():
    errs = []
    for n in (51, 101, 201):
        ch = gamma_chain(dissipative_ep_chi(lam_slow, 0.5, 0.3, np.linspace(0, 1, n)))
        errs.append(max(np.abs(r).max() for r in ch.flow_residual()))
    assert errs[0] / errs[1] > 4 and errs[1] / errs[2] > 4


def test_gamma_chain_passes_through_chi_one():
    # c4 - Lambda crosses zero, so gamma3 changes sign smoothly
    t = np.linspace(0, 2, 401)
    ch = gamma_chain(dissipative_ep_chi(lambda s: 1.0, 0.4, 1.0, t))
    g3 = ch.gamma3.values
    assert g3[0] > 0 > g3[-1]
    r3, _ = ch.flow_residual()
    assert np.abs(r3[4:-4]).max() < 1e-7
    with pytest.raises(ValidationError):
        ch.at(0.0012345)


def test_hk_hermitian_energy_on_interior():
    rep, K = build_fock_two_mode(24)
    t = np.linspace(0, 1, 201)
    ch = gamma_chain(dissipative_ep_chi(lam_slow, 0.5, 0.3, t))
    for s in (0.0, 0.5, 1.0):
        h, Ht, d = hk_hermitian_and_energy(lambda u: 1.0, lam_slow, ch, K, s, rep=rep, margin=8)
        assert d["tdde_residual"] < 1e-6
        assert d["h_hermitian_defect"] == 0.0
        assert d["energy_residual"] < 1e-6


def test_hk_truncation_detected():
    rep, K = build_fock_two_mode(8)
    t = np.linspace(0, 1, 21)
    ch = gamma_chain(dissipative_ep_chi(lambda s: 2.0, 3.0, 2.0, t))
    with pytest.raises(TruncationError):
        hk_hermitian_and_energy(lambda u: 1.0, lambda u: 2.0, ch, K, 0.0, rep=rep, margin=0)


def test_hk_product_eta_identity():
    _, K = build_fock_two_mode(8)
    assert np.allclose(hk_product_eta([0, 0, 0, 0], K), np.eye(64))
