import numpy as np
import pytest

from ptqm.dynamics import two_level_closed_form
from ptqm.errors import InvariantError, ValidationError
from ptqm.invariants import (
    DysonSeries,
    dyson_series_iterate,
    hk_seed_maps,
    invariant_similarity_eta,
    lr_phase,
    lr_residual,
    metric_ratio_invariant,
    polar_adjusted_seed,
    quadratic_invariant,
    swanson_invariant_trajectory,
    swanson_time_dependent_dyson,
    transported_invariant,
)
from ptqm.models import build_fock_single, build_fock_two_mode, build_hk, build_two_level
from ptqm.numcore import PAULI_X, PAULI_Z, TimeSeries, hermitian_defect

OMEGA, LAM, KAPPA = 1.0, 2.0, 1.0


def second_metric(t, z=0.3 + 0.2j):
    c3 = np.sqrt((1 + 4 * abs(z) ** 2) / (1 - KAPPA**2 / LAM**2))
    return two_level_closed_form(OMEGA, LAM, KAPPA, t, (z, np.conj(z), c3, 0.0))


def test_transported_invariant_is_invariant():
    H_fn = lambda s: build_two_level(1.0, 2.0 + np.sin(s), 1.0)
    t = np.linspace(0, 2, 201)
    I = transported_invariant(H_fn, PAULI_X, t, n_steps=40)
    res = lr_residual(I, H_fn)
    assert res.values[4:-4].max() < 1e-5


def test_metric_ratio_is_invariant():
    t = np.linspace(0, 5, 201)
    H = build_two_level(OMEGA, LAM, KAPPA)
    a, b = two_level_closed_form(OMEGA, LAM, KAPPA, t), second_metric(t)
    I = metric_ratio_invariant(a.rho, b.rho)
    assert lr_residual(I, lambda s: H).values[4:-4].max() < 1e-6


def test_invariant_similarity_eta_and_lr_phase():
    t = np.linspace(0, 3, 301)
    H = build_two_level(OMEGA, LAM, KAPPA)
    a, b = two_level_closed_form(OMEGA, LAM, KAPPA, t), second_metric(t)
    I = metric_ratio_invariant(a.rho, b.rho)
    eta, diag = invariant_similarity_eta(I, lambda s: H)
    assert diag["eigenvalue_drift"] < 1e-10
    assert diag["tdde_antihermitian"] < 1e-5
    # right eigenvector of I from the columns of eta^{-1}
    phis = TimeSeries(t, np.array([np.linalg.inv(e)[:, 0] for e in eta.values]))
    _, psi, res = lr_phase(phis, lambda s: H, I_traj=I)
    assert res[4:-4].max() < 1e-5


def test_lr_phase_rejects_non_eigenvector():
    t = np.linspace(0, 1, 11)
    I = TimeSeries(t, np.array([PAULI_Z] * len(t)))
    phis = TimeSeries(t, np.array([[np.cos(s), np.sin(s)] for s in t], dtype=complex))
    with pytest.raises(InvariantError):
        lr_phase(phis, lambda s: PAULI_Z, I_traj=I)


def test_quadratic_invariant_harmonic():
    # for a p^2 + b x^2 with a = b = 1/2 the invariant p^2 + x^2 is constant
    t = np.linspace(0, 4, 41)
    y = quadratic_invariant(lambda s: 0.5, lambda s: 0.5, lambda s: 0.0, t)
    assert np.abs(y - [1.0, 1.0, 0.0]).max() < 1e-10


def test_swanson_invariant_conserved():
    rep = build_fock_single(60)
    alpha = 0.3
    Om = lambda s: 1 + 0.2 * np.sin(s)
    rec = swanson_invariant_trajectory(1.0, 1.0, Om, alpha, lambda s: -4 * alpha**2 - Om(s) ** 2,
                                       np.linspace(0, 2, 201), rep)
    assert rec.residual[4:-4].max() < 1e-5
    assert rec.meta["pinney_residual"] < 1e-8


def test_swanson_time_dependent_dyson_residual():
    rep = build_fock_single(60)
    _, h, res = swanson_time_dependent_dyson(1.0, 0.2, 0.05, 1.3, -0.1, 1.1, rep)
    assert res < 1e-8
    assert hermitian_defect(h) < 1e-12


def test_dyson_series_polar_seed_accepts_levels():
    t = np.linspace(0, 5, 101)
    H = build_two_level(OMEGA, LAM, KAPPA)
    a, b = two_level_closed_form(OMEGA, LAM, KAPPA, t), second_metric(t)
    et, etd = polar_adjusted_seed(a.eta, b.eta, a.diagnostics["eta_dot"], b.diagnostics["eta_dot"])
    series = dyson_series_iterate(a.eta, et, lambda s: H, depth=3, eta_dot=a.diagnostics["eta_dot"], eta_tilde_dot=etd)
    acc = series.accepted()
    assert len(acc) >= 3
    assert {0, 1, 2} <= set(acc)
    for v in series.verdicts:
        if v["gate_passed"]:
            assert v["hermiticity_defect"] <= 1e-6
            assert v["tdde_residual"] < 1e-6


def test_dyson_series_raw_seed_is_rejected():
    # without the polar adjustment A is not normal, so A I_h A^{-1} is not Hermitian
    t = np.linspace(0, 5, 101)
    H = build_two_level(OMEGA, LAM, KAPPA)
    a, b = two_level_closed_form(OMEGA, LAM, KAPPA, t), second_metric(t)
    series = dyson_series_iterate(a.eta, b.eta, lambda s: H, depth=3, eta_dot=a.diagnostics["eta_dot"],
                                  eta_tilde_dot=b.diagnostics["eta_dot"])
    assert series.truncated
    assert 2 not in series.accepted()


def test_dyson_series_bookkeeping():
    assert DysonSeries.power("eta", 2) == 2
    assert DysonSeries.power("eta_tilde", 2) == 3
    assert DysonSeries.label(3) == [("eta", 3), ("eta_tilde", 2)]
    # eta~ eta^{-1} eta~ = A^2 eta, eta eta~^{-1} eta = A^{-1} eta
    assert DysonSeries.combine(("eta", 0), ("eta_tilde", 0)) == (2, -1)
    with pytest.raises(ValidationError):
        DysonSeries.power("other", 0)


def test_hk_scalar_seed_maps_solve_dyson_equation():
    rep, K = build_fock_two_mode(16)
    lam = lambda s: 0.2
    t = np.linspace(0, 1, 41)
    e, et, ed, etd, meta = hk_seed_maps(0.5, 0.3, lam, t, K)
    H_fn = lambda s: build_hk(1.0, 1.0, lam, s, K)
    series = dyson_series_iterate(e, et, H_fn, depth=0, eta_dot=ed, eta_tilde_dot=etd, rep=rep, margin=6)
    seeds = [v for v in series.verdicts if v["k"] in (0, 1)]
    assert all(v["tdde_residual"] < 1e-6 for v in seeds)
