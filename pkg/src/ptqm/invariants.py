"""Lewis-Riesenfeld invariants and invariant-based Dyson maps.

An invariant of ``H`` satisfies ``dI/dt - (i/hbar)[I, H] = 0``. If two
Dyson maps ``eta`` and ``eta~`` solve the time-dependent Dyson equation for
the same ``H``, powers of ``A = eta~ eta^{-1}`` generate further candidate
maps, each of which is accepted only if the transported invariant stays
Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.optimize import linear_sum_assignment

from .dynamics import propagator
from .errors import InvariantError, ValidationError
from .numcore import (
    TimeSeries,
    anticommutator,
    dagger,
    expm,
    fd_derivative,
    hermitian_defect,
    norm2,
    resolve_hbar,
)
from .symmetry import biorthonormalize


@dataclass
class InvariantRecord:
    """Invariant samples with their conservation residual."""

    I: TimeSeries
    residual: np.ndarray
    hamiltonian: str = ""
    meta: dict = field(default_factory=dict)


def lr_residual(I_traj: TimeSeries, H_fn, hbar: float | None = None, I_dot=None, rep=None, margin: int = 2) -> TimeSeries:
    """Pointwise ``|dI/dt - (i/hbar)[I, H]|`` (spectral norm).

    ``dI/dt`` is a fourth-order finite difference unless ``I_dot`` samples
    are given. With ``rep`` the norm is taken on the interior subspace of a
    truncated Fock representation.
    """
    hb = resolve_hbar(hbar)
    t, Is = I_traj.times, I_traj.values
    dI = fd_derivative(Is, t) if I_dot is None else np.asarray(I_dot)
    out = np.empty(len(t))
    for k, I in enumerate(Is):
        H = np.asarray(H_fn(t[k]))
        R = dI[k] - 1j / hb * (I @ H - H @ I)
        out[k] = rep.interior_norm(R, margin) if rep is not None else norm2(R)
    return TimeSeries(t, out)


def transported_invariant(H_fn, I0, t_grid, n_steps: int = 20, hbar: float | None = None) -> TimeSeries:
    """``I(t) = U(t, t0) I0 U(t, t0)^{-1}``, an invariant for any ``I0``."""
    t = np.asarray(t_grid, dtype=float)
    I0 = np.asarray(I0, dtype=complex)
    U = np.eye(I0.shape[0], dtype=complex)
    out = [I0]
    for k in range(1, len(t)):
        U = propagator(H_fn, t[k - 1], t[k], n_steps, hbar) @ U
        out.append(U @ I0 @ np.linalg.inv(U))
    return TimeSeries(t, np.array(out))


def metric_ratio_invariant(rho: TimeSeries, rho_tilde: TimeSeries) -> TimeSeries:
    """``rho^{-1} rho~`` for two solutions of the quasi-Hermiticity equation.

    Both metrics evolve as ``rho -> U^{-dagger} rho U^{-1}``, so the ratio is
    transported as an invariant of ``H``.
    """
    return TimeSeries(rho.times, np.array([np.linalg.solve(a, b) for a, b in zip(rho.values, rho_tilde.values)]))


# ---------------------------------------------------------------------------
# Dyson maps from invariants


def _match_order(prev, new):
    cost = np.abs(prev[:, None] - new[None, :])
    _, cols = linear_sum_assignment(cost)
    return cols


def invariant_similarity_eta(I_traj: TimeSeries, H_fn=None, hbar: float | None = None, herm_tol: float = 1e-12):
    """Dyson maps with ``eta I eta^{-1}`` Hermitian (diagonal), one per sample.

    Rows of ``eta`` are the left eigenvectors of ``I``. The eigenvalues are
    constant for a genuine invariant, so they are matched across samples by
    value, and each row's phase is aligned with the previous sample.

    Two residual freedoms remain: a time-dependent phase and norm per row.
    If ``H_fn`` is given the norms are fixed by requiring the diagonal of
    ``h = eta H eta^{-1} + i hbar eta' eta^{-1}`` to be real, i.e. each row
    is scaled by ``exp(-(1/hbar) int Im h_nn)``. Without ``H_fn`` the
    balanced gauge of :func:`ptqm.symmetry.biorthonormalize` is kept.

    Returns
    -------
    eta : TimeSeries
    diagnostics : dict
        ``eigenvalue_drift`` and, with ``H_fn``, ``tdde_antihermitian``
        (largest anti-Hermitian part of ``h`` after the norm fix).

    Raises
    ------
    ExceptionalPointError
        If some sample of ``I`` has coalescing eigenvectors.
    """
    t, Is = I_traj.times, I_traj.values
    n = Is.shape[1]
    if all(hermitian_defect(I) <= herm_tol * max(norm2(I), 1.0) for I in Is):
        return TimeSeries(t, np.broadcast_to(np.eye(n, dtype=complex), Is.shape).copy()), {"eigenvalue_drift": 0.0, "identity_gauge": True}
    etas = np.empty_like(Is, dtype=complex)
    lams = np.empty((len(t), n), complex)
    prev_rows = None
    for k, I in enumerate(Is):
        sysk = biorthonormalize(I)
        w, rows = sysk.eigenvalues, dagger(sysk.phi)
        if k > 0:
            perm = _match_order(lams[k - 1], w)
            w, rows = w[perm], rows[perm]
            ov = np.einsum("ij,ij->i", prev_rows.conj(), rows)
            rows = rows * (np.abs(ov) / np.where(ov == 0, 1, ov))[:, None]
        etas[k], lams[k], prev_rows = rows, w, rows
    diag = {"eigenvalue_drift": float(np.abs(lams - lams[0]).max()), "eigenvalues": lams[0]}
    if H_fn is not None:
        hb = resolve_hbar(hbar)
        d_eta = fd_derivative(etas, t)
        im_diag = np.empty((len(t), n))
        for k in range(len(t)):
            inv = np.linalg.inv(etas[k])
            h = etas[k] @ np.asarray(H_fn(t[k])) @ inv + 1j * hb * d_eta[k] @ inv
            im_diag[k] = np.diag(h).imag
        log_r = -cumulative_simpson(im_diag, x=t, axis=0, initial=0.0) / hb
        etas = etas * np.exp(log_r)[:, :, None]
        d_eta = fd_derivative(etas, t)
        anti = 0.0
        for k in range(len(t)):
            inv = np.linalg.inv(etas[k])
            h = etas[k] @ np.asarray(H_fn(t[k])) @ inv + 1j * hb * d_eta[k] @ inv
            anti = max(anti, hermitian_defect(h))
        diag["tdde_antihermitian"] = anti
    return TimeSeries(t, etas), diag


# ---------------------------------------------------------------------------
# Lewis-Riesenfeld phase


def lr_phase(phi_traj: TimeSeries, H_fn, hbar: float | None = None, I_traj: TimeSeries | None = None, drift_tol: float = 1e-6):
    """Phase that turns an invariant eigenvector into a solution of the TDSE.

    With ``theta' = (1/hbar) <phi|i hbar d/dt - H|phi> / <phi|phi>``,
    ``Psi = exp(i theta) phi`` solves ``i hbar Psi' = H Psi``; for
    ``hbar = 1`` ``theta`` is the usual LR phase. The derivative of ``phi``
    is a fourth-order finite difference and ``theta`` is accumulated with
    Simpson's rule.

    Returns
    -------
    theta : TimeSeries
    psi : TimeSeries
    residual : numpy.ndarray
        ``|i hbar Psi' - H Psi|`` per sample.

    Raises
    ------
    InvariantError
        If ``I_traj`` is given and the eigenvalue ``<phi|I phi>/<phi|phi>``
        drifts by more than ``drift_tol``.
    """
    hb = resolve_hbar(hbar)
    t, phis = phi_traj.times, phi_traj.values
    if I_traj is not None:
        lam = np.array([np.vdot(p, I @ p) / np.vdot(p, p) for p, I in zip(phis, I_traj.values)])
        drift = float(np.abs(lam - lam[0]).max())
        if drift > drift_tol:
            raise InvariantError(f"invariant eigenvalue drifts by {drift:.2e}; phi is not an eigenvector of a conserved invariant")
    dphi = fd_derivative(phis, t)
    rate = np.array(
        [np.vdot(p, 1j * hb * dp - np.asarray(H_fn(s)) @ p) / np.vdot(p, p) for s, p, dp in zip(t, phis, dphi)]
    ) / hb
    # cumulative_simpson drops imaginary parts, so integrate them separately
    theta = cumulative_simpson(rate.real, x=t, initial=0.0) + 1j * cumulative_simpson(rate.imag, x=t, initial=0.0)
    psi = np.exp(1j * theta)[:, None] * phis
    dpsi = fd_derivative(psi, t)
    res = np.array([np.linalg.norm(1j * hb * dp - np.asarray(H_fn(s)) @ p) for s, p, dp in zip(t, psi, dpsi)])
    return TimeSeries(t, theta), TimeSeries(t, psi), res


# ---------------------------------------------------------------------------
# quadratic invariants and the Swanson model


def quadratic_invariant(a_fn, b_fn, c_fn, t_grid, init=(1.0, 1.0, 0.0), tol: float = 1e-12):
    """Invariant ``A p^2 + B x^2 + C {x, p}`` of ``a p^2 + b x^2 + c {x, p}``.

    The coefficients obey ``A' = 4(c A - a C)``, ``B' = 4(b C - c B)``,
    ``C' = 2(b A - a B)``, independent of ``hbar``; returns an array of
    shape ``(len(t_grid), 3)``.
    """
    t = np.asarray(t_grid, dtype=float)

    def rhs(s, y):
        A, B, C = y
        a, b, c = a_fn(s), b_fn(s), c_fn(s)
        return [4 * (c * A - a * C), 4 * (b * C - c * B), 2 * (b * A - a * B)]

    sol = solve_ivp(rhs, (t[0], t[-1]), list(init), t_eval=t, rtol=tol, atol=tol, method="DOP853")
    return sol.y.T


def swanson_invariant(m, omega, sigma, sigma_t, gamma, gamma_t, alpha, rep) -> np.ndarray:
    """Invariant of the constant-mass Swanson Hamiltonian at one instant.

    ``sigma`` solves ``sigma'' - kappa sigma - omega^2/sigma^3 = 0`` and
    ``gamma'' = kappa gamma`` with ``kappa = 2 i alpha' - 4 alpha^2 - Omega^2``.
    """
    x, p = rep.ops["x"], rep.ops["p"]
    n = x.shape[0]
    s, st, g, gt, a = sigma, sigma_t, gamma, gamma_t, alpha
    cx = m * (g * omega**2 / s**2 + 2j * a * (s**2 * gt - g * s * st) - s * st * gt + g * st**2)
    cxp = 0.5 * s * (2j * a * s - st)
    cxx = 0.5 * m * ((st - 2j * a * s) ** 2 + omega**2 / s**2)
    c0 = 0.5 * m * (g**2 * omega**2 / s**2 + g**2 * st**2 + s**2 * gt**2 - 2 * g * gt * s * st)
    cp = s * (s * gt - g * st)
    return s**2 / (2 * m) * (p @ p) + cx * x + cxp * anticommutator(x, p) + cxx * (x @ x) + c0 * np.eye(n) + cp * p


def swanson_invariant_trajectory(m, omega, Omega_fn, alpha_fn, kappa_fn, t_grid, rep, A=1.0, B=1.0, C=None, gamma0=(0.3, 0.2), hbar=None, margin: int = 6) -> InvariantRecord:
    """Invariant of ``H_S`` along a grid with its conservation residual.

    ``kappa_fn`` must be real-valued (which fixes ``Im alpha`` in terms of
    ``Re alpha``). ``sigma`` comes from the Pinney construction with a
    numerically integrated pair ``u, v`` of unit Wronskian and
    ``gamma = g0 u + g1 v``. ``C`` defaults to the value required by
    ``A B - C^2 = omega^2``.
    """
    from .ermakov import linear_pair, pinney_constraint, pinney_sigma
    from .models import build_swanson

    t = np.asarray(t_grid, dtype=float)
    if C is None:
        C = pinney_constraint(A, B, omega, 1.0)
    uu, ud, vv, vd = linear_pair(kappa_fn, t)
    sig = pinney_sigma(kappa_fn, omega, A, B, C, t_grid=t)
    s, st = sig.values.values, sig.meta["sigma_dot"]
    g = gamma0[0] * uu + gamma0[1] * vv
    gt = gamma0[0] * ud + gamma0[1] * vd
    Is = np.array([swanson_invariant(m, omega, s[k], st[k], g[k], gt[k], complex(alpha_fn(t[k]) if callable(alpha_fn) else alpha_fn), rep) for k in range(len(t))])
    traj = TimeSeries(t, Is)
    res = lr_residual(traj, lambda s_: build_swanson(m, Omega_fn, alpha_fn, s_, rep), hbar, rep=rep, margin=margin)
    return InvariantRecord(traj, res.values, "swanson", {"sigma": sig, "pinney_residual": float(np.abs(sig.residual).max())})


def swanson_time_dependent_dyson(m, alpha_R, alpha_R_dot, M, M_dot, Omega, rep, hbar=None, margin: int | None = None):
    """Check the Gaussian Dyson map of the Swanson model with time-dependent mass.

    ``eta = exp(-alpha_R M x^2 / hbar)`` maps ``H_S`` (with
    ``Im alpha = (1/4) d/dt log(alpha_R M)``) to
    ``h = p^2/(2M) + (2 M alpha_R^2 + M Omega^2/2) x^2 - Im(alpha) {x, p}``.
    All arguments are values at a single instant; ``m`` is the reference
    mass of ``M = m sigma^(-2s-r)`` and only enters through ``M``.

    ``eta^{-1}`` is unbounded, so the Dyson equation is tested in the
    multiplied-out form ``eta H + i hbar eta' - h eta = 0``, with ``eta``
    evaluated through the spectral decomposition of the truncated ``x``.

    Returns ``(eta, h, residual)`` with the relative interior norm of that
    residual. The Gaussian couples each level to distant ones, so the
    default interior is the lower half of the truncated space.
    """
    hb = resolve_hbar(hbar)
    margin = rep.cutoff // 2 if margin is None else margin
    x, p = rep.ops["x"], rep.ops["p"]
    c = alpha_R * M / hb
    c_dot = (alpha_R_dot * M + alpha_R * M_dot) / hb
    alpha_I = 0.25 * c_dot / c
    alpha = alpha_R + 1j * alpha_I
    xx = x @ x
    H = p @ p / (2 * M) + 0.5 * M * Omega**2 * xx + 1j * alpha * anticommutator(x, p)
    w, V = np.linalg.eigh(x)
    eta = (V * np.exp(-c * w**2)) @ dagger(V)
    eta_dot = -c_dot * xx @ eta
    h = p @ p / (2 * M) + (2 * M * alpha_R**2 + 0.5 * M * Omega**2) * xx - alpha_I * anticommutator(x, p)
    R = eta @ H + 1j * hb * eta_dot - h @ eta
    return eta, h, rep.interior_norm(R, margin) / max(rep.interior_norm(h @ eta, margin), 1.0)


# ---------------------------------------------------------------------------
# infinite series of Dyson maps


@dataclass
class DysonSeries:
    """Maps ``A^k eta`` generated from two seeds, with per-level verdicts.

    ``maps[k]`` and ``hamiltonians[k]`` are keyed by the power ``k`` of
    ``A``; in the two-index notation ``eta^(n) = A^n eta`` has ``k = n`` and
    ``eta~^(n) = A^n eta~`` has ``k = n + 1``.
    """

    A: TimeSeries
    maps: dict
    hamiltonians: dict
    verdicts: list
    symmetry_residual: np.ndarray
    truncated: bool = False

    @staticmethod
    def power(kind: str, n: int) -> int:
        if kind not in ("eta", "eta_tilde"):
            raise ValidationError(f"unknown map kind {kind!r}")
        return n if kind == "eta" else n + 1

    @staticmethod
    def label(k: int) -> list:
        """Both names of the map ``A^k eta``."""
        return [("eta", k), ("eta_tilde", k - 1)]

    @staticmethod
    def combine(first: tuple, second: tuple) -> tuple:
        """Powers generated from a pair: ``Y X^{-1} Y`` and ``X Y^{-1} X``."""
        p, q = DysonSeries.power(*first), DysonSeries.power(*second)
        return 2 * q - p, 2 * p - q

    def accepted(self) -> list:
        return sorted(v["k"] for v in self.verdicts if v["gate_passed"])

    def to_log(self) -> list:
        return [{key: v[key] for key in ("n", "k", "gate_passed", "hermiticity_defect", "tdde_residual")} for v in self.verdicts]


def _power_and_derivative(A, Ad, k):
    n = A.shape[0]
    if k == 0:
        return np.eye(n, dtype=complex), np.zeros((n, n), complex)
    if k < 0:
        Binv = np.linalg.inv(A)
        A, Ad, k = Binv, -Binv @ Ad @ Binv, -k
    pows = [np.eye(n, dtype=complex)]
    for _ in range(k):
        pows.append(pows[-1] @ A)
    d = sum(pows[j] @ Ad @ pows[k - 1 - j] for j in range(k))
    return pows[k], d


def polar_adjusted_seed(eta: TimeSeries, eta_tilde: TimeSeries, eta_dot, eta_tilde_dot):
    """Replace ``eta~`` by ``S^{1/2} eta`` with ``S = A^dagger A``.

    The new map differs from ``eta~`` by a time-dependent unitary, so it
    still solves the Dyson equation with a Hermitian Hamiltonian, and the
    new ``A = S^{1/2}`` is Hermitian. Returns ``(eta~', eta~'_dot)``.
    """
    out, outd = [], []
    for e, et, ed, etd in zip(eta.values, eta_tilde.values, eta_dot, eta_tilde_dot):
        einv = np.linalg.inv(e)
        A = et @ einv
        Ad = etd @ einv - A @ ed @ einv
        S = dagger(A) @ A
        Sd = dagger(Ad) @ A + dagger(A) @ Ad
        w, V = np.linalg.eigh(0.5 * (S + dagger(S)))
        R = (V * np.sqrt(w)) @ dagger(V)
        Rd = sla.solve_sylvester(R, R, Sd)
        out.append(R @ e)
        outd.append(Rd @ e + R @ ed)
    return TimeSeries(eta.times, np.array(out)), np.array(outd)


def dyson_series_iterate(
    eta: TimeSeries,
    eta_tilde: TimeSeries,
    H_fn,
    depth: int = 3,
    eta_dot=None,
    eta_tilde_dot=None,
    I_H: TimeSeries | None = None,
    gate_tol: float = 1e-8,
    hbar: float | None = None,
    rep=None,
    margin: int = 2,
) -> DysonSeries:
    """Generate Dyson maps ``A^k eta`` from two seed maps.

    The invariant attached to ``eta`` is ``I_h = eta I_H eta^{-1}``; by
    default ``I_H = rho^{-1} rho~``, for which ``I_h = A^dagger A``. A map
    ``A^k eta`` is accepted iff ``A^k I_h A^{-k}`` is Hermitian to
    ``gate_tol`` (relative). Powers are explored outwards from the seeds
    (``k = 0, 1``) up to ``n = +-depth``; the first rejection in each
    direction truncates that side of the series.

    Each accepted level records ``h_k = eta_k H eta_k^{-1} + i hbar
    eta_k' eta_k^{-1}`` and its anti-Hermitian part as ``tdde_residual``.
    With a truncated Fock ``rep`` both defects are measured on its interior.
    """
    hb = resolve_hbar(hbar)
    if rep is None:
        defect_of = hermitian_defect
        size_of = norm2
    else:
        defect_of = lambda M: hermitian_defect(rep.restrict(M, margin))
        size_of = lambda M: rep.interior_norm(M, margin)
    t = eta.times
    E, Et = eta.values, eta_tilde.values
    Ed = fd_derivative(E, t) if eta_dot is None else np.asarray(eta_dot)
    Etd = fd_derivative(Et, t) if eta_tilde_dot is None else np.asarray(eta_tilde_dot)
    A = np.empty_like(E, dtype=complex)
    Ad = np.empty_like(A)
    Ih = np.empty_like(A)
    sym = np.empty(len(t))
    for k in range(len(t)):
        einv = np.linalg.inv(E[k])
        A[k] = Et[k] @ einv
        Ad[k] = Etd[k] @ einv - A[k] @ Ed[k] @ einv
        S = dagger(A[k]) @ A[k]
        Ih[k] = S if I_H is None else E[k] @ I_H.values[k] @ einv
        sym[k] = norm2(Ih[k] @ S - S @ Ih[k]) / max(norm2(S), 1.0)

    maps, hams, verdicts = {}, {}, []

    def level(kp):
        defect, tdde = 0.0, 0.0
        mk = np.empty_like(E)
        hk = np.empty_like(E)
        for j in range(len(t)):
            P, Pd = _power_and_derivative(A[j], Ad[j], kp)
            Pinv = np.linalg.inv(P)
            I_k = P @ Ih[j] @ Pinv
            defect = max(defect, defect_of(I_k) / max(size_of(I_k), 1.0))
            mk[j] = P @ E[j]
            md = Pd @ E[j] + P @ Ed[j]
            inv = np.linalg.inv(mk[j])
            hk[j] = mk[j] @ np.asarray(H_fn(t[j])) @ inv + 1j * hb * md @ inv
            tdde = max(tdde, defect_of(hk[j]))
        ok = defect <= gate_tol
        verdicts.append({"n": kp, "k": kp, "names": DysonSeries.label(kp), "gate_passed": bool(ok),
                         "hermiticity_defect": float(defect), "tdde_residual": float(tdde)})
        if ok:
            maps[kp] = TimeSeries(t, mk)
            hams[kp] = TimeSeries(t, hk)
        return ok

    truncated = False
    for direction, start in ((1, 0), (-1, -1)):
        kp = start
        while abs(kp) <= depth + 1:
            if not level(kp):
                truncated = True
                break
            kp += direction
    verdicts.sort(key=lambda v: v["k"])
    return DysonSeries(TimeSeries(t, A), maps, hams, verdicts, sym, truncated)


# ---------------------------------------------------------------------------
# seed maps of the time-dependent K-oscillator


def hk_seed_maps(k: float, x0: float, lam_fn, t_grid, K, reading: str = "scalar", rep=None):
    """Two seed Dyson maps ``exp(theta K4) exp(-i phi K1)`` and ``exp(theta K4) exp(i phi K2)``.

    ``theta = arcsinh(k sqrt(1 + x^2))`` and ``phi = arctan(x)``.

    reading="scalar"
        ``x`` is a function of time. The Dyson equation for
        ``a (K1+K2) + i lam K3`` then holds iff
        ``x' = -(lam / k) sqrt(1 + k^2 (1 + x^2))``, which is integrated from
        ``x(t0) = x0``; derivatives of the maps are analytic.
    reading="operator"
        ``x`` is the position operator of the first mode (``rep`` required);
        functions act through its spectral decomposition and products with
        ``K_i`` are symmetrized. The maps are then time independent.

    Returns ``(eta, eta_tilde, eta_dot, eta_tilde_dot, meta)``.
    """
    t = np.asarray(t_grid, dtype=float)
    K1, K2, K3, K4 = K
    if reading == "scalar":
        sol = solve_ivp(lambda s, y: [-(lam_fn(s) / k) * np.sqrt(1 + k**2 * (1 + y[0] ** 2))],
                        (t[0], t[-1]), [x0], t_eval=t, rtol=1e-12, atol=1e-12, method="DOP853")
        x = sol.y[0]
        E, Et, Ed, Etd = [], [], [], []
        for j, s in enumerate(t):
            th = np.arcsinh(k * np.sqrt(1 + x[j] ** 2))
            ph = np.arctan(x[j])
            xd = -(lam_fn(s) / k) * np.sqrt(1 + k**2 * (1 + x[j] ** 2))
            thd = -lam_fn(s) * x[j] / np.sqrt(1 + x[j] ** 2)
            phd = xd / (1 + x[j] ** 2)
            T = expm(th * K4)
            P1, P2 = expm(-1j * ph * K1), expm(1j * ph * K2)
            E.append(T @ P1)
            Et.append(T @ P2)
            Ed.append(thd * K4 @ T @ P1 + T @ (-1j * phd * K1) @ P1)
            Etd.append(thd * K4 @ T @ P2 + T @ (1j * phd * K2) @ P2)
        meta = {"x": x, "reading": reading}
        return TimeSeries(t, np.array(E)), TimeSeries(t, np.array(Et)), np.array(Ed), np.array(Etd), meta
    if reading == "operator":
        if rep is None:
            raise ValidationError("operator reading needs the Fock representation")
        w, V = np.linalg.eigh(rep.ops["x"])
        f = lambda vals: (V * vals) @ dagger(V)
        Th = f(np.arcsinh(k * np.sqrt(1 + w**2)))
        Ph = f(np.arctan(w))
        sym = lambda X, Y: 0.5 * (X @ Y + Y @ X)
        T = expm(sym(Th, K4))
        e = T @ expm(-1j * sym(Ph, K1))
        et = T @ expm(1j * sym(Ph, K2))
        n = len(t)
        zero = np.zeros((n,) + e.shape, complex)
        return (TimeSeries(t, np.broadcast_to(e, (n,) + e.shape).copy()), TimeSeries(t, np.broadcast_to(et, (n,) + e.shape).copy()),
                zero, zero.copy(), {"reading": reading})
    raise ValidationError(f"unknown reading {reading!r}")
