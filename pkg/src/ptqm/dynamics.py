"""Time-dependent metrics, Dyson maps, energy operators and propagators.

Conventions: the metric obeys ``i hbar d(rho)/dt = H^dagger rho - rho H``,
the Dyson map ``h = eta H eta^{-1} + i hbar (d eta/dt) eta^{-1}`` and the
observable energy operator is ``H~ = H + i hbar eta^{-1} d(eta)/dt``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, NotPositiveDefiniteError, SingularTransformationError, ValidationError
from .numcore import (
    PAULI_I,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    TimeSeries,
    as_matrix,
    dagger,
    eig_general,
    expm,
    fd_derivative,
    hermitian_defect,
    norm2,
    ode_integrate,
    resolve_hbar,
    sqrtm_psd,
)


class BranchSwitchWarning(UserWarning):
    """Eigenvalue tracking is ambiguous (near-degenerate overlaps)."""


# ---------------------------------------------------------------------------
# metric trajectories


@dataclass
class MetricTrajectory:
    """Sampled metric ``rho(t)`` with Dyson maps where ``rho`` is positive.

    ``eta`` holds ``NaN`` matrices at samples whose ``positive`` flag is
    false.
    """

    rho: TimeSeries
    eta: TimeSeries
    positive: np.ndarray
    det: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.rho.times


def tdqhe_rhs(H_fn: Callable[[float], np.ndarray], hbar: float | None = None):
    """Right-hand side ``d(rho)/dt = -(i/hbar)(H^dagger rho - rho H)``."""
    hb = resolve_hbar(hbar)

    def rhs(t, rho):
        H = H_fn(t)
        return (-1j / hb) * (dagger(H) @ rho - rho @ H)

    return rhs


def _trajectory_from_rho(times, rhos, floor=1e-12, diagnostics=None) -> MetricTrajectory:
    n = rhos.shape[1]
    etas = np.full_like(rhos, np.nan)
    pos = np.zeros(len(times), bool)
    for k, r in enumerate(rhos):
        try:
            etas[k] = sqrtm_psd(r, floor)
            pos[k] = True
        except NotPositiveDefiniteError:
            pass
    det = np.array([np.linalg.det(r).real for r in rhos])
    return MetricTrajectory(TimeSeries(times, rhos), TimeSeries(times, etas), pos, det, diagnostics or {"dim": n})


def tdqhe_integrate(
    H_fn: Callable[[float], np.ndarray],
    rho0,
    t_grid,
    tol: float = 1e-11,
    hbar: float | None = None,
) -> MetricTrajectory:
    """Integrate the time-dependent quasi-Hermiticity equation with RK45.

    ``rho`` is re-symmetrized after every grid interval; the largest relative
    Hermiticity drift removed this way is reported in
    ``diagnostics["max_symmetrization_drift"]``. Samples where ``rho`` loses
    positivity keep integrating but have their ``positive`` flag cleared.

    Raises
    ------
    HermiticityError
        If ``rho0`` is not Hermitian.
    """
    rho0 = as_matrix(rho0, "rho0")
    if hermitian_defect(rho0) > 1e-12 * max(norm2(rho0), 1.0):
        from .errors import HermiticityError

        raise HermiticityError("initial metric must be Hermitian", hermitian_defect(rho0))
    drift = []

    def resym(t, r):
        d = norm2(r - dagger(r)) / max(norm2(r), 1e-300)
        drift.append(d)
        return 0.5 * (r + dagger(r))

    ts = ode_integrate(tdqhe_rhs(H_fn, hbar), rho0, t_grid, method="RK45", tol=tol, post_step=resym)
    diag = {"max_symmetrization_drift": max(drift, default=0.0), "nfev": ts.meta["nfev"]}
    return _trajectory_from_rho(ts.times, ts.values, diagnostics=diag)


# ---------------------------------------------------------------------------
# closed-form two-level metric


def pt_regime_constants(lam: float, kappa: float):
    """``(c1, c2, c3, c4) = (1/2, 1/2, sqrt(2) lam / zeta, 0)``, ``zeta = sqrt(lam^2 - kappa^2)``."""
    if abs(lam) <= abs(kappa):
        raise DomainError("PT-regime constants need |lam| > |kappa|")
    zeta = np.sqrt(lam**2 - kappa**2)
    return 0.5, 0.5, np.sqrt(2) * lam / zeta, 0.0


def broken_regime_constants(lam: float, kappa: float):
    """``(c1, c2, c3, c4) = (1/sqrt2, -1/sqrt2, -lam / xi, 0)``, ``xi = sqrt(kappa^2 - lam^2)``."""
    if abs(lam) >= abs(kappa):
        raise DomainError("broken-regime constants need |lam| < |kappa|")
    xi = np.sqrt(kappa**2 - lam**2)
    return 1 / np.sqrt(2), -1 / np.sqrt(2), -lam / xi, 0.0


def regime_constants(lam: float, kappa: float):
    return pt_regime_constants(lam, kappa) if abs(lam) > abs(kappa) else broken_regime_constants(lam, kappa)


def two_level_alphas(omega, lam, kappa, c, t):
    """Closed-form coefficients ``(alpha0..alpha3)`` of ``rho(t)`` on ``(I, sx, sy, sz)``.

    Uses ``s = sqrt(kappa^2 - lam^2)`` in complex arithmetic so that both
    regimes share one expression. ``t`` may be an array.
    """
    c1, c2, c3, c4 = c
    if abs(lam) == abs(kappa):
        raise DomainError("exceptional point lam = +-kappa: use two_level_alphas_ep for the limiting polynomial solution")
    if lam == 0:
        raise DomainError("closed form divides by lam")
    s = np.sqrt(complex(kappa**2 - lam**2))
    t = np.asarray(t, dtype=float)
    ep, em = np.exp(s * t), np.exp(-s * t)
    a0 = kappa * (c1 * ep - c2 * em) / s + c3
    a1 = c1 * ep + c2 * em
    a2 = lam * (c2 * em - c1 * ep) / s - c3 * kappa / lam
    a3 = np.full_like(a0, c4)
    return np.real_if_close(np.array([a0, a1, a2, a3]), tol=1e6).real


def two_level_alphas_ep(kappa, V, d, e, t):
    """Polynomial metric coefficients at the exceptional point ``lam = kappa``.

    With ``alpha0 + alpha2 = V`` constant, ``alpha1 = kappa V t + d`` and
    ``alpha0 = kappa^2 V t^2 / 2 + kappa d t + e``.
    """
    t = np.asarray(t, dtype=float)
    a1 = kappa * V * t + d
    a0 = 0.5 * kappa**2 * V * t**2 + kappa * d * t + e
    return np.array([a0, a1, V - a0, np.zeros_like(a0)])


def alphas_to_matrix(al) -> np.ndarray:
    """``alpha0 I + alpha1 sx + alpha2 sy + alpha3 sz`` (vectorized over samples)."""
    al = np.asarray(al)
    basis = np.array([PAULI_I, PAULI_X, PAULI_Y, PAULI_Z])
    return np.tensordot(np.moveaxis(al, 0, -1), basis, axes=1)


def two_level_alpha(omega, lam, kappa, c1, c2, c3, c4, t) -> np.ndarray:
    """Closed-form two-level metric ``rho(t)``; vectorized over ``t``."""
    return alphas_to_matrix(two_level_alphas(omega, lam, kappa, (c1, c2, c3, c4), t))


def two_level_alpha_dot(omega, lam, kappa, c, t) -> np.ndarray:
    """Time derivative of the closed-form coefficients."""
    a0, a1, a2, _ = two_level_alphas(omega, lam, kappa, c, t)
    return np.array([kappa * a1, kappa * a0 + lam * a2, -lam * a1, np.zeros_like(a0)])


def two_level_det_formula(lam, kappa, c1, c2, c3, c4) -> float:
    """``det rho`` from the integration constants.

    The constant value of ``alpha0^2 - alpha1^2 - alpha2^2 - alpha3^2`` is
    ``c3^2 (1 - kappa^2/lam^2) - 4 c1 c2 - c4^2``.
    """
    return c3**2 * (1 - kappa**2 / lam**2) - 4 * c1 * c2 - c4**2


def two_level_closed_form(omega, lam, kappa, t_grid, c=None) -> MetricTrajectory:
    """Metric trajectory from the closed form, with analytic ``d(eta)/dt``.

    ``eta`` is the positive square root of ``rho``; its derivative solves the
    Sylvester equation ``eta X + X eta = d(rho)/dt`` and is stored in
    ``diagnostics["eta_dot"]``.
    """
    c = regime_constants(lam, kappa) if c is None else tuple(c)
    t = np.asarray(t_grid, dtype=float)
    al = two_level_alphas(omega, lam, kappa, c, t)
    rho = alphas_to_matrix(al)
    rho_dot = alphas_to_matrix(two_level_alpha_dot(omega, lam, kappa, c, t))
    # det rho is conserved; the constant avoids cancellation in alpha0^2 - |alpha|^2
    D = np.full(len(t), two_level_det_formula(lam, kappa, *c))
    pos = (D > 0) & (al[0] > 0)
    # sqrt of a positive 2x2 matrix: (rho + sqrt(det) I) / sqrt(tr rho + 2 sqrt(det))
    etas = np.full_like(rho, np.nan)
    eta_dot = np.full_like(rho, np.nan)
    for k in np.flatnonzero(pos):
        sd = np.sqrt(D[k])
        etas[k] = (rho[k] + sd * np.eye(2)) / np.sqrt(2 * al[0][k] + 2 * sd)
        eta_dot[k] = sla.solve_sylvester(etas[k], etas[k], rho_dot[k])
    diag = {"constants": c, "eta_dot": eta_dot, "det_sampled": al[0] ** 2 - al[1] ** 2 - al[2] ** 2 - al[3] ** 2}
    return MetricTrajectory(TimeSeries(t, rho), TimeSeries(t, etas), pos, D, diag)


def two_level_instantaneous_closed_form(omega, lam, kappa, t, c=None) -> np.ndarray:
    """Eigenvalues of ``H~(t)`` for the square-root Dyson map, in closed form.

    With ``eta = sqrt(rho)`` the Hermitian Hamiltonian is
    ``h = -omega/2 + h_z sigma_z``, which gives
    ``E_{1,2} = -omega/2 -+ N / (2 (1 + alpha0))`` with the constant
    ``N = lam + c3 (lam^2 - kappa^2) / lam`` (requires ``c4 = 0``). Unlike a
    numerical diagonalization this stays accurate when ``rho`` is badly
    conditioned. Returns an array of shape ``(len(t), 2)``, ascending.
    """
    c = regime_constants(lam, kappa) if c is None else tuple(c)
    if c[3] != 0:
        raise ValidationError("closed-form instantaneous spectrum requires c4 = 0")
    a0 = two_level_alphas(omega, lam, kappa, c, t)[0]
    N = lam + c[2] * (lam**2 - kappa**2) / lam
    half = np.abs(N / (2 * (1 + a0)))
    return np.stack([-0.5 * omega - half, -0.5 * omega + half], axis=-1)


def two_level_energy_expectations(omega, lam, kappa, t_grid, c=None, hbar: float | None = None) -> np.ndarray:
    """``E_+-(t) = <Psi_+-| rho(t) H~(t) Psi_+-> `` for the static two-level ``H``.

    ``Psi_+-`` are the eigenvectors of ``H`` (columns ordered as
    :func:`models.two_level_eigenvalues`), each scaled to unit
    ``rho(0)``-norm. For real eigenvalues that norm is conserved, so the
    values are the energies in the time-dependent metric. Returns an array
    of shape ``(len(t), 2)``.
    """
    from .models import build_two_level

    H = build_two_level(omega, lam, kappa)
    traj = two_level_closed_form(omega, lam, kappa, t_grid, c)
    if not np.all(traj.positive):
        raise NotPositiveDefiniteError("metric is not positive on the whole grid", traj.det)
    trace = energy_operator(lambda s: H, traj.eta, traj.diagnostics["eta_dot"], hbar=hbar)
    w, V = np.linalg.eig(H)
    V = V[:, np.argsort(w.real)]
    rho0 = traj.rho.values[0]
    out = []
    for k in range(2):
        v = V[:, k] / np.sqrt(np.vdot(V[:, k], rho0 @ V[:, k]).real)
        out.append(trace.expectation(v))
    return np.stack(out, axis=-1)


# ---------------------------------------------------------------------------
# energy operator


@dataclass
class EnergyTrace:
    """Energy operator samples with the maps that produced them."""

    Htilde: TimeSeries
    h: TimeSeries
    eta: TimeSeries
    rho: TimeSeries
    qh_residual: np.ndarray
    cond: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.Htilde.times

    def expectation(self, psi0, H=None, hbar: float | None = None) -> np.ndarray:
        """``<Psi(t)| rho(t) H~(t) Psi(t)>`` for a state evolved by static ``H``.

        If ``H`` is omitted the state is kept fixed, which is exact for
        eigenstates of a time-independent ``H`` (the phase cancels).
        """
        hb = resolve_hbar(hbar)
        out = np.empty(len(self.times), complex)
        for k, (t, Ht) in enumerate(self.Htilde):
            psi = psi0 if H is None else expm(-1j * (t - self.times[0]) / hb * H) @ psi0
            out[k] = np.vdot(psi, self.rho.values[k] @ Ht @ psi)
        return out

    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Instantaneous eigenvalues of ``H~`` computed from the similar ``h``.

        ``h = eta H~ eta^{-1}`` is Hermitian in exact arithmetic, so its
        eigenvalues are well conditioned even when ``H~`` is far from normal.
        Returns ``(values, imag_bound)``: ascending eigenvalues of the
        Hermitian part of ``h`` and, per sample, the largest imaginary part
        of ``eig(h)``.
        """
        vals = np.empty((len(self.times), self.h.values.shape[1]))
        imag = np.empty(len(self.times))
        for k, hk in enumerate(self.h.values):
            vals[k] = np.linalg.eigvalsh(0.5 * (hk + dagger(hk)))
            imag[k] = np.abs(np.linalg.eigvals(hk).imag).max()
        return vals, imag


def energy_operator(
    H_fn: Callable[[float], np.ndarray],
    eta_traj: TimeSeries,
    eta_dot: np.ndarray | None = None,
    method: str = "auto",
    hbar: float | None = None,
) -> EnergyTrace:
    """Energy operator ``H~ = H + i hbar eta^{-1} d(eta)/dt`` on a sampled map.

    Parameters
    ----------
    H_fn : callable
        ``t -> H(t)``.
    eta_traj : TimeSeries
        Dyson map samples.
    eta_dot : array, optional
        Analytic derivative samples; used directly when given.
    method : {"auto", "sylvester", "fd"}
        Derivative strategy when ``eta_dot`` is absent. ``"sylvester"``
        assumes ``eta`` is the positive root of a metric solving the
        quasi-Hermiticity equation, so ``d(rho)/dt`` follows from ``H`` and
        ``eta X + X eta = d(rho)/dt`` is solved exactly per sample. ``"fd"``
        uses fourth-order finite differences. ``"auto"`` picks ``"sylvester"``
        when every ``eta`` sample is Hermitian, else ``"fd"``.

    Raises
    ------
    SingularTransformationError
        If some ``eta`` sample is singular; ``location`` holds the time.
    """
    hb = resolve_hbar(hbar)
    t, etas = eta_traj.times, eta_traj.values
    if eta_dot is None:
        if method == "auto":
            method = "sylvester" if all(hermitian_defect(e) <= 1e-10 * norm2(e) for e in etas) else "fd"
        if method == "sylvester":
            eta_dot = np.empty_like(etas)
            for k, e in enumerate(etas):
                H = H_fn(t[k])
                rho = dagger(e) @ e
                rho_dot = (-1j / hb) * (dagger(H) @ rho - rho @ H)
                eta_dot[k] = sla.solve_sylvester(e, e, rho_dot)
        elif method == "fd":
            eta_dot = fd_derivative(etas, t)
        else:
            raise ValidationError(f"unknown derivative method {method!r}")
    Ht = np.empty_like(etas, dtype=complex)
    hs = np.empty_like(Ht)
    rhos = np.empty_like(Ht)
    res = np.empty(len(t))
    cond = np.empty(len(t))
    for k, e in enumerate(etas):
        if not np.all(np.isfinite(e)) or abs(np.linalg.det(e)) < 1e-300:
            raise SingularTransformationError(f"Dyson map is singular at t={t[k]:.6g}", t[k])
        H = H_fn(t[k])
        einv = np.linalg.inv(e)
        Ht[k] = H + 1j * hb * einv @ eta_dot[k]
        hs[k] = e @ H @ einv + 1j * hb * eta_dot[k] @ einv
        rhos[k] = dagger(e) @ e
        cond[k] = np.linalg.cond(rhos[k])
        res[k] = norm2(rhos[k] @ Ht[k] - dagger(Ht[k]) @ rhos[k]) / max(norm2(rhos[k]), 1.0)
    return EnergyTrace(TimeSeries(t, Ht), TimeSeries(t, hs), eta_traj, TimeSeries(t, rhos), res, cond)


def instantaneous_spectrum(Ht_traj: TimeSeries, H_ref=None, overlap_gap: float = 0.2) -> TimeSeries:
    """Track eigenvalues of ``H~(t)`` by eigenvector overlap continuity.

    Branches are linked between successive samples by maximizing the total
    overlap ``|<v_i(t_k)|v_j(t_{k+1})>|`` (assignment problem), so crossing
    curves are followed rather than re-sorted. A
    :class:`BranchSwitchWarning` is emitted if the best and second-best
    assignment for some branch differ by less than ``overlap_gap``.

    If ``H_ref`` is given, ``meta["distance_to_re_eig_H"]`` records, per
    sample, the largest distance between the tracked eigenvalues and the real
    parts of the eigenvalues of ``H_ref`` (both sorted).
    """
    t = Ht_traj.times
    n = Ht_traj.values.shape[1]
    vals = np.empty((len(t), n), complex)
    w, V = eig_general(Ht_traj.values[0])
    vals[0] = w
    ambiguous = []
    for k in range(1, len(t)):
        w_new, V_new = eig_general(Ht_traj.values[k])
        O = np.abs(dagger(V) @ V_new)
        rows, cols = linear_sum_assignment(-O)
        for r in range(n):
            srt = np.sort(O[r])[::-1]
            if n > 1 and srt[0] - srt[1] < overlap_gap:
                ambiguous.append(float(t[k]))
                break
        perm = cols[np.argsort(rows)]
        vals[k] = w_new[perm]
        V = V_new[:, perm]
    meta = {"ambiguous_times": ambiguous}
    if ambiguous:
        warnings.warn(f"eigenvalue tracking ambiguous at {len(ambiguous)} samples", BranchSwitchWarning, stacklevel=2)
    if H_ref is not None:
        ref = np.sort(np.linalg.eigvals(H_ref).real)
        meta["distance_to_re_eig_H"] = np.abs(np.sort(vals.real, axis=1) - ref).max(axis=1)
    return TimeSeries(t, vals, meta)


# ---------------------------------------------------------------------------
# propagators, Du Hamel identity, Green's function


def propagator(H_fn, t0: float, t1: float, n_steps: int = 200, hbar: float | None = None) -> np.ndarray:
    """Time-ordered exponential ``U(t1, t0)`` by the exponential midpoint rule.

    ``U = prod_k exp(-(i/hbar) H(s_k) ds)`` with later times to the left.
    ``U(t, t) = I`` exactly; the rule is second order in ``ds``.
    """
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    hb = resolve_hbar(hbar)
    n = np.asarray(H_fn(t0)).shape[0]
    U = np.eye(n, dtype=complex)
    if t1 == t0:
        return U
    ds = (t1 - t0) / n_steps
    for k in range(n_steps):
        s = t0 + (k + 0.5) * ds
        U = expm(-1j * ds / hb * np.asarray(H_fn(s))) @ U
    return U


def propagator_adaptive(H_fn, t0, t1, tol: float = 1e-8, n_start: int = 16, n_max: int = 2**16, hbar=None):
    """Halve the step until successive midpoint propagators agree to ``tol``.

    Returns ``(U, n_steps)``; the last estimate is Richardson-improved.
    """
    n = n_start
    U = propagator(H_fn, t0, t1, n, hbar)
    while n < n_max:
        U2 = propagator(H_fn, t0, t1, 2 * n, hbar)
        if norm2(U2 - U) <= tol:
            return (4 * U2 - U) / 3, 2 * n
        U, n = U2, 2 * n
    return U, n


def duhamel_first_order(H_fn, h_fn, t0: float, t1: float, n_quad: int = 201, n_steps: int = 400, hbar=None):
    """Du Hamel identity ``U = u - (i/hbar) int U(t1,s) [H(s) - h(s)] u(s,t0) ds``.

    The integrand uses the exact propagators (non-iterated identity) and the
    integral is evaluated with Simpson's rule on ``n_quad`` points.

    Returns
    -------
    U_approx : numpy.ndarray
        Right-hand side of the identity.
    residual : float
        ``|U_approx - U_direct|`` against the direct propagator of ``H``.
    """
    hb = resolve_hbar(hbar)
    s = np.linspace(t0, t1, n_quad)
    per = max(1, n_steps // (n_quad - 1))
    # propagators from t0 to each node, then U(t1, s) = U(t1, t0) U(s, t0)^{-1}
    U_nodes = [np.eye(np.asarray(H_fn(t0)).shape[0], dtype=complex)]
    u_nodes = [U_nodes[0]]
    for k in range(1, n_quad):
        U_nodes.append(propagator(H_fn, s[k - 1], s[k], per, hb) @ U_nodes[-1])
        u_nodes.append(propagator(h_fn, s[k - 1], s[k], per, hb) @ u_nodes[-1])
    U_end = U_nodes[-1]
    integrand = np.array(
        [U_end @ np.linalg.inv(U_nodes[k]) @ (np.asarray(H_fn(s[k])) - np.asarray(h_fn(s[k]))) @ u_nodes[k] for k in range(n_quad)]
    )
    integral = simpson(integrand, x=s, axis=0)
    U_approx = u_nodes[-1] - 1j / hb * integral
    return U_approx, norm2(U_approx - U_end)


def duhamel_series(H_fn, h_fn, t0, t1, n_quad: int = 201, n_steps: int = 400, hbar=None) -> np.ndarray:
    """First iterate of the Du Hamel series: ``u - (i/hbar) int u(t1,s)[H-h]u(s,t0) ds``.

    The truncation error is second order in ``H - h``.
    """
    hb = resolve_hbar(hbar)
    s = np.linspace(t0, t1, n_quad)
    per = max(1, n_steps // (n_quad - 1))
    u_nodes = [np.eye(np.asarray(h_fn(t0)).shape[0], dtype=complex)]
    for k in range(1, n_quad):
        u_nodes.append(propagator(h_fn, s[k - 1], s[k], per, hb) @ u_nodes[-1])
    u_end = u_nodes[-1]
    integrand = np.array(
        [u_end @ np.linalg.inv(u_nodes[k]) @ (np.asarray(H_fn(s[k])) - np.asarray(h_fn(s[k]))) @ u_nodes[k] for k in range(n_quad)]
    )
    return u_end - 1j / hb * simpson(integrand, x=s, axis=0)


def greens_function(prop: Callable[[float, float], np.ndarray], t: float, t_prime: float, hbar=None) -> np.ndarray:
    """Retarded Green's function ``G = -(i/hbar) U(t, t') theta(t - t')`` with ``theta(0) = 1``."""
    hb = resolve_hbar(hbar)
    U = np.asarray(prop(t, t_prime))
    if t < t_prime:
        return np.zeros_like(U, dtype=complex)
    return -1j / hb * U
