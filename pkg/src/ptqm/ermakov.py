"""Ermakov-Pinney equations and the coefficient chain of the time-dependent K-oscillator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import DomainError, TruncationError, ValidationError
from .numcore import TimeSeries, central_derivative, expm, fd_derivative, hermitian_defect, resolve_hbar


@dataclass
class EPSolution:
    """Positive solution of an Ermakov-Pinney type equation on a grid.

    ``residual`` holds the pointwise residual of the governing equation and
    ``meta`` whatever auxiliary data the solver produced (integrals of the
    source, first derivatives, ...).
    """

    values: TimeSeries
    params: dict
    residual: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.values.times


# ---------------------------------------------------------------------------
# standard Ermakov-Pinney equation


def linear_pair(kappa_fn: Callable[[float], float], t_grid, v_scale: float = 1.0, tol: float = 1e-12):
    """Two solutions of ``x'' = kappa(t) x`` with ``u(0)=1, u'(0)=0`` and ``v(0)=0, v'(0)=v_scale``.

    Returns ``(u, u_dot, v, v_dot)`` sampled on ``t_grid``; the Wronskian
    ``u v' - v u'`` equals ``v_scale``.
    """
    t = np.asarray(t_grid, dtype=float)

    def rhs(s, y):
        k = kappa_fn(s)
        return [y[1], k * y[0], y[3], k * y[2]]

    sol = solve_ivp(rhs, (t[0], t[-1]), [1.0, 0.0, 0.0, v_scale], t_eval=t, rtol=tol, atol=tol, method="DOP853")
    if not sol.success:
        raise DomainError(f"linear pair integration failed: {sol.message}")
    return tuple(sol.y)


def pinney_constraint(A: float, B: float, omega: float, wronskian: float, form: str = "squared") -> float:
    """``C`` from ``C^2 = A B - omega^2 / W^k`` (``k = 2`` for ``"squared"``, ``1`` for ``"printed"``)."""
    k = {"squared": 2, "printed": 1}.get(form)
    if k is None:
        raise ValidationError(f"unknown constraint form {form!r}")
    c2 = A * B - omega**2 / wronskian**k
    if c2 < 0:
        raise DomainError(f"constraint gives C^2 = {c2:.3g} < 0")
    return float(np.sqrt(c2))


def pinney_sigma(kappa_fn, omega: float, A: float, B: float, C: float, u=None, v=None, t_grid=None) -> EPSolution:
    """``sigma = (A u^2 + B v^2 + 2 C u v)^{1/2}`` for ``sigma'' - kappa sigma - omega^2 / sigma^3 = 0``.

    Parameters
    ----------
    kappa_fn : callable
        ``t -> kappa(t)``; ``u`` and ``v`` must solve ``x'' = kappa x``.
    u, v : tuple of callables, optional
        ``(x, x_dot)`` pairs of callables. If omitted they are integrated
        numerically with unit Wronskian.
    t_grid : array_like

    Notes
    -----
    The residual is evaluated with exact second derivatives obtained from
    ``u'' = kappa u``, so it measures whether ``(A, B, C)`` are consistent
    with the Wronskian; ``meta["wronskian"]`` reports ``u v' - v u'``.

    Raises
    ------
    DomainError
        If ``sigma^2 <= 0`` somewhere on the grid.
    """
    t = np.asarray(t_grid, dtype=float)
    if u is None or v is None:
        uu, ud, vv, vd = linear_pair(kappa_fn, t)
    else:
        uu, ud = (np.array([f(s) for s in t], dtype=float) for f in u)
        vv, vd = (np.array([f(s) for s in t], dtype=float) for f in v)
    return _pinney_from_pair(kappa_fn, omega, A, B, C, t, uu, ud, vv, vd)


def _pinney_from_pair(kappa_fn, omega, A, B, C, t, uu, ud, vv, vd) -> EPSolution:
    k = np.array([kappa_fn(s) for s in t], dtype=float)
    S = A * uu**2 + B * vv**2 + 2 * C * uu * vv
    if np.any(S <= 0):
        i = int(np.argmax(S <= 0))
        raise DomainError(f"sigma^2 <= 0 at t={t[i]:.6g}")
    S1 = 2 * (A * uu * ud + B * vv * vd + C * (ud * vv + uu * vd))
    S2 = 2 * (A * (ud**2 + k * uu**2) + B * (vd**2 + k * vv**2) + C * (2 * k * uu * vv + 2 * ud * vd))
    sig = np.sqrt(S)
    sig_d = S1 / (2 * sig)
    sig_dd = S2 / (2 * sig) - S1**2 / (4 * sig**3)
    res = sig_dd - k * sig - omega**2 / sig**3
    W = uu * vd - vv * ud
    return EPSolution(
        TimeSeries(t, sig),
        {"A": A, "B": B, "C": C, "omega": omega},
        res,
        {"sigma_dot": sig_d, "sigma_ddot": sig_dd, "wronskian": W, "u": uu, "v": vv, "u_dot": ud, "v_dot": vd},
    )


def pinney_constraint_report(kappa_fn, omega, A, B, t_grid, v_scale: float = 2.0) -> dict:
    """Max residual of the Pinney solution for each constraint form.

    With ``v_scale != 1`` the two candidate constraints differ, so the
    residual decides which one is compatible with the equation.
    """
    t = np.asarray(t_grid, dtype=float)
    pair = linear_pair(kappa_fn, t, v_scale=v_scale)
    W = float(np.mean(pair[0] * pair[3] - pair[2] * pair[1]))
    out = {"wronskian": W}
    for form in ("squared", "printed"):
        try:
            C = pinney_constraint(A, B, omega, W, form)
            out[form] = float(np.abs(_pinney_from_pair(kappa_fn, omega, A, B, C, t, *pair).residual).max())
        except DomainError:
            out[form] = np.inf
    return out


# ---------------------------------------------------------------------------
# dissipative Ermakov-Pinney equation and the gamma chain


def integrate_source(lam_fn, t_grid, t0: float | None = None, tol: float = 1e-13) -> np.ndarray:
    """``Lambda(t) = int_{t0}^t lam(s) ds`` by adaptive quadrature, accumulated interval by interval."""
    t = np.asarray(t_grid, dtype=float)
    t0 = t[0] if t0 is None else t0
    out = np.empty(len(t))
    acc, prev = 0.0, t0
    for k, s in enumerate(t):
        acc += quad(lam_fn, prev, s, epsabs=tol, epsrel=tol, limit=200)[0]
        out[k] = acc
        prev = s
    return out


def dissipative_ep_chi(lam_fn, c3: float, c4: float, t_grid, t0: float = 0.0, h: float = 1e-4) -> EPSolution:
    """Closed-form solution of ``chi'' - (lam'/lam) chi' - lam^2 chi = c3^2 lam^2 / chi^3``.

    ``chi = sqrt((1 + c3^2) cosh^2(c4 - Lambda) - c3^2)`` with
    ``Lambda(t) = int_{t0}^t lam``; the lower limit is absorbed into ``c4``.
    Derivatives of ``chi`` are analytic, ``lam'`` is a fourth-order central
    difference with step ``h``.

    Raises
    ------
    DomainError
        If ``lam`` vanishes on the grid (the equation divides by it).
    """
    t = np.asarray(t_grid, dtype=float)
    lam = np.array([lam_fn(s) for s in t], dtype=float)
    if np.any(np.abs(lam) < 1e-14):
        i = int(np.argmax(np.abs(lam) < 1e-14))
        raise DomainError(f"lambda vanishes at t={t[i]:.6g}")
    lam_d = np.array([central_derivative(lam_fn, s, h) for s in t], dtype=float)
    Lam = integrate_source(lam_fn, t, t0)
    y = c4 - Lam
    a = 1 + c3**2
    S = a * np.cosh(y) ** 2 - c3**2
    S1 = -a * np.sinh(2 * y) * lam
    S2 = a * (2 * np.cosh(2 * y) * lam**2 - np.sinh(2 * y) * lam_d)
    chi = np.sqrt(S)
    chi_d = S1 / (2 * chi)
    chi_dd = S2 / (2 * chi) - S1**2 / (4 * chi**3)
    res = chi_dd - lam_d / lam * chi_d - lam**2 * chi - c3**2 * lam**2 / chi**3
    return EPSolution(
        TimeSeries(t, chi),
        {"c3": c3, "c4": c4},
        res,
        {"Lambda": Lam, "lam": lam, "chi_dot": chi_d, "phase": y},
    )


@dataclass
class GammaChain:
    """Coefficient functions ``gamma3(t), gamma4(t)`` of the product Dyson map."""

    gamma3: TimeSeries
    gamma4: TimeSeries
    c1: float
    c2: float
    c3: float
    lam: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.gamma3.times

    def constraint_residual(self) -> np.ndarray:
        """``sinh(gamma4) cosh(gamma3) - c3`` pointwise."""
        return np.sinh(self.gamma4.values) * np.cosh(self.gamma3.values) - self.c3

    def flow_residual(self) -> tuple[np.ndarray, np.ndarray]:
        """Finite-difference residuals of ``g3' = -lam cosh g4`` and ``g4' = lam tanh g3 sinh g4``."""
        g3, g4 = self.gamma3.values, self.gamma4.values
        d3 = fd_derivative(g3, self.times)
        d4 = fd_derivative(g4, self.times)
        return d3 + self.lam * np.cosh(g4), d4 - self.lam * np.tanh(g3) * np.sinh(g4)

    def at(self, t: float) -> tuple[float, float]:
        """Values ``(gamma3, gamma4)`` at a grid time."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise ValidationError(f"t={t} is not a grid time of the chain")
        return float(self.gamma3.values[k]), float(self.gamma4.values[k])


def gamma_chain(chi: EPSolution, c3: float | None = None, c1: float = 0.0, c2: float = 0.0) -> GammaChain:
    """``gamma3 = +-arccosh(chi)`` and ``gamma4 = arcsinh(c3 sech gamma3)``.

    The sign of ``gamma3`` follows ``c4 - Lambda(t)``, which keeps the chain
    smooth through ``chi = 1`` and solves the flow equations on both sides of
    it. ``gamma3`` is evaluated as ``arcsinh(sqrt(1 + c3^2) sinh(c4 - Lambda))``,
    which equals the signed ``arccosh(chi)`` without the loss of precision
    near ``chi = 1``.

    Raises
    ------
    DomainError
        If ``chi < 1`` somewhere (outside the arccosh domain).
    """
    c3 = chi.params["c3"] if c3 is None else c3
    vals = chi.values.values
    if np.any(vals < 1 - 1e-12):
        i = int(np.argmin(vals))
        raise DomainError(f"chi = {vals[i]:.6g} < 1 at t={chi.times[i]:.6g}")
    if "phase" in chi.meta:
        g3 = np.arcsinh(np.sqrt(1 + c3**2) * np.sinh(chi.meta["phase"]))
    else:
        g3 = np.arccosh(np.maximum(vals, 1.0))
    g4 = np.arcsinh(c3 / np.cosh(g3))
    t = chi.times
    lam = chi.meta.get("lam")
    return GammaChain(TimeSeries(t, g3), TimeSeries(t, g4), c1, c2, c3, lam)


def hk_product_eta(gammas, K) -> np.ndarray:
    """``exp(g1 K1) exp(g2 K2) exp(g3 K3) exp(g4 K4)``."""
    out = np.eye(K[0].shape[0], dtype=complex)
    for g, k in zip(gammas, K):
        out = out @ expm(g * k)
    return out


def hk_hermitian_and_energy(a_fn, lam_fn, chain: GammaChain, K, t: float, hbar: float | None = None, rep=None, margin: int = 2):
    """Hermitian Hamiltonian, energy operator and Dyson map of ``a(K1+K2) + i lam K3``.

    ``h = a (K1+K2) + (lam/2) sinh(g4)/cosh(g3) (K1-K2)`` and
    ``H~ = a (K1+K2) + (lam/4) sinh(2 g4) (K1-K2) - i lam (sinh^2 g4 K3 - sinh g4 tanh g3 K4)``.

    Returns
    -------
    h, Htilde : numpy.ndarray
    diagnostics : dict
        ``eta`` (product map), ``tdde_residual`` and ``energy_residual``
        (difference between ``H~`` and ``eta^{-1} h eta``), both restricted
        to the interior subspace when ``rep`` is given.

    Raises
    ------
    TruncationError
        If the interior residual exceeds ``1e-6``; the map has grown beyond
        what the cutoff can represent.
    """
    hb = resolve_hbar(hbar)
    a, lam = float(a_fn(t)), float(lam_fn(t))
    g3, g4 = chain.at(t)
    K1, K2, K3, K4 = K
    h = a * (K1 + K2) + 0.5 * lam * np.sinh(g4) / np.cosh(g3) * (K1 - K2)
    Ht = (
        a * (K1 + K2)
        + 0.25 * lam * np.sinh(2 * g4) * (K1 - K2)
        - 1j * lam * (np.sinh(g4) ** 2 * K3 - np.sinh(g4) * np.tanh(g3) * K4)
    )
    if lam == 0:
        return h, Ht, {"eta": np.eye(K1.shape[0]), "tdde_residual": 0.0, "energy_residual": 0.0}
    g3d = -lam * np.cosh(g4)
    g4d = lam * np.tanh(g3) * np.sinh(g4)
    E1, E2, E3, E4 = (expm(g * k) for g, k in zip((chain.c1, chain.c2, g3, g4), K))
    eta = E1 @ E2 @ E3 @ E4
    eta_d = E1 @ E2 @ (g3d * K3) @ E3 @ E4 + E1 @ E2 @ E3 @ (g4d * K4) @ E4
    H = a * (K1 + K2) + 1j * lam * K3
    eta_inv = np.linalg.inv(eta)
    tdde = eta @ H @ eta_inv + 1j * hb * eta_d @ eta_inv - h
    energy = eta_inv @ h @ eta - Ht
    if rep is not None:
        tdde_r, energy_r = rep.interior_norm(tdde, margin), rep.interior_norm(energy, margin)
    else:
        tdde_r, energy_r = np.linalg.norm(tdde, 2), np.linalg.norm(energy, 2)
    if tdde_r > 1e-6:
        raise TruncationError(f"TDDE residual {tdde_r:.2e} on the interior subspace at t={t}")
    return h, Ht, {"eta": eta, "tdde_residual": tdde_r, "energy_residual": energy_r, "h_hermitian_defect": hermitian_defect(h)}
