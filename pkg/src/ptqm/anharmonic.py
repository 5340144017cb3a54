"""Time-dependent unstable quartic oscillator: coefficient chain and potential surfaces.

The Hamiltonian is ``p^2 + m(t) z^2 / 4 - g(t) z^4 / 16`` with ``g > 0``.
Writing ``g = 1/(4 sigma^3)`` and
``m = (4 c2 + sigma'^2 - 2 sigma sigma'') / (4 sigma^2)`` solves the
third-order consistency equation for any positive ``sigma`` and gives the
coefficients of the Dyson map ``exp(alpha x) exp(beta p^3 + i gamma p^2 + i delta p)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy

from .errors import DomainError, SingularTransformationError, ValidationError
from .numcore import TimeSeries

_T = sympy.Symbol("t", real=True)


def _fd_weights(k: int, m: int = 4) -> np.ndarray:
    """Central weights for the ``k``-th derivative on offsets ``-m..m`` (unit spacing)."""
    offs = np.arange(-m, m + 1, dtype=float)
    A = np.vander(offs, increasing=True).T
    b = np.zeros(2 * m + 1)
    b[k] = float(np.prod(np.arange(1, k + 1)))
    return np.linalg.solve(A, b)


class SmoothFunction:
    """Scalar function of time with derivatives up to third order.

    Built from a sympy expression in ``t`` (or a string), derivatives are
    analytic; built from a plain callable, they come from central
    differences of at least sixth order on nine points.
    """

    def __init__(self, f, h: float = 1e-2, name: str = "f"):
        self.name = name
        self.h = h
        if isinstance(f, str):
            f = sympy.sympify(f, locals={"t": _T})
        if isinstance(f, sympy.Basic):
            expr = f.subs(sympy.Symbol("t"), _T)
            self.expr = expr
            self._fns = [sympy.lambdify(_T, sympy.diff(expr, _T, k), "numpy") for k in range(4)]
            self.analytic = True
        elif callable(f):
            self.expr = None
            self._f = f
            self._w = {k: _fd_weights(k) for k in (1, 2, 3)}
            self.analytic = False
        else:
            raise ValidationError(f"{name} must be a sympy expression, a string or a callable")

    def d(self, k: int, t):
        """``k``-th derivative at ``t`` (``k`` in 0..3)."""
        t = np.asarray(t, dtype=float)
        if k not in (0, 1, 2, 3):
            raise ValidationError("derivative order must be 0..3")
        if self.analytic:
            return np.broadcast_to(np.asarray(self._fns[k](t), dtype=float), t.shape).copy()[()]
        if k == 0:
            return np.asarray(self._f(t), dtype=float)
        w = self._w[k]
        offs = np.arange(-4, 5)
        return sum(wi * np.asarray(self._f(t + o * self.h), dtype=float) for wi, o in zip(w, offs)) / self.h**k

    def __call__(self, t):
        return self.d(0, t)


@dataclass
class AnharmonicChain:
    """``g``, ``m`` from ``sigma`` together with the constants of the Dyson-map ansatz."""

    sigma: SmoothFunction
    g: SmoothFunction
    m: SmoothFunction
    c1: float
    c2: float

    def coefficients(self, t, gdot_tol: float = 1e-10):
        return dyson_coefficients(self.g, self.m, self.c1, t, gdot_tol)


def sigma_to_gm(sigma, c2: float, t_check=None) -> tuple[SmoothFunction, SmoothFunction]:
    """Coupling ``g`` and mass ``m`` generated by ``sigma``.

    Parameters
    ----------
    sigma : sympy expression, str or callable
        Positive function of ``t``. Symbolic input gives closed-form ``g``,
        ``m`` and derivatives.
    c2 : float
        Integration constant in ``m``.
    t_check : array_like, optional
        Points where positivity of ``sigma`` is checked (default ``[-3, 3]``).

    Raises
    ------
    DomainError
        If ``sigma <= 0`` at a checked point.
    """
    s = sigma if isinstance(sigma, SmoothFunction) else SmoothFunction(sigma, name="sigma")
    tc = np.linspace(-3, 3, 61) if t_check is None else np.atleast_1d(np.asarray(t_check, dtype=float))
    vals = s(tc)
    if np.any(vals <= 0):
        raise DomainError(f"sigma must be positive; fails at t={tc[np.argmax(vals <= 0)]:.6g}")
    if s.analytic:
        e = s.expr
        g = SmoothFunction(1 / (4 * e**3), name="g")
        m = SmoothFunction((4 * sympy.nsimplify(c2) + e.diff(_T) ** 2 - 2 * e * e.diff(_T, 2)) / (4 * e**2), name="m")
    else:
        g = SmoothFunction(lambda t: 1.0 / (4 * s(t) ** 3), h=s.h, name="g")
        m = SmoothFunction(
            lambda t: (4 * c2 + s.d(1, t) ** 2 - 2 * s(t) * s.d(2, t)) / (4 * s(t) ** 2), h=s.h, name="m"
        )
    return g, m


def anharmonic_chain(sigma, c1: float = 0.0, c2: float = 0.0) -> AnharmonicChain:
    s = sigma if isinstance(sigma, SmoothFunction) else SmoothFunction(sigma, name="sigma")
    g, m = sigma_to_gm(s, c2)
    return AnharmonicChain(s, g, m, c1, c2)


def fit_c2(sigma, m_target, t_grid) -> tuple[float, float]:
    """Least-squares ``c2`` making ``m`` from ``sigma`` match ``m_target`` on ``t_grid``.

    ``m`` is affine in ``c2`` with slope ``1/sigma^2``. Returns
    ``(c2, max_abs_mismatch)``.
    """
    s = sigma if isinstance(sigma, SmoothFunction) else SmoothFunction(sigma, name="sigma")
    t = np.asarray(t_grid, dtype=float)
    _, m0 = sigma_to_gm(s, 0.0, t_check=t)
    slope = 1.0 / s(t) ** 2
    target = np.asarray(m_target(t) if callable(m_target) else m_target, dtype=float)
    r = target - m0(t)
    c2 = float(np.dot(slope, r) / np.dot(slope, slope))
    return c2, float(np.abs(r - c2 * slope).max())


def _as_smooth(f, name):
    return f if isinstance(f, SmoothFunction) else SmoothFunction(f, name=name)


def thirdo_residual(g_fn, m_fn, t_grid) -> TimeSeries:
    """Pointwise ``|9 g^2 (g''' - 6 g m') + 36 g g' (g m - g'') + 28 g'^3|``."""
    g, m = _as_smooth(g_fn, "g"), _as_smooth(m_fn, "m")
    t = np.asarray(t_grid, dtype=float)
    G, G1, G2, G3 = (g.d(k, t) for k in range(4))
    M, M1 = m(t), m.d(1, t)
    r = 9 * G**2 * (G3 - 6 * G * M1) + 36 * G * G1 * (G * M - G2) + 28 * G1**3
    return TimeSeries(t, np.abs(r), {"analytic": g.analytic and m.analytic})


def dyson_coefficients(g_fn, m_fn, c1: float, t, gdot_tol: float = 1e-10) -> tuple[float, float, float, float]:
    """``(alpha, beta, gamma, delta)`` of the Dyson-map ansatz at time ``t``.

    Raises
    ------
    SingularTransformationError
        At a turning point of ``g`` (``|g'| <= gdot_tol``), where ``gamma``
        and ``delta`` diverge.
    DomainError
        If ``g <= 0``.
    """
    g, m = _as_smooth(g_fn, "g"), _as_smooth(m_fn, "m")
    G, G1, G2 = float(g(t)), float(g.d(1, t)), float(g.d(2, t))
    M = float(m(t))
    if G <= 0:
        raise DomainError(f"g must be positive, got g({t})={G:.6g}")
    if abs(G1) <= gdot_tol:
        raise SingularTransformationError(f"g has a turning point at t={t}; gamma and delta diverge", float(t))
    alpha = G1 / (6 * G)
    beta = 1 / (6 * G)
    gamma = (12 * G**3 + 6 * M * G**2 + G1**2 - G * G2) / (4 * G1 * G**2)
    delta = c1 * G / G1 - G * np.log(G) / (2 * G1)
    return alpha, beta, gamma, delta


def quartic_potential(g: float, m: float, z) -> np.ndarray:
    """``m z^2 / 4 - g z^4 / 16``."""
    z = np.asarray(z, dtype=float)
    return m / 4 * z**2 - g / 16 * z**4


def double_well_potential(g: float, gd: float, m: float, y) -> np.ndarray:
    """Quartic-plus-linear potential of the Fourier-transformed Hermitian partner, offsets included."""
    y = np.asarray(y, dtype=float)
    quad = gd**2 / (36 * g**3) + 72 * g**2 * m / gd**2 - m / g + 2
    lin = (36 * g**2 * m + gd**2) * np.sqrt(g) * np.log(g) / (12 * gd**2)
    const = gd**4 / (5184 * g**5) - gd**2 * m / (144 * g**3) - gd**2 / (72 * g**2) - m / 2
    return g / 4 * y**2 * (y**2 + quad) + lin * y + const


@dataclass
class PotentialSurfaces:
    """``V[i, :]`` on ``z_grid`` and ``V_tilde[i, :]`` on ``y_grid`` for each time in ``times``."""

    times: np.ndarray
    evaluated_at: np.ndarray
    z: np.ndarray
    y: np.ndarray
    V: np.ndarray
    V_tilde: np.ndarray

    def minima(self, i: int) -> np.ndarray:
        """Locations of local minima of ``V_tilde`` at sample ``i`` (sign change of the slope)."""
        dv = np.diff(self.V_tilde[i])
        idx = np.nonzero((dv[:-1] < 0) & (dv[1:] >= 0))[0] + 1
        return self.y[idx]

    def to_csv(self, path, which: str = "V_tilde") -> None:
        """Long-format CSV ``coordinate, t, value``."""
        coord, field = (self.z, self.V) if which == "V" else (self.y, self.V_tilde)
        rows = [(c, t, v) for t, row in zip(self.evaluated_at, field) for c, v in zip(coord, row)]
        np.savetxt(path, np.array(rows), delimiter=",", header="coordinate,t,value", comments="")


def potential_surfaces(g_fn, m_fn, z_grid, y_grid, t_list, t_reg: float = 1e-3, gdot_tol: float = 1e-10) -> PotentialSurfaces:
    """Evaluate ``V(z, t)`` and ``V_tilde(y, t)`` at each time in ``t_list``.

    ``V_tilde`` divides by ``g'``; at a turning point of ``g`` it is
    evaluated at ``t + t_reg`` instead and the shifted time is recorded in
    ``evaluated_at``. ``V`` is always evaluated at the requested time.
    """
    g, m = _as_smooth(g_fn, "g"), _as_smooth(m_fn, "m")
    z = np.asarray(z_grid, dtype=float)
    y = np.asarray(y_grid, dtype=float)
    ts = np.atleast_1d(np.asarray(t_list, dtype=float))
    V, Vt, used = [], [], []
    for t in ts:
        V.append(quartic_potential(float(g(t)), float(m(t)), z))
        te = t + t_reg if abs(float(g.d(1, t))) <= gdot_tol else t
        used.append(te)
        Vt.append(double_well_potential(float(g(te)), float(g.d(1, te)), float(m(te)), y))
    return PotentialSurfaces(ts, np.array(used), z, y, np.array(V), np.array(Vt))
