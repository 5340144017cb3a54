"""Supersymmetric factorization and time-dependent Darboux transformations on a grid.

Hamiltonians have the form ``-d^2/dx^2 + V`` (no factor 1/2) and the
time-dependent Schroedinger equation reads ``i u_t = -u_xx + v u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_simpson

from .errors import DomainError, SingularTransformationError, ValidationError
from .numcore import TimeSeries, fd_derivative


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[x_min, x_max]`` with Dirichlet boundaries."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 200:
            raise ValidationError(f"grid needs n >= 200 points, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValidationError("x_max must exceed x_min")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    def d1(self, f) -> np.ndarray:
        """Fourth-order first derivative along the last axis (one-sided at the ends)."""
        f = np.asarray(f)
        return np.moveaxis(fd_derivative(np.moveaxis(f, -1, 0), self.x), 0, -1)

    def d2(self, f) -> np.ndarray:
        """Fourth-order second derivative along the last axis.

        Interior points use the five-point stencil, the two outermost points
        on each side a sixth-point one-sided formula.
        """
        f = np.asarray(f)
        g = np.moveaxis(f, -1, 0)
        out = np.empty_like(g)
        h2 = self.h**2
        out[2:-2] = (-g[:-4] + 16 * g[1:-3] - 30 * g[2:-2] + 16 * g[3:-1] - g[4:]) / (12 * h2)
        c = np.array([45, -154, 214, -156, 61, -10]) / (12 * h2)
        c1 = np.array([10, -15, -4, 14, -6, 1]) / (12 * h2)
        out[0] = np.tensordot(c, g[:6], axes=1)
        out[1] = np.tensordot(c1, g[:6], axes=1)
        out[-1] = np.tensordot(c, g[::-1][:6], axes=1)
        out[-2] = np.tensordot(c1, g[::-1][:6], axes=1)
        return np.moveaxis(out, 0, -1)

    def laplacian(self, order: int = 2) -> sp.csc_matrix:
        """Dirichlet Laplacian as a sparse matrix.

        ``order=2`` is the three-point stencil, ``order=4`` the five-point one
        (three-point in the rows next to the boundary).
        """
        n, h2 = self.n, self.h**2
        if order == 2:
            return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csc") / h2
        if order != 4:
            raise ValidationError("order must be 2 or 4")
        L = sp.diags(
            [-np.ones(n - 2), 16 * np.ones(n - 1), -30 * np.ones(n), 16 * np.ones(n - 1), -np.ones(n - 2)],
            [-2, -1, 0, 1, 2], format="lil") / 12
        for i in (0, n - 1):
            L[i, :] = 0
            L[i, i] = -2
            if i + 1 < n:
                L[i, i + 1] = 1
            if i - 1 >= 0:
                L[i, i - 1] = 1
        return L.tocsc() / h2

    def hamiltonian(self, V, order: int = 4) -> sp.csc_matrix:
        """``-d^2/dx^2 + V`` with the Laplacian of the given order."""
        return (-self.laplacian(order) + sp.diags(np.asarray(V))).tocsc()

    def integrate(self, f) -> np.ndarray:
        """``int_{x_min}^x f`` along the last axis (Simpson)."""
        return cumulative_simpson(np.asarray(f), x=self.x, axis=-1, initial=0.0)


def _find_node(f):
    """``(sample, index)`` of a node of ``f`` along the last axis, or ``None``.

    A node is an exact zero, or for real-valued samples a sign change
    between neighbouring points.
    """
    f = np.atleast_2d(np.asarray(f))
    zero = np.abs(f) < 1e-300
    if np.isrealobj(f) or np.abs(f.imag).max() == 0:
        r = f.real
        zero[:, 1:] |= (r[:, :-1] * r[:, 1:]) < 0
    hits = np.argwhere(zero)
    return tuple(int(v) for v in hits[0]) if hits.size else None


def _cumulative(grid: Grid1D, f):
    f = np.asarray(f)
    if np.iscomplexobj(f):
        return grid.integrate(f.real) + 1j * grid.integrate(f.imag)
    return grid.integrate(f)


# ---------------------------------------------------------------------------
# time-independent supersymmetry


@dataclass
class SusyPair:
    """Partner potentials of a superpotential and the intertwiners as callables."""

    grid: Grid1D
    W: np.ndarray
    V1: np.ndarray
    V2: np.ndarray

    def L_plus(self, f) -> np.ndarray:
        """``L_+ f = -f' + W f``."""
        return -self.grid.d1(f) + self.W * f

    def L_minus(self, f) -> np.ndarray:
        """``L_- f = f' + W f``."""
        return self.grid.d1(f) + self.W * f

    def H1(self, f) -> np.ndarray:
        return -self.grid.d2(f) + self.V1 * f

    def H2(self, f) -> np.ndarray:
        return -self.grid.d2(f) + self.V2 * f

    def factorization_defect(self, tests, margin: int = 10) -> tuple[float, float]:
        """Largest interior deviation of ``H1 - L_+ L_-`` and ``H2 - L_- L_+`` on test functions."""
        s = slice(margin, -margin)
        d1 = max(np.abs((self.H1(f) - self.L_plus(self.L_minus(f)))[s]).max() for f in tests)
        d2 = max(np.abs((self.H2(f) - self.L_minus(self.L_plus(f)))[s]).max() for f in tests)
        return float(d1), float(d2)

    def spectra(self, k: int = 6) -> tuple[np.ndarray, np.ndarray]:
        """Lowest ``k`` eigenvalues of both partners (sorted by real part)."""
        return grid_spectrum(self.grid, self.V1, k), grid_spectrum(self.grid, self.V2, k)

    def pairing_error(self, k: int = 6) -> float:
        """``max |E_n^(2) - E_{n+1}^(1)|`` over ``n < k`` together with ``|E_0^(1)|``."""
        e1, e2 = self.spectra(k + 1)
        return float(max(np.abs(e2[:k] - e1[1 : k + 1]).max(), abs(e1[0])))


def grid_spectrum(grid: Grid1D, V, k: int = 6) -> np.ndarray:
    """Lowest ``k`` eigenvalues of ``-d^2/dx^2 + V`` (shift-invert around the potential minimum)."""
    V = np.asarray(V)
    H = grid.hamiltonian(V)
    shift = float(np.min(V.real)) - 1.0
    # fixed start vector: ARPACK otherwise draws a random one and results jitter between runs
    v0 = np.random.default_rng(0).standard_normal(H.shape[0])
    if np.iscomplexobj(V) and np.abs(V.imag).max() > 0:
        w = spla.eigs(H.astype(complex), k=k + 4, sigma=shift, which="LM", return_eigenvectors=False, v0=v0.astype(complex))
    else:
        w = spla.eigsh(H.real, k=k + 4, sigma=shift, which="LM", return_eigenvectors=False, v0=v0)
    w = np.asarray(w)
    return w[np.argsort(w.real, kind="stable")][:k]


def susy_factorize(W, grid: Grid1D) -> SusyPair:
    """Partner potentials ``V1 = W^2 - W'`` and ``V2 = W^2 + W'``.

    ``W`` may be an array on the grid or a callable of ``x``; complex values
    are allowed.

    Raises
    ------
    DomainError
        If ``W`` is under-resolved (relative change between neighbours above
        one half somewhere).
    """
    x = grid.x
    Wv = np.asarray(W(x) if callable(W) else W)
    if Wv.shape != x.shape:
        raise ValidationError("superpotential must be sampled on the grid")
    scale = np.abs(Wv).max() + 1.0
    if np.abs(np.diff(Wv)).max() > 0.5 * scale:
        raise DomainError("superpotential is under-resolved on this grid; refine it")
    Wp = grid.d1(Wv)
    return SusyPair(grid, Wv, Wv**2 - Wp, Wv**2 + Wp)


def complexify_superpotential(W_i, grid: Grid1D, sign: int = 1, tol: float = 1e-6) -> tuple[SusyPair, dict]:
    """Complex superpotential ``W = W_r + i W_i`` with ``W_r = sign * (1/2) (log W_i)'``.

    For ``sign = +1`` the first partner ``V1`` is real, for ``sign = -1`` the
    second. The report lists which partner is real and flags the degenerate
    case in which both are (constant ``W_i``).

    Raises
    ------
    DomainError
        If ``W_i`` is not strictly positive on the grid.
    """
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1")
    x = grid.x
    Wi = np.asarray(W_i(x) if callable(W_i) else W_i, dtype=float)
    if np.any(Wi <= 0):
        raise DomainError(f"W_i must be positive; fails at x={x[np.argmax(Wi <= 0)]:.6g}")
    Wr = sign * 0.5 * grid.d1(np.log(Wi))
    pair = susy_factorize(Wr + 1j * Wi, grid)
    inner = slice(5, -5)
    im1 = float(np.abs(pair.V1.imag[inner]).max())
    im2 = float(np.abs(pair.V2.imag[inner]).max())
    scale = max(1.0, float(np.abs(pair.V1[inner]).max()), float(np.abs(pair.V2[inner]).max()))
    real = [name for name, im in (("V1", im1), ("V2", im2)) if im <= tol * scale]
    report = {"max_imag_V1": im1, "max_imag_V2": im2, "real": real, "degenerate": len(real) == 2}
    return pair, report


# ---------------------------------------------------------------------------
# time evolution


def crank_nicolson(v_fn, u0, grid: Grid1D, t_grid, substeps: int = 1, order: int = 4) -> np.ndarray:
    """Evolve ``i u_t = -u_xx + v(x, t) u`` with Crank-Nicolson, Dirichlet ends.

    ``order`` selects the spatial Laplacian (see :meth:`Grid1D.laplacian`).

    ``v_fn(x, t)`` returns the potential on the grid. Returns the snapshots at
    ``t_grid`` as an array of shape ``(len(t_grid), n)``.
    """
    t = np.asarray(t_grid, dtype=float)
    x = grid.x
    L = grid.laplacian(order)
    I = sp.identity(grid.n, format="csc")
    u = np.asarray(u0, dtype=complex).copy()
    out = [u.copy()]
    cache = {}
    for k in range(1, len(t)):
        dt = (t[k] - t[k - 1]) / substeps
        for j in range(substeps):
            tm = t[k - 1] + (j + 0.5) * dt
            V = np.asarray(v_fn(x, tm), dtype=complex)
            key = (dt, V.tobytes()) if len(cache) < 2 else None
            H = -L + sp.diags(V)
            if key in cache:
                lu = cache[key]
            else:
                lu = spla.splu((I + 0.5j * dt * H).tocsc())
                if key is not None:
                    cache = {key: lu}
            u = lu.solve((I - 0.5j * dt * H) @ u)
        out.append(u.copy())
    return np.array(out)


def tdse_residual(grid: Grid1D, t_grid, psi, v) -> np.ndarray:
    """``i psi_t + psi_xx - v psi`` with fourth-order differences in ``t`` and ``x``."""
    psi = np.asarray(psi)
    psi_t = fd_derivative(psi, np.asarray(t_grid, dtype=float))
    return 1j * psi_t + grid.d2(psi) - np.asarray(v) * psi


def core_mask(u, rel: float = 1e-2) -> np.ndarray:
    """Points where ``|u|`` exceeds ``rel`` times its maximum at every sample."""
    a = np.abs(np.atleast_2d(u))
    return np.all(a >= rel * a.max(axis=1, keepdims=True), axis=0)


@dataclass
class DarbouxPair:
    """Result of a time-dependent Darboux transformation."""

    grid: Grid1D
    times: np.ndarray
    u: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    ell1: np.ndarray
    phi1: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def intertwiner(self, f, k: int) -> np.ndarray:
        """``ell f = ell1 (f' - (u_x/u) f)`` at sample ``k``."""
        u = self.u[k]
        return self.ell1[k] * (self.grid.d1(f) - self.grid.d1(u) / u * f)

    def intertwining_residual(self, psi, core=None) -> float:
        """Max of ``ell(i d_t - h0) psi - (i d_t - h1) ell psi`` on the core region.

        ``psi`` is a sampled test function of shape ``(len(times), n)``;
        the result is relative to ``max |ell psi|``.
        """
        t = self.times
        lpsi = np.array([self.intertwiner(psi[k], k) for k in range(len(t))])
        lhs_in = 1j * fd_derivative(psi, t) + self.grid.d2(psi) - self.v0 * psi
        lhs = np.array([self.intertwiner(lhs_in[k], k) for k in range(len(t))])
        rhs = 1j * fd_derivative(lpsi, t) + self.grid.d2(lpsi) - self.v1 * lpsi
        core = core_mask(self.u) if core is None else core
        inner = slice(2, -2)
        return float(np.abs((lhs - rhs)[inner][:, core]).max() / np.abs(lpsi[inner][:, core]).max())


def td_darboux_hermitian(
    v0_fn, u, grid: Grid1D, t_grid, core_rel: float = 1e-2, anchor: str = "mean", spread_tol: float = 1e-2
) -> DarbouxPair:
    """Time-dependent Darboux partner of ``h0 = p^2 + v0`` from a seed solution ``u``.

    ``w = v0 + 2 (u_x/u)^2 - 2 u_xx/u``; the gauge function
    ``ell1 = exp(-int Im w dt)`` makes ``v1 = Re w`` real, and
    ``phi1 = (1/(ell1 u*)) int_{x_min}^x |u|^2`` solves the partner TDSE.
    ``Im w`` must be independent of ``x``; its spread over the core region
    is reported as ``diagnostics["im_w_spread"]`` and the ``anchor``
    (``"mean"`` over the core, or ``"center"``) picks the value used.

    Raises
    ------
    SingularTransformationError
        If ``u`` vanishes on the grid interior.
    """
    t = np.asarray(t_grid, dtype=float)
    x = grid.x
    u = np.asarray(u, dtype=complex)
    node = _find_node(u[:, 1:-1])
    if node is not None:
        k, j = node
        raise SingularTransformationError(f"seed vanishes at x={x[j + 1]:.6g}, t={t[k]:.6g}", (float(x[j + 1]), float(t[k])))
    v0 = np.array([np.asarray(v0_fn(x, s), dtype=complex) for s in t])
    ux, uxx = grid.d1(u), grid.d2(u)
    w = v0 + 2 * (ux / u) ** 2 - 2 * uxx / u
    core = core_mask(u, core_rel)
    im_core = w.imag[:, core]
    spread = float(np.ptp(im_core, axis=1).max())
    if anchor == "mean":
        im_w = im_core.mean(axis=1)
    elif anchor == "center":
        im_w = w.imag[:, grid.n // 2]
    else:
        raise ValidationError(f"unknown anchor {anchor!r}")
    ell1 = np.exp(-cumulative_simpson(im_w, x=t, initial=0.0))
    v1 = w.real
    phi1 = _cumulative(grid, np.abs(u) ** 2) / (ell1[:, None] * np.conj(u))
    seed_res = tdse_residual(grid, t, u, v0)
    phi_res = tdse_residual(grid, t, phi1, v1)
    inner = slice(2, -2)
    diag = {
        "im_w_spread": spread,
        "x_dependent": spread > spread_tol * max(1.0, float(np.abs(w.real[:, core]).max())),
        "seed_residual": float(np.abs(seed_res[inner][:, core]).max() / np.abs(u[:, core]).max()),
        "phi1_residual": float(np.abs(phi_res[inner][:, core]).max() / np.abs(phi1[:, core]).max()),
        "core_points": int(core.sum()),
    }
    return DarbouxPair(grid, t, u, v0.real if np.abs(v0.imag).max() == 0 else v0, v1, ell1, phi1, diag)


@dataclass
class NonHermitianDarboux:
    """Intertwiner ``L = eta1^{-1} ell eta0`` and the partner solution ``psi1~``."""

    base: DarbouxPair
    eta0: np.ndarray
    eta1: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def H(self, j: int, f, k: int) -> np.ndarray:
        """``H_j f = eta_j^{-1} h_j (eta_j f) - i (eta_j'/eta_j) f`` at sample ``k``."""
        eta = (self.eta0, self.eta1)[j]
        v = (self.base.v0, self.base.v1)[j]
        g = self.base.grid
        eta_dot = fd_derivative(eta, self.base.times)
        ef = eta[k] * f
        return (-g.d2(ef) + v[k] * ef) / eta[k] - 1j * eta_dot[k] / eta[k] * f

    def L(self, f, k: int) -> np.ndarray:
        return self.base.intertwiner(self.eta0[k] * f, k) / self.eta1[k]

    def tdse_residual(self, psi, j: int, core=None) -> float:
        """Relative core-region residual of ``i psi_t = H_j psi``."""
        t = self.base.times
        r = 1j * fd_derivative(psi, t) - np.array([self.H(j, psi[k], k) for k in range(len(t))])
        core = core_mask(self.base.u) if core is None else core
        inner = slice(2, -2)
        return float(np.abs(r[inner][:, core]).max() / np.abs(psi[inner][:, core]).max())

    def intertwining_residual(self, psi, core=None) -> float:
        """Relative core-region residual of ``L(i d_t - H0) psi = (i d_t - H1) L psi``."""
        t = self.base.times
        n = len(t)
        Lpsi = np.array([self.L(psi[k], k) for k in range(n)])
        a = 1j * fd_derivative(psi, t) - np.array([self.H(0, psi[k], k) for k in range(n)])
        lhs = np.array([self.L(a[k], k) for k in range(n)])
        rhs = 1j * fd_derivative(Lpsi, t) - np.array([self.H(1, Lpsi[k], k) for k in range(n)])
        core = core_mask(self.base.u) if core is None else core
        inner = slice(2, -2)
        return float(np.abs((lhs - rhs)[inner][:, core]).max() / np.abs(Lpsi[inner][:, core]).max())


def td_darboux_nonhermitian(base: DarbouxPair, eta0_fn, eta1_fn) -> NonHermitianDarboux:
    """Lift a Hermitian Darboux pair to non-Hermitian partners via Dyson maps.

    ``eta0_fn(x, t)`` and ``eta1_fn(x, t)`` are multiplication operators.
    With ``H_j = eta_j^{-1} h_j eta_j - i eta_j^{-1} eta_j'`` the seed is
    ``psi0 = eta0^{-1} u`` and ``psi1~ = eta1^{-1} (1/(ell1 (eta0 psi0)^*)) int |eta0 psi0|^2``.

    Raises
    ------
    SingularTransformationError
        If either map vanishes somewhere on the grid.
    """
    g, t = base.grid, base.times
    x = g.x
    e0 = np.array([np.asarray(eta0_fn(x, s), dtype=complex) for s in t])
    e1 = np.array([np.asarray(eta1_fn(x, s), dtype=complex) for s in t])
    for name, e in (("eta0", e0), ("eta1", e1)):
        node = _find_node(e)
        if node is not None:
            k, j = node
            raise SingularTransformationError(f"{name} is not invertible at x={x[j]:.6g}", (float(x[j]), float(t[k])))
    psi0 = base.u / e0
    integral = _cumulative(g, np.abs(e0 * psi0) ** 2)
    psi1 = integral / (base.ell1[:, None] * np.conj(e0 * psi0)) / e1
    rho1 = np.abs(e1) ** 2
    norm = np.trapezoid(np.abs(psi1) ** 2 * rho1, x, axis=1)
    diag = {
        "integral_monotone": bool(np.all(np.diff(integral.real, axis=1) >= -1e-14)),
        "nodeless": bool(np.all(np.abs(psi1[:, 1:-1]) > 0)),
        "rho1_norm_finite": bool(np.all(np.isfinite(norm))),
        "rho1_norm_max": float(norm.max()),
    }
    out = NonHermitianDarboux(base, e0, e1, psi0, psi1, diag)
    out.diagnostics["psi1_residual"] = out.tdse_residual(out.psi1, 1)
    return out


def gaussian_packet(x, x0: float = 0.0, width: float = 1.0, k0: float = 0.0) -> np.ndarray:
    """``exp(-(x - x0)^2 / (2 width^2) + i k0 x)``."""
    return np.exp(-((x - x0) ** 2) / (2 * width**2) + 1j * k0 * x)


def free_gaussian(x, t, width: float = 1.0, k0: float = 0.0) -> np.ndarray:
    """Exact solution of ``i u_t = -u_xx`` starting from :func:`gaussian_packet`."""
    s2 = width**2 + 2j * t
    return width / np.sqrt(s2) * np.exp(-((x - 2 * k0 * t) ** 2) / (2 * s2) + 1j * k0 * x - 1j * k0**2 * t)


def export_snapshots_csv(path, grid: Grid1D, v, psi, t_index: int | None = None) -> None:
    """Write ``x, Re v, Im v, |psi|^2`` for one time sample (or a static field) to CSV."""
    v = np.asarray(v)
    psi = np.asarray(psi)
    if t_index is not None:
        v = v[t_index] if v.ndim == 2 else v
        psi = psi[t_index]
    v = np.broadcast_to(v, grid.x.shape)
    data = np.column_stack([grid.x, v.real, np.imag(v), np.abs(psi) ** 2])
    np.savetxt(path, data, delimiter=",", header="x,re_v,im_v,abs_psi_sq", comments="")
