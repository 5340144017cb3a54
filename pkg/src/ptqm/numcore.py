"""Dense complex linear algebra and integration kernels.

Everything here works on plain ``numpy`` arrays of dtype ``complex128``.
The helpers validate their inputs, delegate the heavy lifting to LAPACK via
``scipy.linalg`` and then check the result against an explicit residual, so
that downstream modules can rely on documented accuracy guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import (
    ConvergenceError,
    HermiticityError,
    NotPositiveDefiniteError,
    ScaledArgumentOverflow,
    StiffnessError,
    ValidationError,
)

#: Reduced Planck constant used when a caller does not pass ``hbar``.
HBAR = 1.0

#: Smallest eigenvalue accepted for a positive-definite metric.
PD_FLOOR = 1e-12

# log of the largest double, minus a safety margin
_EXP_NORM_LIMIT = 700.0

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def resolve_hbar(hbar: float | None) -> float:
    """Return ``hbar`` or the module default when ``None``."""
    return HBAR if hbar is None else float(hbar)


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``M`` into a square finite complex matrix.

    Parameters
    ----------
    M : array_like
        Candidate matrix.
    name : str
        Label used in error messages.

    Returns
    -------
    numpy.ndarray
        Copy of ``M`` as ``complex128``.

    Raises
    ------
    ValidationError
        If ``M`` is not square or has NaN/Inf entries.
    """
    A = np.array(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    return A


def norm2(M) -> float:
    """Spectral norm (largest singular value)."""
    return float(np.linalg.norm(M, 2))


def dagger(M) -> np.ndarray:
    return np.conj(np.transpose(M))


def commutator(A, B) -> np.ndarray:
    return A @ B - B @ A


def anticommutator(A, B) -> np.ndarray:
    return A @ B + B @ A


def hermitian_defect(M) -> float:
    """Spectral norm of the anti-Hermitian part ``(M - M^dagger)/2``."""
    return norm2(0.5 * (M - dagger(M)))


@dataclass(frozen=True)
class TimeSeries:
    """Ordered samples ``(t, value)`` on a strictly increasing time grid.

    ``values`` is stored as a single array whose leading axis runs over time,
    so every sample automatically has the same shape.
    """

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if t.ndim != 1:
            raise ValidationError("times must be one-dimensional")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValidationError("times must be strictly increasing")
        if v.shape[:1] != t.shape:
            raise ValidationError(f"expected {t.size} samples, got values of shape {v.shape}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self):
        return iter(zip(self.times, self.values))

    def __getitem__(self, k):
        return self.times[k], self.values[k]

    @classmethod
    def from_samples(cls, times: Sequence[float], values: Sequence, **meta) -> "TimeSeries":
        vals = [np.asarray(v) for v in values]
        shapes = {v.shape for v in vals}
        if len(shapes) > 1:
            raise ValidationError(f"samples have inconsistent shapes {sorted(shapes)}")
        return cls(np.asarray(times, dtype=float), np.array(vals), dict(meta))

    def map(self, fn: Callable) -> "TimeSeries":
        """Apply ``fn`` sample by sample and return a new series."""
        return TimeSeries.from_samples(self.times, [fn(v) for v in self.values], **self.meta)


# ---------------------------------------------------------------------------
# eigen-decompositions


def eig_general(M, residual_tol: float = 1e-10):
    """Eigen-decomposition of a general complex matrix.

    Parameters
    ----------
    M : array_like
        Square finite matrix.
    residual_tol : float
        Relative residual bound ``|M v - e v| <= residual_tol * |M|`` per pair.

    Returns
    -------
    eigenvalues : numpy.ndarray
        Sorted by real part, then imaginary part.
    vectors : numpy.ndarray
        Unit-norm right eigenvectors as columns, in the same order.

    Raises
    ------
    ConvergenceError
        If LAPACK fails or any eigenpair misses the residual bound.
    """
    A = as_matrix(M)
    try:
        w, V = sla.eig(A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    # round before sorting so that values equal up to noise keep a stable order
    key_re = np.round(w.real, 12)
    key_im = np.round(w.imag, 12)
    order = np.lexsort((key_im, key_re))
    w, V = w[order], V[:, order]
    scale = max(norm2(A), 1.0)
    res = np.linalg.norm(A @ V - V * w, axis=0).max()
    if not np.isfinite(res) or res > residual_tol * scale:
        raise ConvergenceError(f"eigenpair residual {res:.3e} exceeds {residual_tol:.1e}*|M|", residual=float(res))
    return w, V


def eigh(M, herm_tol: float = 1e-12):
    """Eigen-decomposition of a Hermitian matrix.

    Returns ascending real eigenvalues and an orthonormal eigenvector matrix.

    Raises
    ------
    HermiticityError
        If ``|M - M^dagger| > herm_tol * |M|``; the defect is attached.
    """
    A = as_matrix(M)
    defect = norm2(A - dagger(A))
    scale = max(norm2(A), np.finfo(float).tiny)
    if defect > herm_tol * scale:
        raise HermiticityError(f"matrix is not Hermitian: |M - M^dagger| = {defect:.3e}", defect)
    w, V = np.linalg.eigh(0.5 * (A + dagger(A)))
    return w, V


# ---------------------------------------------------------------------------
# matrix functions


def expm(M) -> np.ndarray:
    """Matrix exponential (scaling and squaring, Pade 13).

    Raises
    ------
    ScaledArgumentOverflow
        If the 1-norm of ``M`` is so large that entries would overflow.
    """
    A = as_matrix(M)
    if not np.any(A):
        return np.eye(A.shape[0], dtype=complex)
    nrm = np.linalg.norm(A, 1)
    if nrm > _EXP_NORM_LIMIT:
        # only the Hermitian part can blow up; check the spectral abscissa
        herm = 0.5 * (A + dagger(A))
        if np.linalg.eigvalsh(herm).max() > _EXP_NORM_LIMIT:
            raise ScaledArgumentOverflow(
                f"exp of a matrix with norm {nrm:.3e} overflows double precision; rescale the argument"
            )
    E = sla.expm(A)
    if not np.all(np.isfinite(E)):
        raise ScaledArgumentOverflow(f"matrix exponential overflowed (|M|_1 = {nrm:.3e})")
    return E


def sqrtm_psd(M, floor: float = PD_FLOOR) -> np.ndarray:
    """Positive square root of a Hermitian positive-definite matrix.

    Raises
    ------
    NotPositiveDefiniteError
        If any eigenvalue is ``<= floor``; the offending eigenvalues are listed.
    """
    w, V = eigh(M, herm_tol=1e-10)
    bad = w[w <= floor]
    if bad.size:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite, eigenvalues below {floor:g}: {np.array2string(bad, precision=3)}",
            bad,
        )
    return (V * np.sqrt(w)) @ dagger(V)


def funm_hermitian(M, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix via its spectrum."""
    w, V = eigh(M, herm_tol=1e-10)
    return (V * fn(w)) @ dagger(V)


# ---------------------------------------------------------------------------
# finite differences and quadrature


def fd_derivative(values, times) -> np.ndarray:
    """Fourth-order finite-difference time derivative on a uniform grid.

    Central five-point stencils in the interior and one-sided five-point
    stencils at the two ends on each side. ``values`` may carry trailing
    axes (e.g. matrices); differentiation is along axis 0.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values)
    n = t.size
    if n < 5:
        raise ValidationError("need at least five samples for a fourth-order derivative")
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ValidationError("fd_derivative requires a uniform grid")
    h = h[0]
    d = np.empty_like(y, dtype=np.result_type(y, float))
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = np.tensordot(fwd, y[0:5], axes=1)
    d[-1] = -np.tensordot(fwd, y[-1:-6:-1], axes=1)
    f1 = np.array([-3, -10, 18, -6, 1]) / (12 * h)
    d[1] = np.tensordot(f1, y[0:5], axes=1)
    d[-2] = -np.tensordot(f1, y[-1:-6:-1], axes=1)
    return d


def central_derivative(fn: Callable[[float], np.ndarray], t: float, h: float = 1e-3) -> np.ndarray:
    """Fourth-order central difference of a callable at a single point."""
    return (fn(t - 2 * h) - 8 * fn(t - h) + 8 * fn(t + h) - fn(t + 2 * h)) / (12 * h)


# ---------------------------------------------------------------------------
# ODE integration


def _rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + h / 2 * k1)
    k3 = rhs(t + h / 2, y + h / 2 * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def ode_integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    state0,
    t_grid,
    method: str = "RK45",
    tol: float = 1e-10,
    substeps: int = 1,
    post_step: Callable[[float, np.ndarray], np.ndarray] | None = None,
    min_step: float = 1e-14,
) -> TimeSeries:
    """Integrate ``dy/dt = rhs(t, y)`` and sample the solution on ``t_grid``.

    Parameters
    ----------
    rhs : callable
        Right-hand side; receives and returns arrays shaped like ``state0``.
    state0 : array_like
        Initial state (scalar, vector or matrix, real or complex).
    t_grid : array_like
        Strictly increasing output times; ``t_grid[0]`` is the initial time.
    method : {"RK4", "RK45"}
        Classical fixed-step RK4 (``substeps`` steps per grid interval) or the
        adaptive Dormand-Prince pair with ``rtol = atol = tol``.
    post_step : callable, optional
        Applied to the state after each grid interval, e.g. to restore a
        symmetry that the exact flow preserves.
    min_step : float
        Step size (relative to the interval) below which RK45 is declared stiff.

    Returns
    -------
    TimeSeries
        States at every grid time. ``meta["nfev"]`` counts rhs calls.

    Raises
    ------
    StiffnessError
        If the adaptive step collapses; carries the time of failure.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
        raise ValidationError("t_grid must be strictly increasing")
    y0 = np.array(state0, dtype=np.result_type(np.asarray(state0), float))
    shape = y0.shape
    out = np.empty((t.size,) + shape, dtype=complex if np.iscomplexobj(y0) else float)
    out[0] = y0
    nfev = 0
    method = method.upper()

    if method == "RK4":
        y = y0
        for k in range(t.size - 1):
            h = (t[k + 1] - t[k]) / substeps
            for j in range(substeps):
                y = _rk4_step(rhs, t[k] + j * h, y, h)
                nfev += 4
            if post_step is not None:
                y = post_step(t[k + 1], y)
            out[k + 1] = y
        return TimeSeries(t, out, {"nfev": nfev, "method": "RK4"})

    if method != "RK45":
        raise ValidationError(f"unknown method {method!r}; use 'RK4' or 'RK45'")
    if tol <= 0:
        raise ValidationError("tol must be positive for RK45")

    def flat_rhs(s, v):
        return np.asarray(rhs(s, v.reshape(shape)), dtype=v.dtype).ravel()

    y = y0.ravel().astype(out.dtype)
    first = None
    for k in range(t.size - 1):
        sol = solve_ivp(
            flat_rhs,
            (t[k], t[k + 1]),
            y,
            method="RK45",
            rtol=tol,
            atol=tol,
            first_step=first,
        )
        nfev += sol.nfev
        if sol.status != 0:
            raise StiffnessError(f"step size underflow near t={sol.t[-1]:.6g}: {sol.message}", float(sol.t[-1]))
        steps = np.diff(sol.t)
        if steps.size > 1 and steps[:-1].min() < min_step * max(1.0, abs(t[k + 1])):
            raise StiffnessError(f"step size underflow near t={sol.t[-1]:.6g}", float(sol.t[-1]))
        y = sol.y[:, -1]
        # reuse the last accepted step size, capped by the next interval
        if k + 2 < t.size and steps.size:
            first = float(min(steps[-1] if steps.size == 1 else steps[:-1].max(), t[k + 2] - t[k + 1]))
        if post_step is not None:
            y = np.asarray(post_step(t[k + 1], y.reshape(shape)), dtype=out.dtype).ravel()
        out[k + 1] = y.reshape(shape)
    return TimeSeries(t, out, {"nfev": nfev, "method": "RK45", "tol": tol})
