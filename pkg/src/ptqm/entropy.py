"""Density matrices with a metric, partial traces and von Neumann entropies.

For a quasi-Hermitian system the density matrix is
``varrho = sum_i p_i |psi_i><psi_i| rho``; it is similar to the Hermitian
one, so both share eigenvalues and entropies. The last part evaluates the
closed-form reduced entropy of a single boson coupled to a bath of ``N``
bosons in the three PT regimes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import propagator
from .errors import DomainError, HermiticityError, ValidationError
from .numcore import TimeSeries, as_matrix, hermitian_defect, resolve_hbar

TRACE_TOL = 1e-10


@dataclass
class DensityMatrix:
    """``matrix = sum p |psi><psi| metric`` together with its metric."""

    matrix: np.ndarray
    metric: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def eigenvalues(self, imag_tol: float = 1e-10) -> np.ndarray:
        """Real eigenvalues in ascending order.

        Raises
        ------
        ValidationError
            If an eigenvalue has an imaginary part above ``imag_tol``.
        """
        if hermitian_defect(self.matrix) <= 1e-14 * max(1.0, np.abs(self.matrix).max()):
            return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        w = np.linalg.eigvals(self.matrix)
        if np.abs(w.imag).max() > imag_tol:
            raise ValidationError(f"density matrix has complex eigenvalues (max |Im| = {np.abs(w.imag).max():.3g})")
        return np.sort(w.real)

    def similar(self, eta) -> "DensityMatrix":
        """Hermitian counterpart ``eta varrho eta^{-1}`` with identity metric."""
        eta = as_matrix(eta, "eta")
        return DensityMatrix(eta @ self.matrix @ np.linalg.inv(eta), np.eye(self.dim, dtype=complex))


def density_matrix(states, probs, metric=None, normalize: bool = True, tol: float = TRACE_TOL) -> DensityMatrix:
    """Mixture ``sum_i p_i |psi_i><psi_i| rho``.

    Parameters
    ----------
    states : sequence of vectors
    probs : sequence of float
        Nonnegative weights summing to one.
    metric : array_like, optional
        Positive metric ``rho``; the identity when omitted.
    normalize : bool
        Rescale each state to unit ``rho``-norm first.

    Raises
    ------
    ValidationError
        On invalid probabilities, mismatched dimensions or a trace that is
        not one.
    """
    probs = np.asarray(probs, dtype=float)
    states = [np.asarray(s, dtype=complex).ravel() for s in states]
    if len(states) != probs.size or probs.size == 0:
        raise ValidationError("need one probability per state")
    if np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1) > tol:
        raise ValidationError(f"probabilities must lie in [0, 1] and sum to 1, got {probs.tolist()}")
    n = states[0].size
    if any(s.size != n for s in states):
        raise ValidationError("states must share one dimension")
    rho = np.eye(n, dtype=complex) if metric is None else as_matrix(metric, "metric")
    if rho.shape != (n, n):
        raise ValidationError("metric dimension does not match the states")
    M = np.zeros((n, n), dtype=complex)
    for p, s in zip(probs, states):
        if normalize:
            s = s / np.sqrt(np.vdot(s, rho @ s).real)
        M += p * np.outer(s, s.conj()) @ rho
    out = DensityMatrix(M, rho)
    tr = out.trace()
    if abs(tr - 1) > tol:
        raise ValidationError(f"density matrix trace is {tr:.12g}, not 1")
    return out


def partial_trace(state, dims: tuple[int, int], keep: str = "A") -> DensityMatrix:
    """Reduced density matrix of a bipartite ``d_A x d_B`` system.

    ``state`` is a :class:`DensityMatrix` or a plain matrix. The result
    carries the identity metric.
    """
    M = state.matrix if isinstance(state, DensityMatrix) else as_matrix(state, "state")
    dA, dB = dims
    if M.shape != (dA * dB, dA * dB):
        raise ValidationError(f"matrix of shape {M.shape} does not factor as {dA} x {dB}")
    T = M.reshape(dA, dB, dA, dB)
    if keep == "A":
        R = np.einsum("ijkj->ik", T)
    elif keep == "B":
        R = np.einsum("ijil->jl", T)
    else:
        raise ValidationError("keep must be 'A' or 'B'")
    return DensityMatrix(R, np.eye(R.shape[0], dtype=complex))


def entropy_from_eigenvalues(lam, floor: float = -1e-10) -> float:
    """``-sum l ln l`` with ``0 ln 0 = 0``; values in ``[floor, 0)`` are clamped."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < floor):
        raise ValidationError(f"negative eigenvalue {lam.min():.3g} below the clamp floor")
    lam = np.clip(lam, 0.0, None)
    nz = lam[lam > 0]
    return float(-np.sum(nz * np.log(nz)))


def von_neumann(state, tol: float = TRACE_TOL) -> float:
    """von Neumann entropy from the eigenvalues of a density matrix.

    Raises
    ------
    ValidationError
        If the trace differs from one by more than ``tol``.
    """
    dm = state if isinstance(state, DensityMatrix) else DensityMatrix(as_matrix(state, "state"), None)
    tr = dm.trace()
    if abs(tr - 1) > tol:
        raise ValidationError(f"trace {tr:.12g} differs from 1")
    return entropy_from_eigenvalues(dm.eigenvalues())


def heisenberg_evolve(rho0, h_fn, t_grid, n_sub: int = 20, hbar: float | None = None, herm_tol: float = 1e-12) -> TimeSeries:
    """Solve ``i hbar d varrho/dt = [h, varrho]`` by unitary conjugation.

    Between consecutive grid times the propagator is a product of ``n_sub``
    midpoint exponentials, so the spectrum of ``varrho`` is preserved to
    rounding.

    Raises
    ------
    HermiticityError
        If ``h`` is not Hermitian at a sampled time.
    """
    hb = resolve_hbar(hbar)
    R = rho0.matrix if isinstance(rho0, DensityMatrix) else as_matrix(rho0, "rho0")
    t = np.asarray(t_grid, dtype=float)

    def h_checked(s):
        h = as_matrix(h_fn(s), "h")
        d = hermitian_defect(h)
        if d > herm_tol * max(1.0, np.abs(h).max()):
            raise HermiticityError(f"generator is not Hermitian at t={s:.6g}", d)
        return h

    out = [R.copy()]
    for k in range(1, len(t)):
        U = propagator(h_checked, t[k - 1], t[k], n_steps=n_sub, hbar=hb)
        R = U @ R @ U.conj().T
        out.append(R)
    return TimeSeries(t, np.array(out), {"generator": "hermitian"})


# ---------------------------------------------------------------------------
# boson coupled to a bath


def bath_regime(g: float, kappa: float, ep_tol: float = 1e-12) -> str:
    """``"pt"`` for ``|g| > |kappa|``, ``"ep"`` at equality, ``"broken"`` otherwise."""
    d = abs(g) - abs(kappa)
    if abs(d) <= ep_tol * max(1.0, abs(g)):
        return "ep"
    return "pt" if d > 0 else "broken"


def _continuous_half_arctan(A: float, theta):
    """``(1/2) arctan(A tan theta)`` continued across the poles of ``tan``.

    Each passage of ``theta`` through an odd multiple of ``pi/2`` adds
    ``pi/2`` instead of jumping back by ``pi/2``.
    """
    k = np.round(theta / np.pi)
    r = theta - k * np.pi
    return 0.5 * (k * np.pi + np.arctan(A * np.tan(r)))


def bath_mu(g: float, kappa: float, N: int, c1: float, t) -> np.ndarray:
    """Angle ``mu(t)`` in the three regimes (continuous in ``t``)."""
    t = np.asarray(t, dtype=float)
    reg = bath_regime(g, kappa)
    rN = np.sqrt(N)
    if reg == "pt":
        s = np.sqrt(g**2 - kappa**2)
        return _continuous_half_arctan(np.sqrt(c1**2 + s**2) / s, 2 * rN * s * t)
    if reg == "ep":
        return 0.5 * np.arctan(2 * rN * abs(c1) * t)
    q = np.sqrt(kappa**2 - g**2)
    if c1**2 < q**2:
        raise DomainError(f"broken regime needs c1^2 >= kappa^2 - g^2 (c1={c1}, g={g}, kappa={kappa})")
    return 0.5 * np.arctan(np.sqrt(c1**2 - q**2) * np.tanh(2 * rN * q * t) / q)


def bath_lambdas(gamma: float, mu) -> tuple[np.ndarray, np.ndarray]:
    """``lambda_+- = (sin gamma sin mu +- cos gamma cos mu)^2``."""
    mu = np.asarray(mu, dtype=float)
    a, b = np.sin(gamma) * np.sin(mu), np.cos(gamma) * np.cos(mu)
    return (a + b) ** 2, (a - b) ** 2


@dataclass
class EntropyCurve:
    """Reduced entropy ``S(t)`` of the single boson."""

    S: TimeSeries
    regime: str
    params: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.S.times, self.S.values]), delimiter=",",
                   header="t,S", comments="", fmt="%.12e")


def boson_bath_entropy(g: float, kappa: float, N: int, c1: float, gamma: float, t_grid, norm_tol: float = TRACE_TOL) -> EntropyCurve:
    """Entropy ``-lambda_- ln lambda_- - lambda_+ ln lambda_+`` along ``t_grid``.

    ``gamma`` is the initial-state angle; ``lambda_+ + lambda_- = 1 + cos(2 gamma) cos(2 mu)``,
    so only ``gamma = pi/4`` (or times with ``cos 2 mu = 0``) give a
    normalized pair. Deviations up to ``norm_tol`` are renormalized.

    Raises
    ------
    ValidationError
        If ``N < 1`` or ``g = kappa = 0``.
    DomainError
        If the eigenvalue pair is not normalized within ``norm_tol`` or
        leaves ``[0, 1]``.
    """
    if N < 1:
        raise ValidationError("bath size N must be >= 1")
    if g == 0 and kappa == 0:
        raise ValidationError("g and kappa cannot both vanish")
    t = np.asarray(t_grid, dtype=float)
    mu = bath_mu(g, kappa, N, c1, t)
    lp, lm = bath_lambdas(gamma, mu)
    total = lp + lm
    dev = float(np.abs(total - 1).max())
    params = {"g": g, "kappa": kappa, "N": N, "c1": c1, "gamma": gamma}
    if dev > norm_tol:
        raise DomainError(f"lambda_+ + lambda_- deviates from 1 by {dev:.3g} for parameters {params}")
    lp, lm = lp / total, lm / total
    if min(lp.min(), lm.min()) < -norm_tol or max(lp.max(), lm.max()) > 1 + norm_tol:
        raise DomainError(f"eigenvalues leave [0, 1] for parameters {params}")
    S = np.array([entropy_from_eigenvalues([a, b]) for a, b in zip(lm, lp)])
    meta = {"mu": mu, "lambda_plus": lp, "lambda_minus": lm, "norm_deviation": dev}
    return EntropyCurve(TimeSeries(t, S, meta), bath_regime(g, kappa), params)


def bath_period(g: float, kappa: float, N: int) -> float:
    """Period ``pi / (2 sqrt(N) sqrt(g^2 - kappa^2))`` of the PT-regime curve."""
    return np.pi / (2 * np.sqrt(N) * np.sqrt(g**2 - kappa**2))
