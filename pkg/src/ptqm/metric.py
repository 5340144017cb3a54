"""Time-independent Dyson maps and metric operators.

Three routes are provided: the eigenvector construction, a direct linear
solve of the quasi-Hermiticity relation ``rho H = H^dagger rho`` and the
order-by-order BCH perturbation theory in exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy
from scipy.optimize import minimize

from .errors import ObstructionError, ValidationError
from .models import LieAlgebraSpec
from .numcore import as_matrix, dagger, eigh, expm, hermitian_defect, norm2, sqrtm_psd
from .symmetry import biorthonormalize


@dataclass
class MetricSolution:
    """A metric ``rho``, a Dyson map ``eta`` with ``rho = eta^dagger eta`` and ``h = eta H eta^{-1}``."""

    rho: np.ndarray
    eta: np.ndarray
    h: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _diagnostics(H, rho, eta, h) -> dict:
    w = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))
    return {
        "det_rho": complex(np.linalg.det(rho)),
        "min_eigenvalue": float(w.min()),
        "qh_residual": norm2(rho @ H - dagger(H) @ rho),
        "factor_residual": norm2(dagger(eta) @ eta - rho),
        "h_hermitian_defect": hermitian_defect(h),
    }


def eta_from_eigenvectors(H) -> MetricSolution:
    """Dyson map whose inverse has the (balanced) right eigenvectors as columns.

    Then ``h = eta H eta^{-1}`` is the diagonal matrix of eigenvalues and
    ``rho = sum_n |phi_n><phi_n|``, which coincides with ``P C`` for any
    admissible parity ``P``. A complex spectrum yields a non-Hermitian ``h``;
    this is recorded in ``diagnostics["real_spectrum"]``.

    Raises
    ------
    ExceptionalPointError
        If ``H`` is not diagonalizable.
    """
    H = as_matrix(H, "H")
    sys = biorthonormalize(H)
    eta = dagger(sys.phi)
    rho = sys.phi @ dagger(sys.phi)
    h = eta @ H @ sys.psi
    diag = _diagnostics(H, rho, eta, h)
    diag["real_spectrum"] = bool(np.abs(sys.eigenvalues.imag).max() <= 1e-10 * max(1.0, norm2(H)))
    return MetricSolution(rho, eta, h, diag)


def hermitian_basis(n: int):
    """Real-linear basis of ``n x n`` Hermitian matrices (``n^2`` elements)."""
    basis = []
    for i in range(n):
        E = np.zeros((n, n), complex)
        E[i, i] = 1
        basis.append(E)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), complex)
            E[i, j] = E[j, i] = 1 / np.sqrt(2)
            basis.append(E)
            F = np.zeros((n, n), complex)
            F[i, j], F[j, i] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            basis.append(F)
    return basis


def qh_nullspace(H, rtol: float = 1e-10):
    """Hermitian solutions of ``rho H - H^dagger rho = 0`` as a list of matrices."""
    H = as_matrix(H, "H")
    n = H.shape[0]
    basis = hermitian_basis(n)
    cols = []
    for B in basis:
        R = B @ H - dagger(H) @ B
        cols.append(np.concatenate([R.real.ravel(), R.imag.ravel()]))
    A = np.array(cols).T
    _, s, Vt = np.linalg.svd(A)
    smax = s[0] if s.size and s[0] > 0 else 1.0
    rank = int(np.sum(s > rtol * smax))
    null = Vt[rank:]
    return [sum(c * B for c, B in zip(v, basis)) for v in null]


def _conditioning(rho):
    w = np.linalg.eigvalsh(rho)
    return w[0] / w[-1] if w[-1] > 0 else -np.inf


def solve_qh_linear(
    H,
    constraint: str = "unit_det",
    n_samples: int = 256,
    seed: int = 0,
    pd_floor: float = 1e-12,
) -> dict:
    """Solve the quasi-Hermiticity relation for positive-definite metrics.

    The Hermitian nullspace of ``rho -> rho H - H^dagger rho`` is computed by
    SVD. Among its elements the best-conditioned positive-definite one
    (largest ``lambda_min / lambda_max``) is located by a deterministic
    direction scan followed by Nelder-Mead refinement, then normalized.

    Parameters
    ----------
    H : array_like
    constraint : {"unit_det", "fix_trace"}
        Normalization: ``det rho = 1`` or ``tr rho = dim``.

    Returns
    -------
    dict
        ``{"candidates": [MetricSolution, ...], "nullspace_dim": int}``.
        ``candidates`` is empty when no positive-definite metric exists.
    """
    if constraint not in ("unit_det", "fix_trace"):
        raise ValidationError(f"unknown constraint {constraint!r}")
    H = as_matrix(H, "H")
    n = H.shape[0]
    null = qh_nullspace(H)
    d = len(null)
    if d == 0:
        return {"candidates": [], "nullspace_dim": 0}

    def rho_of(c):
        M = sum(ci * B for ci, B in zip(c, null))
        return 0.5 * (M + dagger(M))

    rng = np.random.default_rng(seed)
    dirs = np.vstack([np.eye(d), -np.eye(d), rng.standard_normal((n_samples, d))])
    scores = [_conditioning(rho_of(c)) for c in dirs]
    best = dirs[int(np.argmax(scores))]
    if d > 1:
        res = minimize(lambda c: -_conditioning(rho_of(c)), best, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        if -res.fun >= max(scores):
            best = res.x
    rho = rho_of(best)
    if _conditioning(rho) <= 0 or np.linalg.eigvalsh(rho)[0] <= pd_floor * norm2(rho):
        return {"candidates": [], "nullspace_dim": d}
    if constraint == "unit_det":
        rho = rho / np.linalg.det(rho).real ** (1.0 / n)
    else:
        rho = rho * n / np.trace(rho).real
    eta = sqrtm_psd(rho)
    h = eta @ H @ np.linalg.inv(eta)
    return {"candidates": [MetricSolution(rho, eta, h, _diagnostics(H, rho, eta, h))], "nullspace_dim": d}


def rho_inner(rho, u, v) -> complex:
    """``<u|v>_rho = <u| rho v>``."""
    return complex(np.vdot(u, rho @ v))


def hk_static_dyson(a: float, b: float, lam: float, K):
    """Closed-form metric data for ``a K1 + b K2 + i lam K3`` with ``|lam| < |b - a|``.

    Returns ``(eta, rho, h)`` with ``theta = arctanh(lam / (b - a))``,
    ``eta = exp(theta K4)``, ``rho = eta^2 = exp(2 theta K4)`` and
    ``h = (a+b)/2 (K1+K2) + sign(a-b) sqrt((a-b)^2 - lam^2)/2 (K1-K2)``.
    """
    if abs(lam) >= abs(b - a):
        raise ValidationError("static Dyson map requires |lam| < |b - a|")
    theta = np.arctanh(lam / (b - a))
    eta = expm(theta * K[3])
    rho = expm(2 * theta * K[3])
    r = np.sign(a - b) * np.sqrt((a - b) ** 2 - lam**2)
    h = 0.5 * (a + b) * (K[0] + K[1]) + 0.5 * r * (K[0] - K[1])
    return eta, rho, h


# ---------------------------------------------------------------------------
# BCH perturbation theory


@dataclass
class PerturbativeMetric:
    """Coefficients of ``q = sum_n eps^n q_n`` with ``rho = exp(q)``.

    ``coefficients[n]`` is a sympy column vector over the algebra generators.
    """

    algebra: LieAlgebraSpec
    coefficients: dict
    eps: sympy.Symbol
    terminated_at: int | None = None

    def q_series(self) -> list:
        """One sympy polynomial in ``eps`` per generator."""
        out = []
        for k in range(self.algebra.dim):
            out.append(sympy.expand(sum(self.eps**n * v[k] for n, v in self.coefficients.items())))
        return out

    def as_dict(self) -> dict:
        names = self.algebra.generator_names
        return {n: {names[k]: v[k] for k in range(len(names)) if v[k] != 0} for n, v in self.coefficients.items()}


def _ad_matrix(f, u):
    """Matrix of ``v -> [u, v]`` in coefficient space (``i`` included)."""
    n = len(f)
    return sympy.Matrix(n, n, lambda k, j: sympy.I * sum(u[i] * f[i][j][k] for i in range(n)))


def _bracket(f, u, v):
    n = len(f)
    return sympy.Matrix([sympy.I * sum(u[i] * v[j] * f[i][j][k] for i in range(n) for j in range(n)) for k in range(n)])


def bch_perturbative(algebra: LieAlgebraSpec, h0, h1, max_order: int = 7) -> PerturbativeMetric:
    """Solve ``exp(ad_q)(h0 + i eps h1) = h0 - i eps h1`` order by order.

    At order ``n`` the only unknown is ``q_n`` and the equation reads
    ``[h0, q_n] = C_n`` where ``C_n`` collects all contributions of the lower
    orders; for ``n = 1`` this is ``[h0, q_1] = 2 i h1``. The kernel of
    ``ad_h0`` is fixed by taking the minimal-norm solution orthogonal to it.

    Parameters
    ----------
    algebra : LieAlgebraSpec
        Algebra with (rational-convertible) structure constants.
    h0, h1 : sequence
        Coefficients on the generators; numbers or sympy expressions.
    max_order : int
        Highest order solved.

    Raises
    ------
    ObstructionError
        If some ``C_n`` has a component outside the range of ``ad_h0``.
    """
    n = algebra.dim
    f = [[[sympy.nsimplify(algebra.f[i, j, k]) for k in range(n)] for j in range(n)] for i in range(n)]
    h0 = sympy.Matrix([sympy.sympify(c) for c in h0])
    h1 = sympy.Matrix([sympy.sympify(c) for c in h1])
    eps = sympy.Symbol("epsilon")
    A = _ad_matrix(f, h0)
    AH = A.H
    AAH = sympy.simplify(A * AH)
    left_null = AH.nullspace()
    zero = sympy.zeros(n, 1)

    q = {}
    H_series = {0: h0, 1: sympy.I * h1}
    target = {0: h0, 1: -sympy.I * h1}
    terminated = None
    for order in range(1, max_order + 1):
        # exp(ad_q) H up to this order with q_order = 0
        total = {k: v for k, v in H_series.items() if k <= order}
        term = dict(total)
        for m in range(1, order + 1):
            new = {}
            for qn, qv in q.items():
                for k, v in term.items():
                    o = qn + k
                    if o <= order:
                        new[o] = new.get(o, zero) + _bracket(f, qv, v) / m
            term = new
            for k, v in term.items():
                total[k] = total.get(k, zero) + v
            if not term:
                break
        # [q_n, h0] + total[n] - target[n] = 0  =>  [h0, q_n] = total[n] - target[n]
        C = sympy.simplify(total.get(order, zero) - target.get(order, zero))
        for w in left_null:
            proj = sympy.simplify((w.H * C)[0])
            if proj != 0:
                k = max(range(n), key=lambda i: abs(complex(w[i].subs({s: 1.7 for s in w.free_symbols}))))
                raise ObstructionError(
                    f"order {order}: source has a component outside the range of ad_h0 along {algebra.generator_names[k]}",
                    algebra.generator_names[k],
                )
        if C == zero:
            qn = zero
        else:
            y, params = AAH.gauss_jordan_solve(C)
            y = y.subs({p: 0 for p in params})
            qn = sympy.simplify(AH * y)
        q[order] = qn
        if qn == zero and order == 1 and h1 == zero:
            terminated = 1
    return PerturbativeMetric(algebra, q, eps, terminated)
