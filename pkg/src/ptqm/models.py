"""Builders for the concrete Hamiltonians and operator representations.

The two-mode oscillator generators are assembled from truncated ladder
operators. Every bilinear ``K_i`` conserves the total excitation number, so
their commutators are exact on the *interior* subspace
``n + m <= cutoff - 2``; only states touching the truncation edge are
affected.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import sympy
from scipy.interpolate import CubicSpline

from .errors import ConvergenceError, ValidationError
from .numcore import PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, commutator, norm2, resolve_hbar


class ResolutionWarning(UserWarning):
    """Grid eigenvalues drift under refinement by more than the tolerance."""


# ---------------------------------------------------------------------------
# two-level model


def build_two_level(omega: float, lam: float, kappa: float) -> np.ndarray:
    """Return ``H = -(omega*I + lam*sigma_z + i*kappa*sigma_x)/2``."""
    return -0.5 * (omega * PAULI_I + lam * PAULI_Z + 1j * kappa * PAULI_X)


def two_level_eigenvalues(omega: float, lam: float, kappa: float) -> np.ndarray:
    """Closed-form eigenvalues ``-omega/2 -+ sqrt(lam^2 - kappa^2)/2``."""
    r = np.sqrt(complex(lam * lam - kappa * kappa))
    return np.array([-0.5 * omega - 0.5 * r, -0.5 * omega + 0.5 * r])


# ---------------------------------------------------------------------------
# Fock representations


def ladder(cutoff: int) -> np.ndarray:
    """Truncated annihilation operator on ``cutoff`` number states."""
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), 1).astype(complex)


@dataclass(frozen=True)
class FockRep:
    """Truncated Fock representation for one or two bosonic modes.

    Attributes
    ----------
    cutoff : int
        Number states per mode.
    modes : int
        1 or 2.
    ops : dict
        Matrices ``a, ad, x, p`` (and ``b, bd, y, py`` for two modes).
    hbar : float
        Value used for ``[x, p] = i hbar``.
    """

    cutoff: int
    modes: int
    ops: dict
    hbar: float = 1.0

    @property
    def dim(self) -> int:
        return self.cutoff ** self.modes

    @property
    def occupations(self) -> np.ndarray:
        """Array of shape ``(dim, modes)`` with the occupation numbers."""
        n = np.arange(self.cutoff)
        if self.modes == 1:
            return n[:, None]
        return np.array(list(product(n, n)))

    def interior_indices(self, margin: int = 2) -> np.ndarray:
        """Basis indices whose total excitation is ``<= cutoff - margin``."""
        return np.flatnonzero(self.occupations.sum(axis=1) <= self.cutoff - margin)

    @property
    def interior_dim(self) -> int:
        return self.interior_indices().size

    def restrict(self, M, margin: int = 2) -> np.ndarray:
        idx = self.interior_indices(margin)
        return np.asarray(M)[np.ix_(idx, idx)]

    def interior_norm(self, M, margin: int = 2) -> float:
        return norm2(self.restrict(M, margin))


def build_fock_single(cutoff: int, hbar: float | None = None) -> FockRep:
    """Single-mode rep with ``x = sqrt(hbar/2)(a + a^dagger)``, ``p = i sqrt(hbar/2)(a^dagger - a)``."""
    if cutoff < 8:
        raise ValidationError(f"fock cutoff must be >= 8, got {cutoff}")
    hb = resolve_hbar(hbar)
    a = ladder(cutoff)
    ad = a.conj().T
    s = np.sqrt(hb / 2)
    return FockRep(cutoff, 1, {"a": a, "ad": ad, "x": s * (a + ad), "p": 1j * s * (ad - a)}, hb)


def build_fock_two_mode(cutoff: int, hbar: float | None = None):
    """Two-mode Fock rep and the generators ``K1..K4``.

    ``K1 = (p_x^2 + x^2)/2``, ``K2 = (p_y^2 + y^2)/2``,
    ``K3 = (xy + p_x p_y)/2``, ``K4 = (x p_y - y p_x)/2`` in units ``hbar = 1``,
    written through ladder operators so that they are exact on interior states.

    Returns
    -------
    rep : FockRep
    K : list of numpy.ndarray
        ``[K1, K2, K3, K4]``.
    """
    if cutoff < 8:
        raise ValidationError(f"fock cutoff must be >= 8, got {cutoff}")
    hb = resolve_hbar(hbar)
    a1 = ladder(cutoff)
    one = np.eye(cutoff)
    a = np.kron(a1, one)
    b = np.kron(one, a1)
    ad, bd = a.conj().T, b.conj().T
    s = np.sqrt(hb / 2)
    ops = {
        "a": a,
        "ad": ad,
        "b": b,
        "bd": bd,
        "x": s * (a + ad),
        "p": 1j * s * (ad - a),
        "y": s * (b + bd),
        "py": 1j * s * (bd - b),
    }
    rep = FockRep(cutoff, 2, ops, hb)
    eye = np.eye(cutoff * cutoff)
    K1 = ad @ a + 0.5 * eye
    K2 = bd @ b + 0.5 * eye
    K3 = 0.5 * (a @ bd + ad @ b)
    K4 = 0.5j * (a @ bd - ad @ b)
    return rep, [K1, K2, K3, K4]


def mode_parity(rep: FockRep, mode: int) -> np.ndarray:
    """Parity ``(-1)^{n}`` of one mode as a diagonal matrix."""
    n = rep.occupations[:, mode]
    return np.diag((-1.0) ** n).astype(complex)


def _coefficient(fn, t):
    return float(fn(t)) if callable(fn) else float(fn)


def build_hk(a_fn, b_fn, lam_fn, t: float, K) -> np.ndarray:
    """Coupled-oscillator Hamiltonian ``a K1 + b K2 + i lam K3`` at time ``t``.

    ``a_fn``, ``b_fn``, ``lam_fn`` may be numbers or callables of ``t``;
    ``K`` is the generator list from :func:`build_fock_two_mode`.
    """
    a, b, lam = (_coefficient(f, t) for f in (a_fn, b_fn, lam_fn))
    return a * K[0] + b * K[1] + 1j * lam * K[2]


def hk_eigenvalue(a: float, b: float, lam: float, n: int, m: int) -> complex:
    """Closed-form eigenvalue of the static coupled-oscillator Hamiltonian.

    For ``a = b`` this is ``a(1 + n + m) + i(lam/2)(n - m)``; the general case
    ``(a+b)/2 (1+n+m) + (n-m)/2 sqrt((a-b)^2 - lam^2)`` reduces to it.
    """
    r = np.sqrt(complex((a - b) ** 2 - lam * lam))
    return 0.5 * (a + b) * (1 + n + m) + 0.5 * (n - m) * r


def build_swanson(M_fn, Omega_fn, alpha_fn, t: float, rep: FockRep) -> np.ndarray:
    """Swanson Hamiltonian ``p^2/2M + (M/2) Omega^2 x^2 + i alpha {x, p}``.

    ``alpha`` may be complex (``alpha_R + i alpha_I``).
    """
    M = _coefficient(M_fn, t)
    if M <= 0:
        raise ValidationError(f"mass must be positive, got {M}")
    Om = _coefficient(Omega_fn, t)
    al = complex(alpha_fn(t)) if callable(alpha_fn) else complex(alpha_fn)
    x, p = rep.ops["x"], rep.ops["p"]
    return p @ p / (2 * M) + 0.5 * M * Om**2 * (x @ x) + 1j * al * (x @ p + p @ x)


# ---------------------------------------------------------------------------
# Bender-Boettcher grid eigensolver


def bb_potential(x: np.ndarray, eps: float) -> np.ndarray:
    """``x^2 (i x)^eps`` with the branch ``|x|^eps exp(i pi eps sgn(x) / 2)``."""
    return x**2 * np.abs(x) ** eps * np.exp(0.5j * np.pi * eps * np.sign(x))


def _bb_matrix(eps: float, x_max: float, n_points: int):
    x = np.linspace(-x_max, x_max, n_points + 2)[1:-1]
    h = x[1] - x[0]
    main = 1.0 / h**2 + bb_potential(x, eps)
    off = np.full(n_points - 1, -0.5 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csc", dtype=complex)


def _bb_levels(eps, x_max, n_points, k):
    H = _bb_matrix(eps, x_max, n_points)
    nev = min(k + 6, n_points - 2)
    # deterministic start vector keeps repeated runs bit-identical
    v0 = np.random.default_rng(0).standard_normal(H.shape[0]).astype(complex)
    try:
        w = spla.eigs(H, k=nev, sigma=0.0, which="LM", return_eigenvectors=False, tol=1e-13, v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"ARPACK failed for eps={eps}: {exc}") from exc
    w = w[np.argsort(w.real)]
    return w[:k]


def bb_spectrum(
    eps: float,
    x_max: float = 10.0,
    n_points: int = 4000,
    k_levels: int = 5,
    drift_tol: float = 1e-3,
    check_refinement: bool = True,
) -> np.ndarray:
    """Lowest eigenvalues of ``H = p^2/2 + x^2 (i x)^eps`` on a real-axis grid.

    Second-order central differences with Dirichlet walls at ``+-x_max``.

    Parameters
    ----------
    eps : float
        Deformation parameter in ``[0, 1.5]``.
    x_max, n_points : float, int
        Box half-width (``>= 10``) and interior grid points (``>= 1000``).
    k_levels : int
        Number of eigenvalues returned, sorted by real part.
    check_refinement : bool
        Also solve on a grid with half the points and emit a
        :class:`ResolutionWarning` when the levels drift by more than
        ``drift_tol``.

    Returns
    -------
    numpy.ndarray
        Complex eigenvalues sorted by real part.
    """
    if not 0.0 <= eps <= 1.5:
        raise ValidationError(f"eps must lie in [0, 1.5], got {eps}")
    if x_max < 10 or n_points < 1000:
        raise ValidationError("grid requires x_max >= 10 and n_points >= 1000")
    w = _bb_levels(eps, x_max, n_points, k_levels)
    if check_refinement:
        coarse = _bb_levels(eps, x_max, n_points // 2, k_levels)
        drift = np.abs(coarse - w).max()
        if drift > drift_tol:
            warnings.warn(
                f"bb_spectrum eps={eps}: levels drift by {drift:.2e} under refinement", ResolutionWarning, stacklevel=2
            )
    return w


# ---------------------------------------------------------------------------
# Lie algebras


@dataclass
class LieAlgebraSpec:
    """Generators with structure constants ``[K_i, K_j] = i sum_k f[i,j,k] K_k``.

    Attributes
    ----------
    name : str
    generator_names : list of str
    f : numpy.ndarray
        Real array of shape ``(n, n, n)``.
    matrices : list of numpy.ndarray, optional
        A matrix representation, one per generator.
    interior : callable, optional
        Maps a matrix to its restriction on the subspace where the
        representation is faithful.
    metadata : dict
    """

    name: str
    generator_names: list
    f: np.ndarray
    matrices: list | None = None
    interior: Callable | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        n = len(self.generator_names)
        if self.f.shape != (n, n, n):
            raise ValidationError(f"structure constants must have shape {(n, n, n)}")
        if np.abs(self.f + self.f.transpose(1, 0, 2)).max() > 0:
            raise ValidationError(f"{self.name}: structure constants are not antisymmetric")

    @property
    def dim(self) -> int:
        return len(self.generator_names)

    def jacobi_residual(self) -> float:
        """Largest entry of the contracted Jacobi identity."""
        f = self.f
        # sum over cyclic (i, j, k) of f[j,k,m] f[i,m,l]
        t1 = np.einsum("jkm,iml->ijkl", f, f)
        t2 = np.einsum("kim,jml->ijkl", f, f)
        t3 = np.einsum("ijm,kml->ijkl", f, f)
        return float(np.abs(t1 + t2 + t3).max())

    def bracket(self, u, v) -> np.ndarray:
        """Coefficients of ``[u, v]`` for coefficient vectors ``u``, ``v``."""
        return 1j * np.einsum("i,j,ijk->k", np.asarray(u), np.asarray(v), self.f)

    def representation_residual(self) -> float:
        """Max deviation of represented commutators from the structure constants."""
        if self.matrices is None:
            return 0.0
        restrict = self.interior or (lambda M: M)
        worst = 0.0
        for i, j in product(range(self.dim), repeat=2):
            lhs = commutator(self.matrices[i], self.matrices[j])
            rhs = 1j * sum(self.f[i, j, k] * self.matrices[k] for k in range(self.dim))
            worst = max(worst, norm2(restrict(lhs - rhs)))
        return worst


def k_algebra_constants() -> np.ndarray:
    f = np.zeros((4, 4, 4))

    def put(i, j, k, v):
        f[i, j, k] = v
        f[j, i, k] = -v

    put(0, 2, 3, 1.0)  # [K1, K3] = i K4
    put(0, 3, 2, -1.0)  # [K1, K4] = -i K3
    put(1, 2, 3, -1.0)  # [K2, K3] = -i K4
    put(1, 3, 2, 1.0)  # [K2, K4] = i K3
    put(2, 3, 0, 0.5)  # [K3, K4] = i/2 (K1 - K2)
    put(2, 3, 1, -0.5)
    return f


def pauli_constants() -> np.ndarray:
    f = np.zeros((3, 3, 3))
    for (i, j, k), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1}.items():
        f[i, j, k] = 2 * s
        f[j, i, k] = -2 * s
    return f


def lie_registry(cutoff: int = 10) -> dict:
    """Catalogue of Lie algebras with validated Jacobi identities.

    Returns a dict with keys ``"K"`` (the coupled-oscillator algebra, with a
    truncated Fock representation of the given ``cutoff``), ``"pauli"`` and
    ``"sl(1|1)"`` (metadata only, no structure constants).
    """
    rep, K = build_fock_two_mode(cutoff)
    kalg = LieAlgebraSpec(
        "K",
        ["K1", "K2", "K3", "K4"],
        k_algebra_constants(),
        matrices=K,
        interior=rep.restrict,
        metadata={"rep": rep},
    )
    pauli = LieAlgebraSpec("pauli", ["sx", "sy", "sz"], pauli_constants(), matrices=[PAULI_X, PAULI_Y, PAULI_Z])
    for alg in (kalg, pauli):
        res = alg.jacobi_residual()
        if res > 1e-12:
            raise ValidationError(f"{alg.name}: Jacobi identity violated by {res:.2e}")
    superalg = {
        "name": "sl(1|1)",
        "generators": ["Q", "Qbar", "H"],
        "relations": ["{Q, Qbar} = H", "[H, Q] = 0", "[H, Qbar] = 0", "Q^2 = Qbar^2 = 0"],
        "note": "graded algebra, recorded as metadata only",
    }
    return {"K": kalg, "pauli": pauli, "sl(1|1)": superalg}


# ---------------------------------------------------------------------------
# model specifications

MODEL_FIELDS = {
    "TwoLevel": {"omega", "lam", "kappa"},
    "CoupledK": {"a", "b", "lam", "fock_cutoff"},
    "Swanson": {"M", "Omega", "alpha", "fock_cutoff"},
    "BosonBath": {"nu", "g", "kappa", "N", "c1", "gamma"},
    "Anharmonic": {"sigma", "c2"},
    "BenderBoettcher": {"eps"},
}

_T = sympy.Symbol("t", real=True)


def coefficient_function(value) -> Callable[[float], complex]:
    """Turn a JSON coefficient into a callable of ``t``.

    Accepted forms: a number, an expression string in ``t`` (parsed with
    sympy, e.g. ``"1 + t**2"``), or ``{"times": [...], "values": [...]}``
    which is interpolated with a cubic spline.
    """
    if isinstance(value, (int, float, complex)):
        c = value
        return lambda t: c
    if isinstance(value, str):
        expr = sympy.sympify(value, locals={"t": _T})
        if not expr.free_symbols:
            c = complex(expr)
            c = c.real if c.imag == 0 else c
            return lambda t: c
        return sympy.lambdify(_T, expr, "numpy")
    if isinstance(value, dict) and set(value) == {"times", "values"}:
        spline = CubicSpline(np.asarray(value["times"], float), np.asarray(value["values"]))
        return lambda t: spline(t)[()]
    raise ValidationError(f"cannot interpret coefficient {value!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Tagged parameter bundle for one of the supported models."""

    tag: str
    params: dict

    def __post_init__(self):
        if self.tag not in MODEL_FIELDS:
            raise ValidationError(f"unknown model tag {self.tag!r}; expected one of {sorted(MODEL_FIELDS)}")
        missing = MODEL_FIELDS[self.tag] - set(self.params)
        extra = set(self.params) - MODEL_FIELDS[self.tag]
        if missing or extra:
            raise ValidationError(f"{self.tag}: missing {sorted(missing)}, unexpected {sorted(extra)}")
        p = self.params
        if self.tag in ("CoupledK", "Swanson") and int(p["fock_cutoff"]) < 8:
            raise ValidationError("fock_cutoff must be >= 8")
        if self.tag == "BosonBath":
            if int(p["N"]) < 1:
                raise ValidationError("bath size N must be >= 1")
            if p["g"] == 0 and p["kappa"] == 0:
                raise ValidationError("g and kappa must not both vanish")

    def coefficient(self, name: str) -> Callable[[float], complex]:
        return coefficient_function(self.params[name])

    def to_json(self) -> str:
        return json.dumps({"tag": self.tag, "params": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        data = json.loads(text)
        if set(data) != {"tag", "params"}:
            raise ValidationError(f"model JSON must have exactly 'tag' and 'params', got {sorted(data)}")
        return cls(data["tag"], data["params"])
