"""Antilinear symmetries, regime classification and biorthonormal systems."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ExceptionalPointError, ValidationError
from .models import FockRep, mode_parity
from .numcore import as_matrix, dagger, eig_general, norm2

PT_SYMMETRIC = "PTSymmetric"
EXCEPTIONAL_POINT = "ExceptionalPoint"
SPONTANEOUSLY_BROKEN = "SpontaneouslyBroken"
PT_BROKEN = "PTBroken"  # the Hamiltonian itself does not commute with PT

EP_ANGLE_TOL = 1e-6
PAIR_TOL = 1e-8
CLASSIFY_TOL = 1e-9


class AntilinearOp:
    """Antilinear operator ``v -> U conj(v)`` with unitary ``U``.

    Parameters
    ----------
    U : array_like
        Unitary matrix.
    involution : bool
        If true, also require ``U conj(U) = I`` so that the operator squares
        to one.
    """

    def __init__(self, U, involution: bool = False, tol: float = 1e-12):
        U = as_matrix(U, "U")
        n = U.shape[0]
        if norm2(dagger(U) @ U - np.eye(n)) > tol:
            raise ValidationError("antilinear operator requires a unitary U")
        if involution and norm2(U @ U.conj() - np.eye(n)) > tol:
            raise ValidationError("declared involution but U conj(U) != I")
        self.U = U

    @classmethod
    def conjugation(cls, n: int) -> "AntilinearOp":
        return cls(np.eye(n), involution=True)

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    def __call__(self, v) -> np.ndarray:
        return self.U @ np.conj(v)

    def conjugate_operator(self, H) -> np.ndarray:
        """Return ``PT H PT^{-1} = U conj(H) U^dagger``."""
        return self.U @ np.conj(H) @ dagger(self.U)


def pt_residual(H, PT: AntilinearOp) -> float:
    """Spectral norm ``|U conj(H) U^{-1} - H|``; zero iff ``[H, PT] = 0``."""
    H = as_matrix(H, "H")
    if H.shape[0] != PT.dim:
        raise ValidationError(f"dimension mismatch: H is {H.shape[0]}, PT acts on {PT.dim}")
    return norm2(PT.conjugate_operator(H) - H)


def min_eigenvector_angle(V) -> float:
    """Smallest principal angle (radians) between pairs of unit columns."""
    n = V.shape[1]
    if n < 2:
        return float(np.pi / 2)
    G = np.abs(dagger(V) @ V)
    np.fill_diagonal(G, 0.0)
    return float(np.arccos(min(1.0, G.max())))


def match_conjugate_pairs(w, tol: float):
    """Greedy nearest-conjugate matching of non-real eigenvalues.

    Returns a list of index pairs ``(i, j)`` with ``w[j] ~ conj(w[i])`` and
    the list of indices that could not be matched. Candidates are visited in
    order of real part so that ties resolve deterministically.
    """
    idx = [k for k in np.argsort(np.round(w.real, 12), kind="stable") if abs(w[k].imag) > tol]
    free = set(idx)
    pairs, unmatched = [], []
    for i in idx:
        if i not in free or w[i].imag < 0:
            continue
        free.discard(i)
        cands = [j for j in free if w[j].imag < 0]
        if not cands:
            unmatched.append(int(i))
            continue
        j = min(cands, key=lambda k: (abs(w[k] - np.conj(w[i])), w[k].real))
        if abs(w[j] - np.conj(w[i])) <= tol:
            pairs.append((int(i), int(j)))
            free.discard(j)
        else:
            unmatched.append(int(i))
    unmatched.extend(int(k) for k in sorted(free))
    return pairs, sorted(unmatched)


@dataclass
class RegimeReport:
    """Outcome of :func:`classify_regime`."""

    label: str
    eigenvalues: list
    max_imag: float
    pairs: list
    unmatched: list
    min_angle: float
    pt_residual: float
    pt_phases: list | None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eigenvalues"] = [[float(z.real), float(z.imag)] for z in self.eigenvalues]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _pt_phase(PT: AntilinearOp, v):
    """Return ``(phi, residual)`` with ``PT v ~ exp(i phi) v``."""
    w = PT(v)
    c = np.vdot(v, w)
    phase = c / abs(c) if abs(c) > 0 else 1.0
    return float(np.angle(phase)), float(np.linalg.norm(w - phase * v))


def classify_regime(
    H,
    PT: AntilinearOp,
    tol: float = CLASSIFY_TOL,
    angle_tol: float = EP_ANGLE_TOL,
    pair_tol: float = PAIR_TOL,
    phase_tol: float = 1e-8,
) -> RegimeReport:
    """Classify the spectrum of a PT-symmetric matrix.

    Parameters
    ----------
    H : array_like
        Square matrix.
    PT : AntilinearOp
        Candidate antilinear symmetry.
    tol : float
        Reality tolerance relative to the spectral radius (and for the
        commutation check ``pt_residual``).
    angle_tol : float
        Eigenvector coalescence threshold in radians for exceptional points.
    pair_tol : float
        Relative tolerance for complex-conjugate pairing.

    Returns
    -------
    RegimeReport
        ``label`` is one of ``PTSymmetric``, ``ExceptionalPoint``,
        ``SpontaneouslyBroken`` or, when ``H`` does not commute with ``PT``,
        ``PTBroken``. ``flags`` lists anything that lowers confidence.
    """
    H = as_matrix(H, "H")
    w, V = eig_general(H)
    radius = max(np.abs(w).max(), 1.0)
    res = pt_residual(H, PT)
    angle = min_eigenvector_angle(V)
    max_imag = float(np.abs(w.imag).max())
    pairs, unmatched = match_conjugate_pairs(w, pair_tol * radius)
    flags = []

    if res > tol * radius:
        label = PT_BROKEN
    elif angle <= angle_tol:
        label = EXCEPTIONAL_POINT
        if angle > 0.1 * angle_tol:
            flags.append("near_threshold_angle")
    elif max_imag <= tol * radius:
        label = PT_SYMMETRIC
    else:
        label = SPONTANEOUSLY_BROKEN
        if unmatched:
            flags.append("unpaired_complex_eigenvalues")

    phases = None
    if label == PT_SYMMETRIC:
        phases = []
        for k in range(V.shape[1]):
            phi, r = _pt_phase(PT, V[:, k])
            phases.append(phi)
            if r > phase_tol:
                flags.append(f"eigenvector_{k}_not_pt_invariant")
    if label in (PT_SYMMETRIC, SPONTANEOUSLY_BROKEN):
        if 0 < angle < 1e3 * angle_tol:
            flags.append("close_to_exceptional_point")
        if 0 < max_imag and max_imag < 1e3 * tol * radius:
            flags.append("imaginary_parts_near_tolerance")
    return RegimeReport(
        label=label,
        eigenvalues=list(w),
        max_imag=max_imag,
        pairs=pairs,
        unmatched=unmatched,
        min_angle=angle,
        pt_residual=res,
        pt_phases=phases,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# biorthonormal systems


@dataclass
class BiorthoSystem:
    """Right eigenvectors ``psi`` and left partners ``phi`` (as columns)."""

    eigenvalues: np.ndarray
    psi: np.ndarray
    phi: np.ndarray

    def overlap_residual(self) -> float:
        n = self.psi.shape[1]
        return norm2(dagger(self.phi) @ self.psi - np.eye(n))

    def completeness_residual(self) -> float:
        n = self.psi.shape[0]
        return norm2(self.psi @ dagger(self.phi) - np.eye(n))

    def signature(self, P) -> np.ndarray:
        """``s_n = sign Re <phi_n| P phi_n>`` (equivalently ``P psi_n = s_n phi_n``)."""
        vals = np.einsum("in,ij,jn->n", self.phi.conj(), P, self.phi).real
        return np.where(vals >= 0, 1, -1)


def biorthonormalize(H, angle_tol: float = EP_ANGLE_TOL) -> BiorthoSystem:
    """Biorthonormal eigenbasis in the balanced gauge ``|psi_n| = |phi_n|``.

    Raises
    ------
    ExceptionalPointError
        If two eigenvectors coalesce (angle below ``angle_tol``).
    """
    w, R = eig_general(H)
    angle = min_eigenvector_angle(R)
    if angle <= angle_tol:
        raise ExceptionalPointError(
            f"eigenvectors coalesce (min angle {angle:.2e} rad); the biorthonormal basis does not exist at an exceptional point"
        )
    L = dagger(np.linalg.inv(R))  # columns phi_n with <phi_n|psi_m> = delta
    # balanced gauge: psi -> c psi, phi -> phi / conj(c) with |c|^2 = |phi|/|psi|
    c = np.sqrt(np.linalg.norm(L, axis=0) / np.linalg.norm(R, axis=0))
    # fix the phase by making the largest component of psi real positive
    k = np.argmax(np.abs(R), axis=0)
    ph = np.conj(R[k, np.arange(R.shape[1])])
    ph = ph / np.abs(ph)
    c = c * ph
    return BiorthoSystem(w, R * c, L / np.conj(c))


def c_operator(system: BiorthoSystem, P, tol: float = 1e-10) -> np.ndarray:
    """``C = sum_n s_n |psi_n><phi_n|`` with the signature fixed by ``P``.

    Raises
    ------
    ValidationError
        If ``P^2 != I`` or ``P H P != H^dagger``.
    """
    P = as_matrix(P, "P")
    n = P.shape[0]
    H = system.psi @ np.diag(system.eigenvalues) @ dagger(system.phi)
    scale = max(norm2(H), 1.0)
    if norm2(P @ P - np.eye(n)) > tol:
        raise ValidationError("P must square to the identity")
    if norm2(P @ H @ P - dagger(H)) > tol * scale:
        raise ValidationError("P does not satisfy P H P = H^dagger")
    s = system.signature(P)
    return (system.psi * s) @ dagger(system.phi)


def cpt_equals_rho(P, C, rho) -> float:
    """Spectral norm ``|P C - rho|``."""
    P, C, rho = (as_matrix(M) for M in (P, C, rho))
    if not P.shape == C.shape == rho.shape:
        raise ValidationError("P, C and rho must have the same shape")
    return norm2(P @ C - rho)


def hk_partial_pt(rep: FockRep):
    """Partial PT symmetries of the coupled oscillator in Fock space.

    ``PT_+ : x -> x, y -> -y, p_x -> -p_x, p_y -> p_y, i -> -i`` is realized
    as ``Pi_y`` composed with complex conjugation, and ``PT_-`` as ``Pi_x``
    composed with conjugation, where ``Pi = (-1)^{a^dagger a}`` is the parity
    of a single mode.
    """
    return (
        AntilinearOp(mode_parity(rep, 1), involution=True),
        AntilinearOp(mode_parity(rep, 0), involution=True),
    )
