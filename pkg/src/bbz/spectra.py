"""Point spectrum of the Hamiltonian linearization ``JL`` and its bookkeeping.

``JL = [[0, L-], [-L+, 0]]`` acting on ``z = (z1, z2)``.  Since ``(JL)^2``
is block diagonal, the default solver works with the ``n x n`` product
``-L- L+`` whose eigenvalues are ``lambda^2``; the ``2n x 2n`` block matrix
is kept as a cross-check.

Eigenvalues are classified against the essential edge, imaginary pairs get
a Krein signature ``sgn <L z, z>``, and the counts ``(kr, kc, ki-)`` are
checked against ``n(L) - n(D)``.

Zero detection works in ``lambda^2`` units: an eigenvalue counts as zero
when ``|lambda|^2 < zero_tol``.  A Jordan block at zero perturbed by
``delta`` splits like ``sqrt(delta)``, so this is the scale on which the
kernel is resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from bbz import hqr
from bbz.errors import ConfigurationError
from bbz.operators import (
    DEFAULT_ZERO_TOL,
    DiscretizedOperator,
    OperatorLabel,
    assemble,
    essential_edge,
    morse_index,
    pin_kernel,
    solve_indefinite,
)
from bbz.profiles import Parity, SolitonProfile


@dataclass(frozen=True)
class Tolerances:
    zero_tol: float = DEFAULT_ZERO_TOL
    re_tol: float = 1e-6
    edge_margin: float = 0.03
    residual_tol: float = 1e-6
    krein_tol: float = 1e-10


class EigenClass(str, Enum):
    ZERO = "zero"
    REAL = "real"
    COMPLEX = "complex"
    POINT = "point"
    NEAR_EDGE = "near-edge"
    ESSENTIAL = "essential"
    UNRESOLVED = "unresolved"


@dataclass(eq=False)
class Eigenpair:
    lam: complex
    vector: np.ndarray | None
    residual: float
    kernel_like: bool = False

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.vector.size // 2
        return self.vector[:n], self.vector[n:]


class ReducedPair(NamedTuple):
    lambda_squared: complex
    z1: np.ndarray | None


@dataclass(eq=False)
class ClassifiedEigenvalue:
    pair: Eigenpair
    cls: EigenClass
    krein: int | None = None

    @property
    def lam(self) -> complex:
        return self.pair.lam


@dataclass(frozen=True)
class IndexCheck:
    lhs: int
    rhs: int
    conditional: bool

    @property
    def passed(self) -> bool:
        return self.lhs == self.rhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "pass": self.passed,
                "conditional": self.conditional}


@dataclass(eq=False)
class SpectrumReport:
    entries: list[ClassifiedEigenvalue]
    edge: float
    essential_cluster_min: float
    zero_multiplicity: int
    counts: tuple[int, int, int]
    tolerances: Tolerances
    profile: SolitonProfile | None = None
    n_lplus: int | None = None
    n_lminus: int | None = None
    d_entries: tuple[float, ...] = ()
    index_check: IndexCheck | None = None
    extras: dict = field(default_factory=dict)

    def of_class(self, *classes: EigenClass) -> list[ClassifiedEigenvalue]:
        return [e for e in self.entries if e.cls in classes]

    @property
    def point_eigs(self) -> list[Eigenpair]:
        return [e.pair for e in self.of_class(EigenClass.POINT)]

    @property
    def krein(self) -> dict[complex, int]:
        return {e.lam: e.krein for e in self.entries if e.krein is not None}

    def imaginary_gap_modes(self, krein: int | None = None) -> list[ClassifiedEigenvalue]:
        """Upper-half-plane imaginary eigenvalues inside the gap or its edge band."""
        out = [e for e in self.of_class(EigenClass.POINT, EigenClass.NEAR_EDGE)
               if e.lam.imag > 0]
        if krein is not None:
            out = [e for e in out if e.krein == krein]
        return sorted(out, key=lambda e: e.lam.imag)

    @property
    def max_abs_real(self) -> float:
        return max((abs(e.lam.real) for e in self.entries if e.cls is not EigenClass.ZERO),
                   default=0.0)

    def _listed(self) -> list[ClassifiedEigenvalue]:
        window = 1.1 * self.edge if self.edge > 0 else math.inf
        return [e for e in self.entries
                if e.cls is not EigenClass.ESSENTIAL or abs(e.lam.imag) <= window]

    def to_dict(self) -> dict:
        p = self.profile.params if self.profile is not None else None
        kr, kc, ki = self.counts
        out = {
            "alpha": None if p is None or p.is_nls_limit else p.alpha,
            "h": None if p is None else p.h,
            "branch": None if p is None else ("nls" if p.is_nls_limit else p.branch.value),
            "parity": None if self.profile is None else self.profile.grid.parity.value,
            "eigenvalues": [
                {"re": e.lam.real, "im": e.lam.imag, "krein": e.krein,
                 "residual": e.pair.residual, "class": e.cls.value}
                for e in self._listed()
            ],
            "counts": {"kr": kr, "kc": kc, "ki_minus": ki},
            "zero_multiplicity": self.zero_multiplicity,
            "edge": self.edge,
            "essential_cluster_min": self.essential_cluster_min,
            "morse": {"lplus": self.n_lplus, "lminus": self.n_lminus},
            "d_matrix": list(self.d_entries),
            "index_check": None if self.index_check is None else self.index_check.to_dict(),
        }
        return out

    def csv_rows(self) -> list[tuple]:
        return [(e.lam.real, e.lam.imag, e.krein, e.pair.residual, e.cls.value)
                for e in self._listed()]


CSV_HEADER = ("re", "im", "krein", "residual", "class")


def _weighted_norm(z: np.ndarray, spacing: float) -> float:
    return math.sqrt(spacing * float(np.vdot(z, z).real))


def _residual(lp: DiscretizedOperator, lm: DiscretizedOperator, z: np.ndarray, lam: complex) -> float:
    n = lp.n
    z1, z2 = z[:n], z[n:]
    r = np.concatenate([lm.matvec(z2) - lam * z1, -lp.matvec(z1) - lam * z2])
    return float(np.max(np.abs(r)) / np.max(np.abs(z)))


def _check_pair(lp: DiscretizedOperator, lm: DiscretizedOperator) -> None:
    if lp.n != lm.n or lp.spacing != lm.spacing:
        raise ConfigurationError("L+ and L- live on different grids")


def block_matrix(lp: DiscretizedOperator, lm: DiscretizedOperator) -> np.ndarray:
    n = lp.n
    m = np.zeros((2 * n, 2 * n))
    m[:n, n:] = lm.dense()
    m[n:, :n] = -lp.dense()
    return m


def eigen_full(
    lp: DiscretizedOperator,
    lm: DiscretizedOperator,
    method: str = "lapack",
    window: float | None = None,
) -> list[Eigenpair]:
    """All eigenvalues of the ``2n x 2n`` block matrix.

    ``method="lapack"`` uses LAPACK's Hessenberg/QR driver with vectors;
    ``method="hqr"`` uses :mod:`bbz.hqr` and inverse iteration for the
    eigenvalues with ``|lambda| <= window`` (all when ``window`` is None).
    """
    _check_pair(lp, lm)
    m = block_matrix(lp, lm)
    h = lp.spacing
    if method == "lapack":
        lam, vecs = sla.eig(m)
        vec_list = [vecs[:, k] for k in range(lam.size)]
    elif method == "hqr":
        lam = hqr.eigvals(m)
        vec_list = []
        for val in lam:
            if window is None or abs(val) <= window:
                vec_list.append(_inverse_iteration(m, val))
            else:
                vec_list.append(None)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = []
    for val, v in zip(lam, vec_list):
        val = complex(val)
        if v is None:
            out.append(Eigenpair(val, None, math.nan))
            continue
        v = v / _weighted_norm(v, h)
        out.append(Eigenpair(val, v, _residual(lp, lm, v, val)))
    out.sort(key=lambda p: (p.lam.real, p.lam.imag))
    return out


def _inverse_iteration(m: np.ndarray, shift: complex, steps: int = 3) -> np.ndarray:
    n = m.shape[0]
    # nudge the shift off the eigenvalue so the factorization stays regular
    sigma = shift + 1e-10 * (1.0 + abs(shift))
    lu = sla.lu_factor(m - sigma * np.eye(n))
    v = np.ones(n, dtype=complex) / math.sqrt(n)
    for _ in range(steps):
        v = sla.lu_solve(lu, v)
        v /= np.linalg.norm(v)
    return v


def reduced_matrix(lp: DiscretizedOperator, lm: DiscretizedOperator) -> np.ndarray:
    """Dense ``-L- L+`` on basis coefficients."""
    return -lm.matvec(lp.dense())


def eigen_reduced(lp: DiscretizedOperator, lm: DiscretizedOperator,
                  vectors: bool = True) -> list[ReducedPair]:
    """Eigenpairs ``(lambda^2, z1)`` of ``-L- L+``, sorted by ``(Re, Im)``."""
    _check_pair(lp, lm)
    m = reduced_matrix(lp, lm)
    if vectors:
        mu2, vecs = sla.eig(m)
        pairs = [ReducedPair(complex(mu2[k]), vecs[:, k]) for k in range(mu2.size)]
    else:
        pairs = [ReducedPair(complex(v), None) for v in sla.eigvals(m)]
    pairs.sort(key=lambda p: (p.lambda_squared.real, p.lambda_squared.imag))
    return pairs


def _sqrt_eigenvalue(mu2: complex) -> complex:
    if mu2.imag == 0.0:
        r = math.sqrt(abs(mu2.real))
        return complex(r, 0.0) if mu2.real >= 0 else complex(0.0, r)
    return complex(np.sqrt(mu2))


def hamiltonian_pairs(
    reduced: list[ReducedPair],
    lp: DiscretizedOperator,
    lm: DiscretizedOperator,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> list[Eigenpair]:
    """Expand each ``lambda^2`` into the pair ``+-lambda`` with ``z2 = -L+ z1 / lambda``.

    For ``|lambda^2| < zero_tol`` the reconstruction of ``z2`` is skipped and
    the pair is flagged kernel-like; its residual is the reduced one.
    """
    h = lp.spacing
    out = []
    for mu2, z1 in reduced:
        lam = _sqrt_eigenvalue(mu2)
        if abs(mu2) < zero_tol:
            if z1 is None:
                out += [Eigenpair(lam, None, math.nan, True), Eigenpair(-lam, None, math.nan, True)]
                continue
            r = float(np.max(np.abs(-lm.matvec(lp.matvec(z1)) - mu2 * z1)) / np.max(np.abs(z1)))
            z = np.concatenate([z1, np.zeros_like(z1)]).astype(complex)
            z /= _weighted_norm(z, h)
            out += [Eigenpair(lam, z, r, True), Eigenpair(-lam, z.copy(), r, True)]
            continue
        if z1 is None:
            out += [Eigenpair(lam, None, math.nan), Eigenpair(-lam, None, math.nan)]
            continue
        z2 = -lp.matvec(z1) / lam
        for sign in (1, -1):
            z = np.concatenate([z1, sign * z2]).astype(complex)
            z /= _weighted_norm(z, h)
            out.append(Eigenpair(sign * lam, z, _residual(lp, lm, z, sign * lam)))
    out.sort(key=lambda p: (p.lam.real, p.lam.imag))
    return out


def krein_forms(pair: Eigenpair, lp: DiscretizedOperator, lm: DiscretizedOperator) -> tuple[float, float]:
    """``(<L z, z>, mu * i<z, J z>)`` for ``lambda = i mu``; equal for an exact eigenpair."""
    h = lp.spacing
    z1, z2 = pair.split()
    energy = h * float((np.vdot(z1, lp.matvec(z1)) + np.vdot(z2, lm.matvec(z2))).real)
    # <z, Jz> = sum z1 conj(z2) - z2 conj(z1) = 2i Im(sum z1 conj(z2))
    i_zjz = -2.0 * h * float(np.sum(z1 * np.conj(z2)).imag)
    return energy, pair.lam.imag * i_zjz


def krein_signature(
    pair: Eigenpair,
    lp: DiscretizedOperator,
    lm: DiscretizedOperator,
    tol: Tolerances = Tolerances(),
) -> int:
    """``sgn <L z, z>`` for a purely imaginary eigenvalue; 0 when unresolved."""
    lam = pair.lam
    if pair.vector is None:
        raise ValueError("Krein signature needs an eigenvector")
    if abs(lam.real) > tol.re_tol or abs(lam.imag) <= tol.re_tol:
        raise ValueError(f"Krein signature is defined for nonzero imaginary eigenvalues, got {lam}")
    energy, _ = krein_forms(pair, lp, lm)
    if abs(energy) < tol.krein_tol:
        return 0
    return 1 if energy > 0 else -1


def zero_multiplicity(eigs: list[Eigenpair], zero_tol: float = DEFAULT_ZERO_TOL) -> int:
    return sum(1 for p in eigs if abs(p.lam) ** 2 < zero_tol)


def hamiltonian_symmetry_defect(eigs: list[Eigenpair]) -> float:
    """Largest distance from an eigenvalue's mirror images ``-lambda``, ``conj(lambda)`` to the set."""
    lam = np.array([p.lam for p in eigs])
    worst = 0.0
    for v in lam:
        worst = max(worst, float(np.min(np.abs(lam + v))), float(np.min(np.abs(lam - np.conj(v)))))
    return worst


def classify(
    eigs: list[Eigenpair],
    edge: float,
    lp: DiscretizedOperator | None = None,
    lm: DiscretizedOperator | None = None,
    tol: Tolerances = Tolerances(),
) -> SpectrumReport:
    entries = []
    band_lo = edge * (1.0 - tol.edge_margin)
    for p in eigs:
        lam = p.lam
        if abs(lam) ** 2 < tol.zero_tol:
            cls = EigenClass.ZERO
        elif abs(lam.real) > tol.re_tol:
            cls = EigenClass.REAL if abs(lam.imag) <= tol.re_tol else EigenClass.COMPLEX
        else:
            a = abs(lam.imag)
            if a >= edge:
                cls = EigenClass.ESSENTIAL
            elif a >= band_lo:
                cls = EigenClass.NEAR_EDGE
            elif p.vector is not None and p.residual < tol.residual_tol:
                cls = EigenClass.POINT
            else:
                cls = EigenClass.UNRESOLVED
        krein = None
        if cls in (EigenClass.POINT, EigenClass.NEAR_EDGE) and p.vector is not None and lp is not None:
            krein = krein_signature(p, lp, lm, tol)
        entries.append(ClassifiedEigenvalue(p, cls, krein))

    kr = sum(1 for e in entries if e.cls is EigenClass.REAL and e.lam.real > 0)
    kc = sum(1 for e in entries if e.cls is EigenClass.COMPLEX and e.lam.real > 0 and e.lam.imag > 0)
    ki_minus = sum(1 for e in entries
                   if e.cls is EigenClass.POINT and e.lam.imag > 0 and e.krein == -1)
    cluster = [abs(e.lam.imag) for e in entries if e.cls is EigenClass.ESSENTIAL]
    return SpectrumReport(
        entries=entries,
        edge=edge,
        essential_cluster_min=min(cluster) if cluster else math.nan,
        zero_multiplicity=sum(1 for e in entries if e.cls is EigenClass.ZERO),
        counts=(kr, kc, ki_minus),
        tolerances=tol,
    )


def index_count_check(report: SpectrumReport, n_l: int, n_d: int) -> IndexCheck:
    """``kr + 2 kc + 2 ki- == n(L) - n(D)``."""
    kr, kc, ki = report.counts
    conditional = bool(report.of_class(EigenClass.NEAR_EDGE, EigenClass.UNRESOLVED))
    return IndexCheck(kr + 2 * kc + 2 * ki, n_l - n_d, conditional)


def linearized_operators(
    profile: SolitonProfile,
) -> tuple[DiscretizedOperator, DiscretizedOperator]:
    """``L+`` and ``L-`` with their symmetry-induced kernels pinned to zero.

    On a ``FULL`` grid ``L+ u' = 0``; at ``h = 0`` also ``L- u = 0``.
    """
    lp = assemble(profile, OperatorLabel.LPLUS)
    lm = assemble(profile, OperatorLabel.LMINUS)
    if profile.grid.parity is Parity.FULL:
        lp = pin_kernel(lp, profile.u_prime_values)
    if profile.params.is_nls_limit:
        lm = pin_kernel(lm, profile.u_values)
    return lp, lm


def constraint_entries(
    profile: SolitonProfile, lp: DiscretizedOperator, lm: DiscretizedOperator
) -> tuple[float, ...]:
    """Diagonal of ``D_ij = <L^{-1} J^{-1} phi_i, J^{-1} phi_j>`` over the pinned kernels.

    The kernel directions ``(u', 0)`` and ``(0, u)`` live in different
    components, so ``D`` is diagonal.
    """
    grid = profile.grid
    entries = []
    if lp.pinned is not None:
        up = profile.u_prime_values
        entries.append(grid.inner(solve_indefinite(lm, up), up))
    if lm.pinned is not None:
        u = profile.u_values
        entries.append(grid.inner(solve_indefinite(lp, u), u))
    return tuple(entries)


def analyze(
    profile: SolitonProfile,
    tol: Tolerances = Tolerances(),
    method: str = "reduced",
) -> SpectrumReport:
    """Eigenvalues, classification, Krein signatures and index count for one soliton."""
    lp, lm = linearized_operators(profile)
    if method == "reduced":
        eigs = hamiltonian_pairs(eigen_reduced(lp, lm), lp, lm, tol.zero_tol)
    elif method in ("full", "lapack"):
        eigs = eigen_full(lp, lm, "lapack")
    elif method == "hqr":
        eigs = eigen_full(lp, lm, "hqr", window=1.5)
    else:
        raise ValueError(f"unknown method {method!r}")
    report = classify(eigs, essential_edge(profile.params.psi0), lp, lm, tol)
    n_lp = morse_index(lp, tol.zero_tol).n_negative
    n_lm = morse_index(lm, tol.zero_tol).n_negative
    d = constraint_entries(profile, lp, lm)
    n_d = sum(1 for v in d if v < 0)
    report.profile = profile
    report.n_lplus, report.n_lminus, report.d_entries = n_lp, n_lm, d
    report.index_check = index_count_check(report, n_lp + n_lm, n_d)
    return report
