"""Discretized linearized operators ``L+`` and ``L-`` and their algebra.

``L+ = -d^2/dx^2 + 1 - 6 u^2`` and ``L- = -d^2/dx^2 + 1 - 2 u^2`` are
assembled with the 4th-order central stencil as real symmetric
pentadiagonal matrices stored in LAPACK upper band form.  Perturbations
vanish outside the grid (Dirichlet); on ``EVEN`` grids the reflection about
``x = 0`` is built into an orthonormal even basis, which keeps the matrix
symmetric.

All vectors handed to public functions are grid samples; the conversion to
basis coefficients happens inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import scipy.linalg as sla

from bbz.errors import ConfigurationError, DiscretizationError, DomainError, SolvabilityError
from bbz.profiles import Branch, Parity, ProfileGrid, SolitonProfile

MIN_POINTS = 16
DEFAULT_ZERO_TOL = 1e-6

# -d^2/dx^2 stencil times h^2: diagonal, first and second off-diagonal
_C0, _C1, _C2 = 30.0 / 12.0, -16.0 / 12.0, 1.0 / 12.0


class OperatorLabel(str, Enum):
    LPLUS = "Lplus"
    LMINUS = "Lminus"

    @property
    def coupling(self) -> float:
        return 6.0 if self is OperatorLabel.LPLUS else 2.0


class BoundaryCondition(str, Enum):
    DIRICHLET = "Dirichlet"
    NEUMANN_AT_ZERO = "NeumannAtZero"


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Symmetric banded matrix plus grid metadata.

    ``pinned`` holds ``(q, theta)`` when the eigenvalue ``theta`` of the
    unit eigenvector ``q`` (basis coefficients) has been moved to exactly
    zero, i.e. the represented matrix is ``band - theta q q^T``.
    """

    band_matrix: np.ndarray
    spacing: float
    bc: BoundaryCondition
    label: OperatorLabel
    grid: ProfileGrid
    pinned: tuple[np.ndarray, float] | None = None

    @property
    def n(self) -> int:
        return self.band_matrix.shape[1]

    def entry(self, i: int, j: int) -> float:
        i, j = min(i, j), max(i, j)
        if j - i > 2:
            value = 0.0
        else:
            value = float(self.band_matrix[2 - (j - i), j])
        if self.pinned is not None:
            q, theta = self.pinned
            value -= theta * q[i] * q[j]
        return value

    def dense(self) -> np.ndarray:
        ab = self.band_matrix
        a = np.diag(ab[2]) + np.diag(ab[1, 1:], 1) + np.diag(ab[0, 2:], 2)
        a = a + np.triu(a, 1).T
        if self.pinned is not None:
            q, theta = self.pinned
            a -= theta * np.outer(q, q)
        return a

    def matvec(self, y: np.ndarray) -> np.ndarray:
        """Product with a coefficient vector (real or complex, 1-D or 2-D)."""
        y = np.asarray(y)
        ab = self.band_matrix
        d0, d1, d2 = ab[2], ab[1, 1:], ab[0, 2:]
        if y.ndim == 2:
            d0, d1, d2 = d0[:, None], d1[:, None], d2[:, None]
        out = d0 * y
        out[:-1] += d1 * y[1:]
        out[1:] += d1 * y[:-1]
        out[:-2] += d2 * y[2:]
        out[2:] += d2 * y[:-2]
        if self.pinned is not None:
            q, theta = self.pinned
            if y.ndim == 2:
                out -= theta * np.outer(q, q @ y)
            else:
                out -= theta * q * (q @ y)
        return out

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Action on grid samples."""
        g = self.grid
        return g.from_coeffs(self.matvec(g.to_coeffs(f)))

    def quadratic_form(self, f: np.ndarray) -> float:
        return self.grid.inner(self.apply(f), f)

    def to_coo_text(self) -> str:
        lines = []
        n = self.n
        if self.pinned is None:
            for i in range(n):
                for j in range(max(0, i - 2), min(n, i + 3)):
                    lines.append(f"{i} {j} {self.entry(i, j):.17g}")
        else:
            a = self.dense()
            for i, j in zip(*np.nonzero(a)):
                lines.append(f"{i} {j} {a[i, j]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class InertiaResult:
    n_negative: int
    n_zero: int
    n_positive: int
    zero_tol: float
    fallback: bool = False

    @property
    def n(self) -> int:
        return self.n_negative + self.n_zero + self.n_positive

    def to_dict(self) -> dict:
        return {
            "negative": self.n_negative,
            "zero": self.n_zero,
            "positive": self.n_positive,
            "zero_tol": self.zero_tol,
        }


def laplacian_band(grid: ProfileGrid) -> np.ndarray:
    """Upper band storage of ``-d^2/dx^2`` on the grid's coefficient basis."""
    n = grid.n_points
    inv_h2 = 1.0 / grid.spacing**2
    ab = np.zeros((3, n))
    ab[2, :] = _C0
    ab[1, 1:] = _C1
    ab[0, 2:] = _C2
    if grid.parity is Parity.EVEN:
        # even basis e_0 = delta_0, e_i = (delta_i + delta_-i)/sqrt(2)
        r2 = math.sqrt(2.0)
        ab[1, 1] = r2 * _C1
        ab[0, 2] = r2 * _C2
        ab[2, 1] = _C0 + _C2
    return ab * inv_h2


def assemble(
    profile: SolitonProfile,
    which: OperatorLabel | str,
    bc: BoundaryCondition | str | None = None,
) -> DiscretizedOperator:
    which = OperatorLabel(which)
    grid = profile.grid
    natural = (BoundaryCondition.DIRICHLET if grid.parity is Parity.FULL
               else BoundaryCondition.NEUMANN_AT_ZERO)
    bc = natural if bc is None else BoundaryCondition(bc)
    if bc is not natural:
        raise ConfigurationError(f"boundary condition {bc.value} does not match a {grid.parity.value} grid")
    if grid.n_points < MIN_POINTS:
        raise ConfigurationError(f"need at least {MIN_POINTS} grid points, got {grid.n_points}")
    ab = laplacian_band(grid)
    ab[2] += 1.0 - which.coupling * profile.u_values**2
    return DiscretizedOperator(ab, grid.spacing, bc, which, grid)


def essential_edge(psi0: float) -> float:
    """Lower edge ``sqrt((1 - 6 psi0^2)(1 - 2 psi0^2))`` of the continuous spectrum on iR."""
    p2 = float(psi0) ** 2
    # psi0^2 = 1/6 is the closing point of the gap and maps to 0
    if p2 > 1.0 / 6.0 and not math.isclose(p2, 1.0 / 6.0, rel_tol=1e-12):
        raise DomainError(f"psi0^2 must not exceed 1/6, got {p2}")
    return math.sqrt(max(0.0, (1.0 - 6.0 * p2) * (1.0 - 2.0 * p2)))


def pin_kernel(op: DiscretizedOperator, mode: np.ndarray, n_candidates: int = 4,
               min_overlap: float = 0.9) -> DiscretizedOperator:
    """Move the eigenvalue belonging to a known null direction to exactly zero.

    ``mode`` is the analytic kernel function (e.g. ``u'`` for ``L+``).  The
    low eigenpair of the matrix with the largest overlap with it is
    replaced by zero, the smallest symmetric perturbation that restores the
    symmetry-induced kernel lost to discretization error.
    """
    m = op.grid.to_coeffs(mode)
    m = m / np.linalg.norm(m)
    # inverse iteration at shift 0 from the analytic mode; the pinned
    # eigenvalue is by far the closest to zero, so a few steps suffice
    try:
        q = m
        for _ in range(3):
            q = _banded_solve(op.band_matrix, q)
            q /= np.linalg.norm(q)
        aq = op.matvec(q)
        theta = float(q @ aq)
        resid = float(np.linalg.norm(aq - theta * q))
        if abs(q @ m) >= min_overlap and resid <= 1e-9 * max(1.0, float(np.max(np.abs(op.band_matrix)))):
            q = q * np.sign(q @ m)
            return replace(op, pinned=(q, theta))
    except (np.linalg.LinAlgError, ValueError):
        pass
    k = min(n_candidates, op.n) - 1
    w, v = sla.eig_banded(op.band_matrix, select="i", select_range=(0, k))
    overlaps = np.abs(v.T @ m)
    best = int(np.argmax(overlaps))
    if overlaps[best] < min_overlap:
        raise DiscretizationError(
            f"no low eigenvector of {op.label.value} matches the expected kernel "
            f"(best overlap {overlaps[best]:.3f})"
        )
    q = v[:, best]
    q = q * np.sign(q @ m)
    return replace(op, pinned=(q, float(w[best])))


def kernel_eigenvalue(op: DiscretizedOperator) -> float | None:
    """Raw eigenvalue removed by :func:`pin_kernel`, if any."""
    return None if op.pinned is None else op.pinned[1]


def _ldl_negative_count(ab: np.ndarray, shift: float) -> int | None:
    """Negative pivots of LDL^T of ``band - shift*I`` (pentadiagonal, no pivoting).

    Returns ``None`` when a pivot is too small for the count to be trusted.
    """
    a = ab[2] - shift
    b = ab[1, 1:]
    c = ab[0, 2:]
    n = a.size
    scale = float(np.max(np.abs(ab))) + abs(shift)
    tiny = 1e-14 * scale
    neg = 0
    d_prev2 = d_prev = 0.0
    l1_prev = l2_prev = l2_prev2 = 0.0
    for i in range(n):
        d = a[i] - l1_prev * l1_prev * d_prev - l2_prev2 * l2_prev2 * d_prev2
        if abs(d) < tiny:
            return None
        if d < 0.0:
            neg += 1
        if i + 1 < n:
            l1 = (b[i] - l2_prev * d_prev * l1_prev) / d
        else:
            l1 = 0.0
        l2 = c[i] / d if i + 2 < n else 0.0
        d_prev2, d_prev = d_prev, d
        l2_prev2, l2_prev = l2_prev, l2
        l1_prev = l1
    return neg


def morse_index(op: DiscretizedOperator, zero_tol: float = DEFAULT_ZERO_TOL) -> InertiaResult:
    """Counts of eigenvalues below ``-zero_tol``, inside ``|lambda| < zero_tol`` and above.

    Uses Sylvester inertia of two shifted LDL^T factorizations; falls back
    to a full banded eigensolve when a pivot breaks down.
    """
    n = op.n
    below_lo = _ldl_negative_count(op.band_matrix, -zero_tol)
    below_hi = _ldl_negative_count(op.band_matrix, zero_tol)
    fallback = below_lo is None or below_hi is None
    if fallback:
        w = sla.eigvals_banded(op.band_matrix)
        below_lo = int(np.sum(w < -zero_tol))
        below_hi = int(np.sum(w < zero_tol))
    neg, zero, pos = below_lo, below_hi - below_lo, n - below_hi
    if op.pinned is not None:
        theta = op.pinned[1]
        if theta <= -zero_tol:
            neg, zero = neg - 1, zero + 1
        elif theta >= zero_tol:
            pos, zero = pos - 1, zero + 1
    return InertiaResult(neg, zero, pos, zero_tol, fallback)


def _full_band(ab: np.ndarray) -> np.ndarray:
    """Upper symmetric band (3, n) to general (l=2, u=2) band (5, n)."""
    n = ab.shape[1]
    full = np.zeros((5, n))
    full[:3] = ab
    full[3, :-1] = ab[1, 1:]
    full[4, :-2] = ab[0, 2:]
    return full


def _banded_solve(ab: np.ndarray, b: np.ndarray) -> np.ndarray:
    return sla.solve_banded((2, 2), _full_band(ab), b, check_finite=False)


def solve_indefinite(
    op: DiscretizedOperator,
    rhs: np.ndarray,
    kernel: np.ndarray | None = None,
    orth_tol: float = 1e-6,
) -> np.ndarray:
    """Solve ``op x = rhs`` for grid samples, projecting out a kernel if present.

    When the operator carries a pinned kernel (or ``kernel`` names one) the
    right-hand side must be orthogonal to it; the returned solution is then
    the one orthogonal to the kernel.
    """
    if kernel is not None and op.pinned is None:
        op = pin_kernel(op, kernel)
    grid = op.grid
    b = grid.to_coeffs(np.asarray(rhs, dtype=float))
    bnorm = float(np.max(np.abs(b))) if b.size else 0.0
    if bnorm == 0.0:
        return np.zeros_like(b)
    if op.pinned is not None:
        q, theta = op.pinned
        overlap = float(q @ b)
        if abs(overlap) > orth_tol * float(np.linalg.norm(b)):
            raise SolvabilityError(
                f"right-hand side has a component {overlap:.3e} along the kernel of {op.label.value}"
            )
        b = b - overlap * q
        # (band + (1 - theta) q q^T) y = b by Sherman-Morrison; y is then orthogonal to q
        y0 = _banded_solve(op.band_matrix, b)
        z0 = _banded_solve(op.band_matrix, q)
        gamma = 1.0 - theta
        y = y0 - z0 * (gamma * (q @ y0)) / (1.0 + gamma * (q @ z0))
        y -= (q @ y) * q
    else:
        try:
            y = _banded_solve(op.band_matrix, b)
        except np.linalg.LinAlgError as exc:
            raise DiscretizationError(f"{op.label.value} is numerically singular") from exc
    res = float(np.max(np.abs(op.matvec(y) - b)))
    if not res < 1e-8 * bnorm:
        raise DiscretizationError(
            f"{op.label.value} solve residual {res:.3e} exceeds 1e-8 * |rhs| = {1e-8 * bnorm:.3e}"
        )
    return grid.from_coeffs(y)


def d_matrix(profile: SolitonProfile, zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """The single constraint-matrix entry ``<L-^{-1} u', u'>``.

    At ``h = 0`` the kernel ``u0`` of ``L-`` is projected out, which is
    legitimate because ``u0'`` is odd and ``u0`` even.
    """
    if profile.grid.parity is not Parity.FULL:
        raise ConfigurationError("the translational mode u' is odd; d_matrix needs a FULL grid")
    lm = assemble(profile, OperatorLabel.LMINUS)
    up = profile.u_prime_values
    if profile.params.is_nls_limit:
        lm = pin_kernel(lm, profile.u_values)
    elif morse_index(lm, zero_tol).n_zero:
        raise DiscretizationError("L- is numerically singular although 0 is not in its spectrum")
    w = solve_indefinite(lm, up)
    return profile.grid.inner(w, up)


def _require_minus(profile: SolitonProfile) -> None:
    if profile.params.branch is not Branch.MINUS or profile.params.is_nls_limit:
        raise ValueError("this identity concerns the Minus branch")


def _interior(grid: ProfileGrid) -> slice:
    return slice(2, -2) if grid.parity is Parity.FULL else slice(0, -2)


def phi_identity_residual(profile: SolitonProfile) -> float:
    """Max-norm of ``L- phi - 2 psi0^2 phi (2 + phi)`` over interior points."""
    _require_minus(profile)
    lm = assemble(profile, OperatorLabel.LMINUS)
    phi = profile.phi_values
    r = lm.apply(phi) - 2.0 * profile.params.psi0**2 * phi * (2.0 + phi)
    return float(np.max(np.abs(r[_interior(profile.grid)])))


def lminus_quadratic_form(profile: SolitonProfile, method: str = "integral") -> float:
    """``<L- phi, phi>`` for the decaying part of ``u-``.

    ``method="integral"`` evaluates ``2 psi0^2 * int phi^2 (2 + phi) dx``;
    ``method="matrix"`` applies the assembled operator instead.
    """
    _require_minus(profile)
    phi = profile.phi_values
    if method == "integral":
        return 2.0 * profile.params.psi0**2 * profile.grid.inner(phi * phi, 2.0 + phi)
    if method == "matrix":
        return assemble(profile, OperatorLabel.LMINUS).quadratic_form(phi)
    raise ValueError(f"unknown method {method!r}")
