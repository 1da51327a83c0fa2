"""Closed-form solitons of the forced NLS equation and their parameter maps.

The steady states solve ``-u'' + u - 2 u**3 = h`` on the line.  For every
shape parameter ``alpha > 0`` there are two explicit solutions

    u_pm(x) = psi0 * (1 + phi_pm(x)),
    phi_pm(x) = 2 sinh(alpha)**2 / (1 +- cosh(alpha) cosh(A x)),

sitting on the background ``psi0`` with decay rate ``A``.  The ``Minus``
branch is a dip through negative values, the ``Plus`` branch a bump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from bbz.errors import ConfigurationError, DomainError

H_MAX = 2.0 / (3.0 * math.sqrt(6.0))
PSI0_MAX = 1.0 / math.sqrt(6.0)

#: Minimal ``A * L`` accepted for a grid (background reached to ~e^-30).
DECAY_ADEQUACY = 30.0
#: Default ``A * L`` used when the half-length is chosen automatically.
DEFAULT_DECAY = 40.0
DEFAULT_MIN_LENGTH = 40.0

# 4th-order central second derivative, offsets -2..2, times 12 h^2.
_D2_STENCIL = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


class Branch(str, Enum):
    PLUS = "plus"
    MINUS = "minus"

    @property
    def sign(self) -> int:
        return 1 if self is Branch.PLUS else -1


class Parity(str, Enum):
    FULL = "full"
    EVEN = "even"


@dataclass(frozen=True)
class SolitonParams:
    alpha: float
    h: float
    psi0: float
    amp_A: float
    branch: Branch

    @classmethod
    def nls_limit(cls) -> "SolitonParams":
        """The ``h = 0`` endpoint of the family, where ``u = sech(x)``."""
        return cls(alpha=math.inf, h=0.0, psi0=0.0, amp_A=1.0, branch=Branch.PLUS)

    @property
    def is_nls_limit(self) -> bool:
        return self.h == 0.0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "h": self.h,
            "psi0": self.psi0,
            "A": self.amp_A,
            "branch": self.branch.value,
        }


@dataclass(frozen=True)
class ProfileGrid:
    """Uniform grid on ``[-L, L]`` (``FULL``) or on ``[0, L]`` (``EVEN``).

    An ``EVEN`` grid represents even functions through their values on the
    half line; the reflection about ``x = 0`` is implicit.
    """

    half_length: float
    n_points: int
    parity: Parity = Parity.FULL

    def __post_init__(self):
        if not (self.half_length > 0 and math.isfinite(self.half_length)):
            raise ConfigurationError(f"half_length must be positive, got {self.half_length}")
        if self.n_points < 5:
            raise ConfigurationError(f"n_points must be at least 5, got {self.n_points}")
        object.__setattr__(self, "parity", Parity(self.parity))

    @classmethod
    def for_params(
        cls,
        params: SolitonParams,
        n_points: int = 2048,
        parity: Parity = Parity.FULL,
        half_length: float | None = None,
    ) -> "ProfileGrid":
        if half_length is None:
            half_length = default_half_length(params.amp_A)
        return cls(float(half_length), int(n_points), Parity(parity))

    @property
    def spacing(self) -> float:
        width = 2.0 * self.half_length if self.parity is Parity.FULL else self.half_length
        return width / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        lo = -self.half_length if self.parity is Parity.FULL else 0.0
        return np.linspace(lo, self.half_length, self.n_points)

    @property
    def basis_scale(self) -> np.ndarray:
        """Factors mapping samples to orthonormal-basis coefficients.

        On an ``EVEN`` grid the node ``x_i > 0`` stands for the pair
        ``{x_i, -x_i}``, so its coefficient carries a factor ``sqrt(2)``.
        """
        scale = np.ones(self.n_points)
        if self.parity is Parity.EVEN:
            scale[1:] = math.sqrt(2.0)
        return scale

    def to_coeffs(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f) * self.basis_scale

    def from_coeffs(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) / self.basis_scale

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Spacing-weighted full-line inner product of real samples."""
        w = self.basis_scale**2
        return float(self.spacing * np.sum(w * np.asarray(f) * np.asarray(g)))

    def check_decay(self, amp_A: float) -> None:
        if self.half_length * amp_A < DECAY_ADEQUACY:
            minimal = DECAY_ADEQUACY / amp_A
            raise ConfigurationError(
                f"half_length={self.half_length:g} too short for decay rate A={amp_A:.6g}; "
                f"need half_length >= {minimal:.6g}"
            )


@dataclass(frozen=True, eq=False)
class SolitonProfile:
    params: SolitonParams
    grid: ProfileGrid
    u_values: np.ndarray
    phi_values: np.ndarray
    u_prime_values: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def records(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.x.tolist(), self.u_values.tolist(),
                        self.phi_values.tolist(), self.u_prime_values.tolist()))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid": {"L": self.grid.half_length, "n": self.grid.n_points,
                     "parity": self.grid.parity.value},
            "data": [
                {"x": x, "u": u, "phi": p, "uprime": d} for x, u, p, d in self.records()
            ],
        }


def default_half_length(amp_A: float) -> float:
    return max(DEFAULT_MIN_LENGTH, DEFAULT_DECAY / amp_A)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha <= 0.0:
        raise DomainError(f"alpha must be a positive finite number, got {alpha}")
    return alpha


def _check_h(h: float) -> float:
    h = float(h)
    if not (0.0 < h < H_MAX):
        raise DomainError(f"h must lie in (0, 2/(3*sqrt(6))) = (0, {H_MAX:.6f}), got {h}")
    return h


def h_of_alpha(alpha: float) -> float:
    """Pump strength ``sqrt(2) cosh^2 / (1 + 2 cosh^2)^(3/2)``."""
    alpha = _check_alpha(alpha)
    c = math.cosh(alpha)
    # divided through by cosh^3 so that large alpha does not overflow
    return math.sqrt(2.0) / (c * (2.0 + 1.0 / (c * c)) ** 1.5)


def alpha_of_h(h: float) -> float:
    """Inverse of :func:`h_of_alpha` by bracketed root finding."""
    h = _check_h(h)
    lo = 1e-300
    hi = math.acosh(max(1.0, 1.0 / h)) + 2.0
    while h_of_alpha(hi) > h:
        hi *= 2.0
    return brentq(lambda a: h_of_alpha(a) - h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def params_of_alpha(alpha: float, branch: Branch | str = Branch.MINUS) -> SolitonParams:
    alpha = _check_alpha(alpha)
    c = math.cosh(alpha)
    s = math.sinh(alpha)
    denom = 1.0 + 2.0 * c * c
    psi0 = 1.0 / math.sqrt(2.0 * denom)
    amp_A = math.sqrt(2.0) * s / math.sqrt(denom)
    return SolitonParams(alpha, h_of_alpha(alpha), psi0, amp_A, Branch(branch))


def params_of_h(h: float, branch: Branch | str = Branch.MINUS) -> SolitonParams:
    return params_of_alpha(alpha_of_h(h), branch)


def background_roots(h: float) -> tuple[float, float, float]:
    """Sorted real roots of ``2 psi^3 - psi + h = 0``.

    The background ``psi0`` of both solitons is the smallest positive root.
    """
    h = _check_h(h)
    # psi^3 - psi/2 + h/2 = 0, trigonometric form of the three real roots
    p, q = -0.5, 0.5 * h
    amp = 2.0 * math.sqrt(-p / 3.0)
    theta = math.acos(3.0 * q / (2.0 * p) * math.sqrt(-3.0 / p)) / 3.0
    roots = []
    for k in range(3):
        r = amp * math.cos(theta - 2.0 * math.pi * k / 3.0)
        for _ in range(2):
            f = 2.0 * r**3 - r + h
            df = 6.0 * r * r - 1.0
            if df != 0.0:
                r -= f / df
        roots.append(r)
    return tuple(sorted(roots))


def _decay_terms(params: SolitonParams, x: np.ndarray):
    """Overflow-free pieces of ``phi`` written with ``E = exp(-A|x|)``."""
    c = math.cosh(params.alpha)
    s = math.sinh(params.alpha)
    sgn = params.branch.sign
    E = np.exp(-params.amp_A * np.abs(x))
    Q = 2.0 * E + sgn * c * (1.0 + E * E)  # = 2E (1 +- c cosh(Ax))
    return c, s, sgn, E, Q


def phi_values(params: SolitonParams, x: np.ndarray) -> np.ndarray:
    c, s, sgn, E, Q = _decay_terms(params, x)
    return 4.0 * s * s * E / Q


def u_prime_values(params: SolitonParams, x: np.ndarray) -> np.ndarray:
    if params.is_nls_limit:
        return -np.tanh(x) / np.cosh(x)
    c, s, sgn, E, Q = _decay_terms(params, x)
    dphi = -sgn * 4.0 * s * s * c * params.amp_A * np.sign(x) * (1.0 - E * E) * E / (Q * Q)
    return params.psi0 * dphi


def du_dalpha(params: SolitonParams, x: np.ndarray) -> np.ndarray:
    """Closed-form ``d u / d alpha`` at fixed ``x``."""
    if params.is_nls_limit:
        raise DomainError("d/dalpha is undefined at the h = 0 limit")
    c, s, sgn, E, Q = _decay_terms(params, x)
    denom = 1.0 + 2.0 * c * c
    dpsi0 = -4.0 * c * s * (2.0 * denom) ** -1.5
    dA = 3.0 * math.sqrt(2.0) * c * denom**-1.5
    x = np.asarray(x, dtype=float)
    N = 2.0 * s * s
    dN = 4.0 * s * c
    # d/dalpha of 2E(1 +- c cosh(Ax)), with the 2E factor folded in
    R = sgn * (s * (1.0 + E * E) + c * dA * np.abs(x) * (1.0 - E * E))
    phi = 2.0 * E * N / Q
    dphi = 2.0 * E * (dN * Q - N * R) / (Q * Q)
    return dpsi0 * (1.0 + phi) + params.psi0 * dphi


def build_profile(params: SolitonParams, grid: ProfileGrid) -> SolitonProfile:
    grid.check_decay(params.amp_A)
    x = grid.x
    if params.is_nls_limit:
        u = 1.0 / np.cosh(x)
        phi = u.copy()
    else:
        phi = phi_values(params, x)
        u = params.psi0 * (1.0 + phi)
    return SolitonProfile(params, grid, u, phi, u_prime_values(params, x))


def nls_profile(grid: ProfileGrid) -> SolitonProfile:
    return build_profile(SolitonParams.nls_limit(), grid)


def second_derivative(values: np.ndarray, grid: ProfileGrid) -> np.ndarray:
    """4th-order ``f''`` at the points where the full stencil fits.

    Returns an array aligned with ``values``; entries without a complete
    stencil are NaN.  On ``EVEN`` grids the reflection supplies the points
    left of ``x = 0``.
    """
    f = np.asarray(values, dtype=float)
    if grid.parity is Parity.EVEN:
        f = np.concatenate([f[2:0:-1], f])
    out = np.full(f.shape, np.nan)
    acc = np.zeros(f.size - 4)
    for k, w in enumerate(_D2_STENCIL):
        acc += w * f[k: f.size - 4 + k]
    out[2:-2] = acc / grid.spacing**2
    if grid.parity is Parity.EVEN:
        out = out[2:]
    return out


def profile_residual(profile: SolitonProfile) -> float:
    """Max-norm defect of ``-u'' + u - 2u^3 - h`` over the interior points."""
    u = profile.u_values
    d2 = second_derivative(u, profile.grid)
    r = -d2 + u - 2.0 * u**3 - profile.params.h
    return float(np.nanmax(np.abs(r)))
