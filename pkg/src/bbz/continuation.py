"""Continuation in alpha of the neutral gap eigenvalues of the minus branch.

The tracked pair ``+-i mu`` has negative Krein signature; a second pair
``+-i mu~`` of positive signature comes out of the band edge as alpha
decreases.  A sweep follows both by nearest-value matching, and
:func:`detect_collision` bisects on the first alpha where they meet (or
``mu`` reaches the edge).

Two predictors are computed independently of the eigensolves: the small-h
coefficient ``mu0`` in ``mu ~ mu0 sqrt(h)`` and the slope ``d mu / d alpha``
from first-order perturbation of the eigenvector.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum

import numpy as np

from bbz.errors import CollisionProximityError, ConfigurationError, DiscretizationError
from bbz.operators import (
    DEFAULT_ZERO_TOL,
    OperatorLabel,
    assemble,
    d_matrix,
    lminus_quadratic_form,
    pin_kernel,
    solve_indefinite,
)
from bbz.profiles import (
    Branch,
    Parity,
    ProfileGrid,
    SolitonParams,
    SolitonProfile,
    build_profile,
    du_dalpha,
    h_of_alpha,
    nls_profile,
    params_of_alpha,
    params_of_h,
)
from bbz.spectra import EigenClass, Eigenpair, SpectrumReport, Tolerances, analyze

MIN_DEFAULT_ALPHA = 0.3

BRANCH_CSV_HEADER = (
    "alpha", "h", "mu", "krein", "edge", "gap_margin", "zero_mult",
    "kr", "kc", "ki_minus", "index_pass",
)


@dataclass(frozen=True)
class SweepConfig:
    alpha_min: float = 2.0
    alpha_max: float = 6.0
    steps: int = 100
    branch: Branch = Branch.MINUS
    n_points: int = 1024
    parity: Parity = Parity.EVEN
    half_length: float | None = None
    zero_tol: float = DEFAULT_ZERO_TOL
    re_tol: float = 1e-6
    edge_margin: float = 0.03
    collision_tol: float = 2e-3
    edge_tol: float = 2e-3
    bisect_tol: float = 1e-4
    quartet_probe: float = 0.03
    max_halvings: int = 4
    threads: int | None = None
    out_dir: str = "."

    def __post_init__(self):
        object.__setattr__(self, "branch", Branch(self.branch))
        object.__setattr__(self, "parity", Parity(self.parity))
        if not 0.0 < self.alpha_min < self.alpha_max:
            raise ConfigurationError(
                f"need 0 < alpha_min < alpha_max, got {self.alpha_min}, {self.alpha_max}"
            )
        if self.alpha_min < MIN_DEFAULT_ALPHA and self.half_length is None:
            raise ConfigurationError(
                f"alpha_min={self.alpha_min} < {MIN_DEFAULT_ALPHA} needs an explicit half_length"
            )
        if self.steps < 1:
            raise ConfigurationError("steps must be at least 1")
        for name in ("zero_tol", "re_tol", "collision_tol", "edge_tol", "bisect_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(zero_tol=self.zero_tol, re_tol=self.re_tol, edge_margin=self.edge_margin)

    @property
    def alphas(self) -> np.ndarray:
        """Sweep grid, from ``alpha_max`` down to ``alpha_min``."""
        return np.linspace(self.alpha_max, self.alpha_min, self.steps + 1)

    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get("BBZ_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigurationError(f"BBZ_THREADS must be an integer, got {env!r}") from None
        return os.cpu_count() or 1

    def grid_for(self, params: SolitonParams) -> ProfileGrid:
        return ProfileGrid.for_params(params, self.n_points, self.parity, self.half_length)

    def full_grid_for(self, params: SolitonParams) -> ProfileGrid:
        """A ``FULL`` grid with the same spacing as :meth:`grid_for`."""
        g = self.grid_for(params)
        if g.parity is Parity.FULL:
            return g
        return ProfileGrid(g.half_length, 2 * g.n_points - 1, Parity.FULL)


@dataclass
class BranchPoint:
    alpha: float
    h: float
    mu: float
    krein: int | None
    edge: float
    gap_margin: float
    zero_mult: int
    kr: int
    kc: int
    ki_minus: int
    index_pass: bool
    index_conditional: bool = False
    mu_tilde: float = math.nan
    quartet: complex | None = None
    d_value: float = math.nan
    lminus_form: float = math.nan
    flagged: bool = False
    gap_modes: tuple[tuple[float, int | None], ...] = ()

    @property
    def separation(self) -> float:
        return self.mu_tilde - self.mu

    def csv_row(self) -> tuple:
        return (self.alpha, self.h, self.mu, self.krein, self.edge, self.gap_margin,
                self.zero_mult, self.kr, self.kc, self.ki_minus, self.index_pass)


class CollisionKind(str, Enum):
    EIGENVALUE = "EigenvalueCollision"
    EDGE = "EdgeCollision"
    NONE = "NoneInRange"


@dataclass
class CollisionEvent:
    kind: CollisionKind
    alpha_star: float = math.nan
    h_star: float = math.nan
    bracket: tuple[float, float] = (math.nan, math.nan)
    quartet: complex | None = None
    quartet_point: BranchPoint | None = None
    min_separation: float = math.nan
    min_gap_margin: float = math.nan

    def to_dict(self) -> dict:
        q = []
        if self.quartet is not None:
            lam = self.quartet
            q = [{"re": s1 * lam.real, "im": s2 * lam.imag}
                 for s1 in (1, -1) for s2 in (1, -1)]
        out = {
            "alpha_star": self.alpha_star,
            "h_star": self.h_star,
            "kind": self.kind.value,
            "bracket": list(self.bracket),
            "quartet": q,
        }
        if self.kind is CollisionKind.NONE:
            out["min_separation"] = self.min_separation
            out["min_gap_margin"] = self.min_gap_margin
        return out


@dataclass
class SweepResult:
    config: SweepConfig
    points: list[BranchPoint]
    reports: list[SpectrumReport] = field(default_factory=list)


def _strip_vectors(report: SpectrumReport) -> SpectrumReport:
    for e in report.entries:
        e.pair.vector = None
    return report


def _point_from_report(params: SolitonParams, report: SpectrumReport,
                       config: SweepConfig) -> BranchPoint:
    modes = report.imaginary_gap_modes()
    quartets = [e.lam for e in report.of_class(EigenClass.COMPLEX)
                if e.lam.real > 0 and e.lam.imag > 0]
    kr, kc, ki = report.counts
    check = report.index_check
    point = BranchPoint(
        alpha=params.alpha,
        h=params.h,
        mu=math.nan,
        krein=None,
        edge=report.edge,
        gap_margin=math.nan,
        zero_mult=report.zero_multiplicity,
        kr=kr, kc=kc, ki_minus=ki,
        index_pass=bool(check.passed),
        index_conditional=check.conditional,
        quartet=min(quartets, key=lambda z: abs(z.imag)) if quartets else None,
        gap_modes=tuple((e.lam.imag, e.krein) for e in modes),
    )
    full = build_profile(params, config.full_grid_for(params))
    point.d_value = d_matrix(full, config.zero_tol)
    if params.branch is Branch.MINUS:
        point.lminus_form = lminus_quadratic_form(full)
    return point


def evaluate_point(alpha: float, config: SweepConfig) -> tuple[BranchPoint, SpectrumReport]:
    """Spectrum and branch bookkeeping at one alpha (mu not yet matched)."""
    params = params_of_alpha(float(alpha), config.branch)
    profile = build_profile(params, config.grid_for(params))
    report = analyze(profile, config.tolerances)
    point = _point_from_report(params, report, config)
    return point, _strip_vectors(report)


def _evaluate_star(args):
    return evaluate_point(*args)


def _map_points(alphas, config: SweepConfig) -> list[tuple[BranchPoint, SpectrumReport]]:
    workers = min(config.worker_count(), len(alphas))
    jobs = [(float(a), config) for a in alphas]
    if workers <= 1:
        return [_evaluate_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_star, jobs))


def _assign(point: BranchPoint, prev_mu: float | None, prev_tilde: float | None) -> None:
    """Match the Krein -1 and +1 gap modes to the tracked branches."""
    negative = [m for m, k in point.gap_modes if k == -1]
    if negative:
        mu = negative[0] if prev_mu is None else min(negative, key=lambda m: abs(m - prev_mu))
        point.mu, point.krein = mu, -1
        point.gap_margin = point.edge - mu
        above = [m for m, k in point.gap_modes if k == 1 and m > mu]
        if above:
            point.mu_tilde = (above[0] if prev_tilde is None
                              else min(above, key=lambda m: abs(m - prev_tilde)))
    else:
        point.flagged = True


def _track(points: list[tuple[BranchPoint, SpectrumReport]], config: SweepConfig,
           refine: bool = True) -> list[tuple[BranchPoint, SpectrumReport]]:
    out: list[tuple[BranchPoint, SpectrumReport]] = []
    prev_mu = prev_tilde = None
    queue = list(points)
    depth = {id(p): 0 for p in queue}
    while queue:
        item = queue.pop(0)
        point = item[0]
        _assign(point, prev_mu, prev_tilde)
        jump = 0.1 * point.edge
        if (refine and out and prev_mu is not None and not point.flagged
                and abs(point.mu - prev_mu) > jump and depth[id(item)] < config.max_halvings):
            mid = 0.5 * (out[-1][0].alpha + point.alpha)
            new = evaluate_point(mid, config)
            d = depth[id(item)] + 1
            depth[id(new)] = d
            depth[id(item)] = d
            queue[:0] = [new, item]
            continue
        out.append(item)
        if not point.flagged:
            prev_mu = point.mu
            prev_tilde = point.mu_tilde if math.isfinite(point.mu_tilde) else prev_tilde
        else:
            prev_tilde = None
    return out


def sweep(config: SweepConfig) -> SweepResult:
    """Evaluate the alpha grid (parallel map) and track the gap branches in order."""
    tracked = _track(_map_points(config.alphas, config), config)
    return SweepResult(config, [p for p, _ in tracked], [r for _, r in tracked])


def _state(point: BranchPoint, config: SweepConfig) -> str:
    if point.flagged:
        return "eigen" if point.kc > 0 else "edge"
    if math.isfinite(point.mu_tilde) and point.separation < config.collision_tol:
        return "eigen"
    if point.gap_margin < config.edge_tol:
        return "edge"
    return "pre"


def detect_collision(points: list[BranchPoint], config: SweepConfig) -> CollisionEvent:
    """Bisect on the first alpha (from above) where the tracked pair leaves the pre-collision state."""
    ordered = sorted(points, key=lambda p: -p.alpha)
    hi = lo = None
    for a, b in zip(ordered, ordered[1:]):
        if _state(a, config) == "pre" and _state(b, config) != "pre":
            hi, lo = a, b
            break
    if hi is None:
        seps = [p.separation for p in ordered if math.isfinite(p.separation)]
        margins = [p.gap_margin for p in ordered if math.isfinite(p.gap_margin)]
        return CollisionEvent(
            CollisionKind.NONE,
            min_separation=min(seps) if seps else math.nan,
            min_gap_margin=min(margins) if margins else math.nan,
        )
    while hi.alpha - lo.alpha > config.bisect_tol:
        mid, _ = evaluate_point(0.5 * (hi.alpha + lo.alpha), config)
        _assign(mid, hi.mu, hi.mu_tilde if math.isfinite(hi.mu_tilde) else None)
        if _state(mid, config) == "pre":
            hi = mid
        else:
            lo = mid
    kind = CollisionKind.EIGENVALUE if _state(lo, config) == "eigen" else CollisionKind.EDGE
    alpha_star = 0.5 * (hi.alpha + lo.alpha)
    event = CollisionEvent(kind, alpha_star, h_of_alpha(alpha_star), (lo.alpha, hi.alpha))
    probe_alpha = alpha_star - config.quartet_probe
    if probe_alpha > 0:
        probe, _ = evaluate_point(probe_alpha, config)
        _assign(probe, None, None)
        event.quartet_point = probe
        event.quartet = probe.quartet
    return event


@dataclass(frozen=True)
class SmallHResult:
    mu0: float
    numerator: float
    denominator: float


def small_h_mu0(grid: ProfileGrid | None = None) -> SmallHResult:
    """Leading coefficient ``mu0`` of ``mu(h) ~ mu0 sqrt(h)`` on the minus branch.

    Uses the ``h = 0`` operators around ``u0 = sech``.  The first-order
    profile correction ``w`` solves ``L+ w = 1`` and tends to 1 at infinity;
    it is computed as ``1 + L+^{-1}[6 u0^2]``.  On the minus branch
    ``u = -u0 + h w``, so the h-derivative of the ``L-`` potential is
    ``+4 u0 w``.
    """
    if grid is None:
        grid = ProfileGrid(40.0, 2048, Parity.EVEN)
    prof = nls_profile(grid)
    u0 = prof.u_values
    lp = assemble(prof, OperatorLabel.LPLUS)
    if grid.parity is Parity.FULL:
        lp = pin_kernel(lp, prof.u_prime_values)
    w = 1.0 + solve_indefinite(lp, 6.0 * u0**2)
    numerator = grid.inner(4.0 * u0 * w * u0, u0)
    denominator = grid.inner(solve_indefinite(lp, u0), u0)
    if not numerator < 0:
        raise DiscretizationError(f"<V- u0, u0> = {numerator:.6g} is not negative")
    if not denominator < 0:
        raise DiscretizationError(f"<L+^-1 u0, u0> = {denominator:.6g} is not negative")
    return SmallHResult(math.sqrt(numerator / denominator), numerator, denominator)


def gap_mu(profile: SolitonProfile, tol: Tolerances = Tolerances()) -> tuple[float, Eigenpair]:
    """The negative-Krein gap eigenvalue ``i mu`` (``mu > 0``) and its eigenpair."""
    report = analyze(profile, tol)
    modes = report.imaginary_gap_modes(krein=-1)
    if not modes:
        raise DiscretizationError(
            f"no negative-Krein gap eigenvalue at alpha={profile.params.alpha:.6g}"
        )
    return modes[0].lam.imag, modes[0].pair


def small_h_ratios(hs=(1e-2, 3e-3, 1e-3), n_points: int = 1024,
                   parity: Parity = Parity.EVEN) -> list[tuple[float, float, float]]:
    """``(h, mu(h), mu(h)/sqrt(h))`` along the minus branch."""
    out = []
    for h in hs:
        params = params_of_h(h, Branch.MINUS)
        prof = build_profile(params, ProfileGrid.for_params(params, n_points, parity))
        mu, _ = gap_mu(prof)
        out.append((h, mu, mu / math.sqrt(h)))
    return out


def extrapolate_ratio(ratios: list[tuple[float, float, float]]) -> float:
    """Intercept of a least-squares line of ``mu/sqrt(h)`` against ``h``.

    The expansion of the imaginary eigenvalue runs in odd powers of
    ``sqrt(h)``, so the ratio is ``mu0 + O(h)``.
    """
    hs = np.array([r[0] for r in ratios])
    y = np.array([r[2] for r in ratios])
    slope, intercept = np.polyfit(hs, y, 1)
    return float(intercept)


@dataclass(frozen=True)
class SlopeEstimate:
    r: float
    numerator: float
    symplectic: float


def slope_predictor(profile: SolitonProfile, pair: Eigenpair,
                    resolution: float = 1e-10) -> SlopeEstimate:
    """First-order ``d mu / d alpha`` from the eigenvector of ``i mu``.

    ``r * i<z, J z> = -<diag(V+, V-) z, z>`` with ``V+ = 12 u u_alpha`` and
    ``V- = 4 u u_alpha``, i.e. minus the alpha-derivatives of the two
    potentials.
    """
    if pair.vector is None:
        raise ValueError("slope predictor needs an eigenvector")
    lam = pair.lam
    if abs(lam.real) > 1e-6 or lam.imag <= 0:
        raise ValueError(f"expected an eigenvalue i mu with mu > 0, got {lam}")
    grid = profile.grid
    u = profile.u_values
    ua = du_dalpha(profile.params, grid.x)
    h = grid.spacing
    z1, z2 = pair.split()
    numerator = h * float(np.sum(12.0 * u * ua * np.abs(z1) ** 2 + 4.0 * u * ua * np.abs(z2) ** 2))
    symplectic = -2.0 * h * float(np.sum(z1 * np.conj(z2)).imag)
    if abs(symplectic) < resolution:
        raise CollisionProximityError(
            f"i<z, Jz> = {symplectic:.3e} is below resolution; the eigenvalue is at a collision"
        )
    return SlopeEstimate(-numerator / symplectic, numerator, symplectic)


def finite_difference_slope(alpha: float, step: float = 0.01, n_points: int = 1024,
                            parity: Parity = Parity.EVEN) -> float:
    """Centered difference of ``mu`` on a common grid."""
    p0 = params_of_alpha(alpha, Branch.MINUS)
    grid = ProfileGrid.for_params(p0, n_points, parity)
    mus = []
    for a in (alpha + step, alpha - step):
        mus.append(gap_mu(build_profile(params_of_alpha(a, Branch.MINUS), grid))[0])
    return (mus[0] - mus[1]) / (2.0 * step)


@dataclass(frozen=True)
class MonotonicityReport:
    intervals: tuple[tuple[float, float, int], ...]
    tail_start: float
    tail_decreasing: bool

    def to_dict(self) -> dict:
        return {"intervals": [list(i) for i in self.intervals],
                "tail_start": self.tail_start, "tail_decreasing": self.tail_decreasing}


def mu_monotonicity_report(points: list[BranchPoint], tail_start: float = 4.0) -> MonotonicityReport:
    """Sign of ``d mu / d alpha`` per interval between tracked points."""
    tracked = sorted((p for p in points if math.isfinite(p.mu)), key=lambda p: p.alpha)
    intervals = []
    for a, b in zip(tracked, tracked[1:]):
        d = b.mu - a.mu
        intervals.append((a.alpha, b.alpha, int(np.sign(d))))
    tail = [s for a0, _, s in intervals if a0 >= tail_start]
    return MonotonicityReport(tuple(intervals), tail_start, bool(tail) and all(s < 0 for s in tail))


def config_with(config: SweepConfig, **changes) -> SweepConfig:
    return replace(config, **changes)


def config_dict(config: SweepConfig) -> dict:
    d = asdict(config)
    d["branch"] = config.branch.value
    d["parity"] = config.parity.value
    return d
