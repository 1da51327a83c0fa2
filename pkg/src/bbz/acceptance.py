"""Acceptance checks shared by ``bbz verify`` and the test suite.

Each check returns a :class:`CheckResult`; the expensive default sweep is
computed once per :class:`AcceptanceContext` and reused.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from bbz.continuation import (
    CollisionEvent,
    CollisionKind,
    SweepConfig,
    SweepResult,
    detect_collision,
    extrapolate_ratio,
    finite_difference_slope,
    gap_mu,
    slope_predictor,
    small_h_mu0,
    small_h_ratios,
    sweep,
)
from bbz.io import dumps_csv, dumps_json
from bbz.operators import (
    OperatorLabel,
    assemble,
    d_matrix,
    essential_edge,
    kernel_eigenvalue,
    lminus_quadratic_form,
    morse_index,
    phi_identity_residual,
    pin_kernel,
    solve_indefinite,
)
from bbz.profiles import (
    Branch,
    Parity,
    ProfileGrid,
    alpha_of_h,
    build_profile,
    h_of_alpha,
    nls_profile,
    params_of_alpha,
    profile_residual,
)
from bbz.spectra import EigenClass, Tolerances, analyze

ALPHA_STAR_REF = 2.5327
H_STAR_REF = 0.07749


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.number:2d}  {self.name}: {self.detail}"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "pass": self.passed,
                "detail": self.detail, "values": self.values}


@dataclass
class AcceptanceContext:
    sweep_config: SweepConfig = field(default_factory=SweepConfig)
    _sweep: SweepResult | None = None
    _collision: CollisionEvent | None = None

    @property
    def sweep_result(self) -> SweepResult:
        if self._sweep is None:
            self._sweep = sweep(self.sweep_config)
        return self._sweep

    @property
    def collision(self) -> CollisionEvent:
        if self._collision is None:
            self._collision = detect_collision(self.sweep_result.points, self.sweep_config)
        return self._collision


def _fmt(x: float) -> str:
    return format(x, ".4g")


def check_profile_exactness(ctx: AcceptanceContext) -> CheckResult:
    rows = {}
    ok = True
    for alpha in (0.5, 1.0, 2.0, 3.0):
        for branch in Branch:
            p = params_of_alpha(alpha, branch)
            coarse, fine = (profile_residual(build_profile(p, ProfileGrid.for_params(p, n)))
                            for n in (2048, 4096))
            ratio = coarse / fine
            good = fine < 1e-5 and 8.0 <= ratio <= 32.0
            ok &= good
            rows[f"{branch.value}@{alpha}"] = {"n2048": coarse, "n4096": fine, "ratio": ratio}
    worst = max(r["n4096"] for r in rows.values())
    ratios = [r["ratio"] for r in rows.values()]
    return CheckResult(1, "profile exactness", ok,
                       f"max residual {_fmt(worst)} at n=4096, refinement ratios "
                       f"{_fmt(min(ratios))}..{_fmt(max(ratios))}", rows)


def check_parameter_identities(ctx: AcceptanceContext) -> CheckResult:
    rng = np.random.default_rng(20240601)
    alphas = rng.uniform(0.3, 8.0, 1000)
    e_h = e_a = e_rt = 0.0
    for a in alphas:
        p = params_of_alpha(float(a))
        e_h = max(e_h, abs(p.h - (p.psi0 - 2 * p.psi0**3)) / p.h)
        e_a = max(e_a, abs(p.amp_A**2 + 6 * p.psi0**2 - 1.0))
        e_rt = max(e_rt, abs(h_of_alpha(alpha_of_h(p.h)) - p.h))
    ok = e_h < 1e-12 and e_a < 1e-12 and e_rt < 1e-12
    vals = {"h_identity": e_h, "A_identity": e_a, "round_trip": e_rt}
    return CheckResult(2, "parameter identities", ok,
                       f"h rel {_fmt(e_h)}, A^2+6psi0^2 {_fmt(e_a)}, round trip {_fmt(e_rt)}", vals)


def check_morse_table(ctx: AcceptanceContext) -> CheckResult:
    expected = {Branch.PLUS: (1, 0), Branch.MINUS: (1, 1)}
    rows = {}
    ok = True
    worst_kernel = 0.0
    for alpha in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0):
        for branch in Branch:
            p = params_of_alpha(alpha, branch)
            prof = build_profile(p, ProfileGrid.for_params(p, 4096))
            lp = pin_kernel(assemble(prof, OperatorLabel.LPLUS), prof.u_prime_values)
            lm = assemble(prof, OperatorLabel.LMINUS)
            got = (morse_index(lp).n_negative, morse_index(lm).n_negative)
            kern = abs(kernel_eigenvalue(lp))
            worst_kernel = max(worst_kernel, kern)
            ok &= got == expected[branch] and kern < 1e-5
            rows[f"{branch.value}@{alpha}"] = {"lplus": got[0], "lminus": got[1], "kernel": kern}
    return CheckResult(3, "Morse indices of L+ and L-", ok,
                       f"plus (1,0), minus (1,1) at 7 alphas; max |kernel eigenvalue| {_fmt(worst_kernel)}",
                       rows)


def _default_report(alpha: float, branch: Branch):
    p = params_of_alpha(alpha, branch)
    return analyze(build_profile(p, ProfileGrid.for_params(p, 2048)))


def check_plus_instability(ctx: AcceptanceContext) -> CheckResult:
    tol = Tolerances()
    rows = {}
    ok = True
    for alpha in (1.0, 2.0, 3.0):
        rep = _default_report(alpha, Branch.PLUS)
        unstable = [e.lam for e in rep.entries
                    if e.cls is not EigenClass.ZERO and e.lam.real > tol.re_tol]
        lams = np.array([e.lam for e in rep.entries])
        good = len(unstable) == 1
        if good:
            lam = unstable[0]
            mirror = float(np.min(np.abs(lams + lam)))
            good = abs(lam.imag) < tol.re_tol and mirror < 1e-6
        chk = rep.index_check
        good &= chk.passed and chk.lhs == 1 and rep.counts == (1, 0, 0)
        ok &= good
        rows[str(alpha)] = {"unstable": [[z.real, z.imag] for z in unstable],
                            "lhs": chk.lhs, "rhs": chk.rhs}
    lam_str = ", ".join(_fmt(r["unstable"][0][0]) for r in rows.values() if r["unstable"])
    return CheckResult(4, "u+ instability", ok,
                       f"one real eigenvalue per alpha ({lam_str}), index 1 = 1 - 0", rows)


def check_minus_stable(ctx: AcceptanceContext) -> CheckResult:
    rows = {}
    ok = True
    for alpha in (3.0, 4.0, 5.0):
        rep = _default_report(alpha, Branch.MINUS)
        neg = rep.imaginary_gap_modes(krein=-1)
        chk = rep.index_check
        good = (rep.max_abs_real <= 1e-6 and len(neg) == 1 and rep.zero_multiplicity == 2
                and rep.counts == (0, 0, 1) and chk.passed and chk.lhs == 2)
        ok &= good
        rows[str(alpha)] = {"mu": neg[0].lam.imag if neg else None,
                            "max_abs_real": rep.max_abs_real,
                            "zero_multiplicity": rep.zero_multiplicity,
                            "lhs": chk.lhs, "rhs": chk.rhs}
    mus = ", ".join(_fmt(r["mu"]) for r in rows.values() if r["mu"] is not None)
    return CheckResult(5, "u- stable regime", ok,
                       f"mu = {mus} with Krein -1, zero multiplicity 2, index 2 = 2 - 0", rows)


def check_nls_limit(ctx: AcceptanceContext) -> CheckResult:
    prof = nls_profile(ProfileGrid(40.0, 2048, Parity.FULL))
    rep = analyze(prof)
    x = prof.x
    u0 = prof.u_values
    up = prof.u_prime_values
    lp = pin_kernel(assemble(prof, OperatorLabel.LPLUS), up)
    lm = pin_kernel(assemble(prof, OperatorLabel.LMINUS), u0)
    # closed forms from the scaling family sqrt(w) sech(sqrt(w) x)
    lp_inv_u0 = solve_indefinite(lp, u0)
    lm_inv_up = solve_indefinite(lm, up)
    oracle_p = -0.5 * (u0 + x * up)
    oracle_m = -0.5 * x * u0
    form_p = prof.grid.inner(lp_inv_u0, u0)
    form_m = prof.grid.inner(lm_inv_up, up)
    ok = (rep.zero_multiplicity == 4
          and abs(rep.essential_cluster_min - 1.0) <= 0.02
          and abs(form_p + 0.5) <= 1e-3 and abs(form_m - 0.5) <= 1e-3)
    vals = {"zero_multiplicity": rep.zero_multiplicity,
            "essential_cluster_min": rep.essential_cluster_min,
            "lplus_form": form_p, "lminus_form": form_m,
            "lplus_solution_error": float(np.max(np.abs(lp_inv_u0 - oracle_p))),
            "lminus_solution_error": float(np.max(np.abs(lm_inv_up - oracle_m)))}
    return CheckResult(6, "h=0 NLS limit", ok,
                       f"zero multiplicity {rep.zero_multiplicity}, cluster onset "
                       f"{_fmt(rep.essential_cluster_min)}, <L+^-1 u0,u0> {_fmt(form_p)}, "
                       f"<L-^-1 u0',u0'> {_fmt(form_m)}", vals)


def check_essential_edge(ctx: AcceptanceContext) -> CheckResult:
    rows = {}
    ok = True
    for alpha in (1.0, 2.0, 3.0):
        for branch in Branch:
            p = params_of_alpha(alpha, branch)
            edge = essential_edge(p.psi0)
            base = ProfileGrid.for_params(p, 1024, Parity.EVEN)
            fine = ProfileGrid(2.0 * base.half_length, 2 * base.n_points - 1, Parity.EVEN)
            errs = []
            for g in (base, fine):
                rep = analyze(build_profile(p, g))
                errs.append(abs(rep.essential_cluster_min - edge) / edge)
            good = errs[0] <= 0.02 and errs[1] < errs[0]
            ok &= good
            rows[f"{branch.value}@{alpha}"] = {"edge": edge, "rel_err": errs[0], "rel_err_refined": errs[1]}
    worst = max(r["rel_err"] for r in rows.values())
    grew = [k for k, r in rows.items() if not r["rel_err_refined"] < r["rel_err"]]
    trend = ("smaller after doubling n and L" if not grew
             else "not smaller after doubling n and L at " + ", ".join(grew))
    return CheckResult(7, "essential edge", ok, f"max relative offset {_fmt(worst)}, {trend}", rows)


def check_small_h(ctx: AcceptanceContext) -> CheckResult:
    pred = small_h_mu0()
    ratios = small_h_ratios()
    extrap = extrapolate_ratio(ratios)
    rel = abs(extrap - pred.mu0) / pred.mu0
    ok = rel <= 0.05 and pred.numerator < 0 and pred.denominator < 0
    vals = {"mu0": pred.mu0, "numerator": pred.numerator, "denominator": pred.denominator,
            "ratios": [list(r) for r in ratios], "extrapolated": extrap, "rel_err": rel}
    return CheckResult(8, "small-h asymptotics", ok,
                       f"mu0 {_fmt(pred.mu0)}, extrapolated mu/sqrt(h) {_fmt(extrap)} "
                       f"(rel {_fmt(rel)}), <V- u0,u0> {_fmt(pred.numerator)}, "
                       f"<L+^-1 u0,u0> {_fmt(pred.denominator)}", vals)


def check_collision(ctx: AcceptanceContext) -> CheckResult:
    ev = ctx.collision
    qp = ev.quartet_point
    ok = (ev.kind is CollisionKind.EIGENVALUE
          and abs(ev.alpha_star / ALPHA_STAR_REF - 1.0) <= 0.02
          and abs(ev.h_star / H_STAR_REF - 1.0) <= 0.03
          and ev.quartet is not None and abs(ev.quartet.real) > ctx.sweep_config.re_tol
          and qp is not None and (qp.kr, qp.kc, qp.ki_minus) == (0, 1, 0) and qp.index_pass)
    vals = ev.to_dict()
    if qp is not None:
        vals["probe"] = {"alpha": qp.alpha, "kr": qp.kr, "kc": qp.kc, "ki_minus": qp.ki_minus,
                         "index_pass": qp.index_pass}
    q = ev.quartet
    qs = "none" if q is None else f"{_fmt(q.real)}{q.imag:+.4g}i"
    return CheckResult(9, "collision", ok,
                       f"{ev.kind.value} at alpha* {_fmt(ev.alpha_star)}, h* {_fmt(ev.h_star)}; "
                       f"quartet {qs} with kc=1, index 0+2+0 = 2-0", vals)


def check_slope(ctx: AcceptanceContext) -> CheckResult:
    rows = {}
    ok = True
    for alpha in (3.0, 5.0):
        p = params_of_alpha(alpha, Branch.MINUS)
        prof = build_profile(p, ProfileGrid.for_params(p, 1024, Parity.EVEN))
        _, pair = gap_mu(prof)
        r = slope_predictor(prof, pair).r
        fd = finite_difference_slope(alpha)
        rel = abs(r - fd) / abs(fd)
        ok &= rel <= 0.05
        rows[str(alpha)] = {"predicted": r, "finite_difference": fd, "rel_err": rel}
    desc = ", ".join(f"{a}: {_fmt(v['predicted'])} vs {_fmt(v['finite_difference'])}"
                     for a, v in rows.items())
    return CheckResult(10, "slope predictor", ok, desc, rows)


def check_sign_claims(ctx: AcceptanceContext) -> CheckResult:
    cfg = ctx.sweep_config
    d_min = math.inf
    q_max = -math.inf
    phi_rel = 0.0
    for alpha in cfg.alphas:
        for branch in Branch:
            p = params_of_alpha(float(alpha), branch)
            prof = build_profile(p, cfg.full_grid_for(p))
            d_min = min(d_min, d_matrix(prof))
            if branch is Branch.MINUS:
                q_max = max(q_max, lminus_quadratic_form(prof))
                scale = float(np.max(np.abs(prof.phi_values)))
                phi_rel = max(phi_rel, phi_identity_residual(prof) / scale)
    # the absolute residual scales with |phi| ~ e^alpha; the bound applies at n=4096
    phi_max = 0.0
    for alpha in (1.0, 3.0):
        p = params_of_alpha(alpha, Branch.MINUS)
        phi_max = max(phi_max, phi_identity_residual(build_profile(p, ProfileGrid.for_params(p, 4096))))
    ok = d_min > 0 and q_max < 0 and phi_max < 1e-4
    vals = {"d_min": d_min, "lminus_form_max": q_max, "phi_identity_max": phi_max,
            "phi_identity_relative_sweep_max": phi_rel, "points": len(cfg.alphas)}
    return CheckResult(11, "sign claims", ok,
                       f"min D {_fmt(d_min)} > 0, max <L- phi,phi> {_fmt(q_max)} < 0, "
                       f"phi identity residual {_fmt(phi_max)}", vals)


def _representative_outputs() -> dict[str, str]:
    p = params_of_alpha(3.0, Branch.MINUS)
    prof = build_profile(p, ProfileGrid.for_params(p, 512, Parity.EVEN))
    rep = analyze(prof)
    return {
        "profile.csv": dumps_csv(("x", "u", "phi", "uprime"), prof.records()),
        "spectrum.json": dumps_json(rep.to_dict()),
        "spectrum.csv": dumps_csv(("re", "im", "krein", "residual", "class"), rep.csv_rows()),
    }


def check_determinism(ctx: AcceptanceContext) -> CheckResult:
    first, second = _representative_outputs(), _representative_outputs()
    with tempfile.TemporaryDirectory() as tmp:
        paths = []
        for run, outs in enumerate((first, second)):
            for name, text in outs.items():
                path = Path(tmp) / str(run) / name
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text, encoding="utf-8")
                paths.append(path)
        half = len(paths) // 2
        same = all(a.read_bytes() == b.read_bytes() for a, b in zip(paths[:half], paths[half:]))
    return CheckResult(12, "determinism", same,
                       f"{len(first)} output files byte-identical across two runs",
                       {"files": sorted(first)})


CHECKS: list[tuple[int, str, Callable[[AcceptanceContext], CheckResult]]] = [
    (1, "profile exactness", check_profile_exactness),
    (2, "parameter identities", check_parameter_identities),
    (3, "Morse indices of L+ and L-", check_morse_table),
    (4, "u+ instability", check_plus_instability),
    (5, "u- stable regime", check_minus_stable),
    (6, "h=0 NLS limit", check_nls_limit),
    (7, "essential edge", check_essential_edge),
    (8, "small-h asymptotics", check_small_h),
    (9, "collision", check_collision),
    (10, "slope predictor", check_slope),
    (11, "sign claims", check_sign_claims),
    (12, "determinism", check_determinism),
]


def run_check(number: int, ctx: AcceptanceContext) -> CheckResult:
    for num, name, fn in CHECKS:
        if num == number:
            try:
                return fn(ctx)
            except Exception as exc:  # a crash is a failed criterion, not an aborted suite
                return CheckResult(num, name, False, f"error: {type(exc).__name__}: {exc}")
    raise KeyError(number)


def run_all(ctx: AcceptanceContext | None = None, on_result=None) -> list[CheckResult]:
    ctx = ctx or AcceptanceContext()
    results = []
    for num, _, _ in CHECKS:
        res = run_check(num, ctx)
        if on_result is not None:
            on_result(res)
        results.append(res)
    return results
