import math

import numpy as np
import pytest

from bbz.continuation import (
    BRANCH_CSV_HEADER,
    BranchPoint,
    CollisionKind,
    SweepConfig,
    detect_collision,
    extrapolate_ratio,
    gap_mu,
    mu_monotonicity_report,
    slope_predictor,
    small_h_mu0,
    sweep,
)
from bbz.errors import CollisionProximityError, ConfigurationError
from bbz.profiles import Branch, Parity, ProfileGrid, build_profile, h_of_alpha, params_of_alpha
from bbz.spectra import Eigenpair


def _point(alpha, mu, tilde=math.nan, edge=1.0, flagged=False, kc=0):
    return BranchPoint(alpha=alpha, h=h_of_alpha(alpha), mu=mu, krein=-1, edge=edge,
                       gap_margin=edge - mu, zero_mult=0, kr=0, kc=kc, ki_minus=1,
                       index_pass=True, mu_tilde=tilde, flagged=flagged)


def test_config_validation(monkeypatch):
    with pytest.raises(ConfigurationError):
        SweepConfig(alpha_min=0.2)
    SweepConfig(alpha_min=0.2, half_length=300.0)
    with pytest.raises(ConfigurationError):
        SweepConfig(alpha_min=3.0, alpha_max=2.0)
    with pytest.raises(ConfigurationError):
        SweepConfig(steps=0)
    monkeypatch.setenv("BBZ_THREADS", "3")
    assert SweepConfig().worker_count() == 3
    assert SweepConfig(threads=2).worker_count() == 2
    monkeypatch.setenv("BBZ_THREADS", "many")
    with pytest.raises(ConfigurationError):
        SweepConfig().worker_count()


def test_alpha_grid_descends():
    a = SweepConfig(alpha_min=2.0, alpha_max=6.0, steps=8).alphas
    assert a[0] == 6.0 and a[-1] == 2.0 and np.all(np.diff(a) < 0)


def test_small_h_mu0():
    r = small_h_mu0()
    assert r.denominator == pytest.approx(-0.5, abs=1e-3)
    assert r.numerator < 0
    assert r.mu0 == pytest.approx(math.sqrt(r.numerator / r.denominator))
    full = small_h_mu0(ProfileGrid(40.0, 4095, Parity.FULL))
    assert full.mu0 == pytest.approx(r.mu0, rel=1e-6)


def test_extrapolation_recovers_linear_model():
    rows = [(h, 0.0, 2.0 + 3.0 * h) for h in (1e-2, 3e-3, 1e-3)]
    assert extrapolate_ratio(rows) == pytest.approx(2.0, abs=1e-12)


def test_slope_predictor_sign_recorded():
    p = params_of_alpha(4.0, Branch.MINUS)
    prof = build_profile(p, ProfileGrid.for_params(p, 1024, Parity.EVEN))
    _, pair = gap_mu(prof)
    est = slope_predictor(prof, pair)
    assert est.r < 0
    assert est.symplectic < 0  # negative Krein signature pre-collision


def test_slope_predictor_collision_proximity():
    p = params_of_alpha(4.0, Branch.MINUS)
    prof = build_profile(p, ProfileGrid.for_params(p, 64, Parity.EVEN))
    z = np.concatenate([np.ones(64), np.zeros(64)]).astype(complex)
    with pytest.raises(CollisionProximityError):
        slope_predictor(prof, Eigenpair(0.5j, z, 0.0))
    with pytest.raises(ValueError):
        slope_predictor(prof, Eigenpair(0.5 + 0j, z, 0.0))


def test_detect_collision_none_in_range():
    cfg = SweepConfig(alpha_min=4.0, alpha_max=6.0, steps=4)
    pts = [_point(6.0, 0.12), _point(5.0, 0.2), _point(4.0, 0.35)]
    ev = detect_collision(pts, cfg)
    assert ev.kind is CollisionKind.NONE
    assert ev.min_gap_margin == pytest.approx(0.65)
    d = ev.to_dict()
    assert d["kind"] == "NoneInRange" and d["quartet"] == []


def test_restricted_sweep_is_stable_regime():
    cfg = SweepConfig(alpha_min=4.0, alpha_max=6.0, steps=4, n_points=512)
    res = sweep(cfg)
    assert detect_collision(res.points, cfg).kind is CollisionKind.NONE
    assert all(p.krein == -1 and p.index_pass for p in res.points)
    rep = mu_monotonicity_report(res.points)
    assert rep.tail_decreasing


def test_mu_tends_to_zero():
    mus = {}
    for a in (5.0, 8.0):
        p = params_of_alpha(a, Branch.MINUS)
        mus[a] = gap_mu(build_profile(p, ProfileGrid.for_params(p, 1024, Parity.EVEN)))[0]
    assert mus[8.0] < mus[5.0]


def test_monotonicity_report_on_synthetic_branch():
    pts = [_point(a, 1.0 / a) for a in (3.0, 4.0, 5.0, 6.0)]
    rep = mu_monotonicity_report(pts, tail_start=4.0)
    assert [s for *_, s in rep.intervals] == [-1, -1, -1]
    assert rep.tail_decreasing
    pts[-1].mu = 0.5
    assert not mu_monotonicity_report(pts, tail_start=4.0).tail_decreasing


def test_branch_csv_header():
    assert ",".join(BRANCH_CSV_HEADER) == "alpha,h,mu,krein,edge,gap_margin,zero_mult,kr,kc,ki_minus,index_pass"
    assert len(_point(3.0, 0.6).csv_row()) == len(BRANCH_CSV_HEADER)


# invariants of the default minus-branch sweep (shared with the acceptance tests)

def _tracked(ctx):
    return [p for p in ctx.sweep_result.points if not p.flagged]


def test_sweep_tracked_pair_inside_gap(acceptance_ctx):
    pts = _tracked(acceptance_ctx)
    assert pts
    assert all(0 < p.mu < p.edge and p.gap_margin > 0 for p in pts)


def test_sweep_krein_signs(acceptance_ctx):
    for p in _tracked(acceptance_ctx):
        assert p.krein == -1
        tilde = [k for m, k in p.gap_modes if m == p.mu_tilde]
        assert all(k == 1 for k in tilde)


def test_sweep_index_identity(acceptance_ctx):
    for p in acceptance_ctx.sweep_result.points:
        if not p.index_conditional:
            assert p.index_pass


def test_sweep_mu_bounded_below(acceptance_ctx):
    ev = acceptance_ctx.collision
    star = [p.mu for p in _tracked(acceptance_ctx) if p.alpha >= ev.alpha_star]
    assert min(star) > 0.1 * star[-1]


def test_sweep_mu_increases_towards_collision(acceptance_ctx):
    pts = [p for p in _tracked(acceptance_ctx) if p.alpha >= 2.6]
    mus = [p.mu for p in sorted(pts, key=lambda p: -p.alpha)]
    assert all(b > a for a, b in zip(mus, mus[1:]))


def test_sweep_post_collision_observed(acceptance_ctx):
    post = [p for p in acceptance_ctx.sweep_result.points if p.alpha < acceptance_ctx.collision.alpha_star]
    assert post and all(p.kc == 1 and p.quartet is not None for p in post)


def test_sweep_sign_claims(acceptance_ctx):
    for p in acceptance_ctx.sweep_result.points:
        assert p.d_value > 0 and p.lminus_form < 0


@pytest.mark.slow
def test_collision_bracket_stable():
    base = SweepConfig(alpha_min=2.4, alpha_max=2.8, steps=4)
    finer = SweepConfig(alpha_min=2.4, alpha_max=2.8, steps=8)
    a = detect_collision(sweep(base).points, base)
    b = detect_collision(sweep(finer).points, finer)
    assert a.kind is b.kind is CollisionKind.EIGENVALUE
    assert abs(a.alpha_star - b.alpha_star) < base.bisect_tol
