import math

import numpy as np
import pytest

from qproxim.algebra import character_delta, function_algebra, pure_state_sample
from qproxim.classical import FinitePointedMetricSpace, build_bridge, gh_pointed, random_space
from qproxim.lipschitz import ClassicalLip, Composite
from qproxim.opcore import Operator, opnorm
from qproxim.statemetrics import bl_lp_oracle
from qproxim.tunnels import (
    ExtentConfig,
    build_bridge_tunnel,
    compose,
    dh_upper,
    extent,
    geometric_r_grid,
    identity_tunnel,
    lift,
    metametric_upper,
    reverse,
    target_product_check,
    target_set_sample,
    tunnel_to_compact,
)

CFG = ExtentConfig(gap=1e-5)


def make_identity(n=4, lam=0.05, M=1.0, seed=0):
    rng = np.random.default_rng(seed)
    X = random_space(n, rng)
    alg = function_algebra(n, pin_index=X.base)
    lip = ClassicalLip(X)
    # plateau cutoff: 1 at the base, ramp down with slope <= lam
    e = Operator.diagonal(np.maximum(1.0 - lam * X.dist[X.base], 0.0))
    return identity_tunnel(alg, lip, e, M), X, lam


def test_identity_tunnel_extent_is_cutoff_term():
    t, X, lam = make_identity()
    rep = extent(t, CFG)
    lip_e = t.lipT.eval(t.e)
    assert rep.c3 == pytest.approx(2 * t.M * lip_e, abs=1e-12)
    assert rep.c1.upper <= 1e-9
    assert rep.c2_value == pytest.approx(0.0, abs=1e-9)
    assert rep.total.upper == pytest.approx(rep.c3, abs=1e-9)


def test_reverse_extent_matches():
    t, *_ = make_identity(seed=3)
    r = reverse(t)
    a, b = extent(t, CFG), extent(r, CFG)
    assert a.total.upper == pytest.approx(b.total.upper, abs=1e-8)
    assert a.c3 == pytest.approx(b.c3, abs=1e-12)
    rr = reverse(r)
    assert rr.pi is t.pi and rr.rho is t.rho


def test_key_lemma_on_identity():
    t, *_ = make_identity()
    rep = extent(t, CFG)
    assert opnorm(t.e) ** 2 <= 1 + rep.total.upper / t.M + 1e-8


def test_bridge_tunnel_extent_bounded_by_gh():
    rng = np.random.default_rng(7)
    for seed in range(3):
        X = random_space(3, np.random.default_rng(seed))
        Y = random_space(3, np.random.default_rng(seed + 100))
        gh, tag = gh_pointed(X, Y)
        bridge = build_bridge(X, Y)
        t = build_bridge_tunnel(X, Y, bridge)
        rep = extent(t, CFG)
        assert rep.total.upper <= 2 * gh + 1e-3, (rep.total.upper, gh)


def test_bridge_tunnel_same_space():
    X = random_space(4, np.random.default_rng(1))
    bridge = build_bridge(X, X, pairs=[(i, i) for i in range(X.n)], eps=1e-4)
    t = build_bridge_tunnel(X, X, bridge)
    rep = extent(t, CFG)
    assert rep.total.upper <= 2 * 1e-4 + 1e-6


def test_bridge_basepoint_mk_term():
    X = random_space(3, np.random.default_rng(5))
    Y = random_space(3, np.random.default_rng(6))
    bridge = build_bridge(X, Y)
    t = build_bridge_tunnel(X, Y, bridge)
    rep = extent(t, CFG)
    assert rep.c2_value <= bridge.eps + 1e-6


def test_lift_identity_morphism():
    alg = function_algebra(3)
    from qproxim.algebra import identity_morphism
    ident = identity_morphism(alg)
    a = Operator.diagonal([0.5, -0.2, 0.1])
    spec = Composite(1.0, ClassicalLip(random_space(3, np.random.default_rng(2))))
    d, val = lift(ident, a, spec)
    assert np.allclose(d.to_array(), a.to_array(), atol=1e-8)


def test_lift_restriction_is_mcshane_quality():
    # lifting through C(Z) -> C(X) should match the McShane extension value
    from qproxim.algebra import restriction_morphism
    from qproxim.classical import classical_lip, mcshane_extend
    rng = np.random.default_rng(4)
    X = random_space(3, rng)
    Y = random_space(3, rng)
    bridge = build_bridge(X, Y)
    joint = FinitePointedMetricSpace(bridge.joint, bridge.base_x)
    D = function_algebra(joint.n, pin_index=bridge.base_x)
    algX = function_algebra(3, pin_index=X.base)
    pi = restriction_morphism(D, algX, [0, 1, 2])
    f = rng.standard_normal(3)
    L = classical_lip(f, X.dist)
    spec = Composite(np.max(np.abs(f)) / L if L > 0 else 1.0, ClassicalLip(joint))
    d, val = lift(pi, Operator.diagonal(f), spec)
    g = mcshane_extend(f, [0, 1, 2], L, bridge.joint)
    mcshane_gauge = max(np.max(np.abs(g)) / spec.M, classical_lip(g, bridge.joint))
    assert val <= mcshane_gauge * 1.05 + 1e-6
    assert np.allclose(d.to_array()[:3, :3].diagonal().real, f, atol=1e-7)


def test_compose_identity_tunnels():
    t1, X, lam = make_identity(seed=11)
    t2 = identity_tunnel(t1.D, t1.lipT, t1.e, t1.M, label="id2")
    eps = 0.1
    out = compose(t1, t2, eps, cfg=CFG)
    chk = out.composition_check
    assert chk["ok"]
    x = chk["x1"]
    bound = math.exp(eps) * 2 * x * (1 + x) ** 2 + eps
    assert chk["bound"] == pytest.approx(bound, rel=1e-12)


def test_compose_formula_at_zero():
    # x1 = x2 = 0 collapses the bound to eps
    assert math.exp(0.3) * 0.0 + 0.3 == pytest.approx(0.3)


def test_compose_bridges_three_spaces():
    rng = np.random.default_rng(31)
    X, Y, Z = (random_space(3, np.random.default_rng(s)) for s in (1, 2, 3))
    bxy = build_bridge(X, Y)
    byz = build_bridge(Y, Z)
    t1 = build_bridge_tunnel(X, Y, bxy)
    t2 = build_bridge_tunnel(Y, Z, byz)
    out = compose(t1, t2, eps=0.1, cfg=CFG)
    assert out.composition_check["ok"], out.composition_check


def test_target_set_identity_tunnel_is_singleton():
    t, X, _ = make_identity(seed=13)
    a = Operator.diagonal(np.linspace(-0.3, 0.4, X.n))
    lvl = 1.2 * max(opnorm(a) / t.M, t.lipT.eval(a))
    samples, info = target_set_sample(t, a, lvl, count=5, seed=2)
    for b in samples:
        assert np.allclose(b.to_array(), a.to_array(), atol=1e-7)


def test_target_set_norm_and_diameter_bounds():
    rng = np.random.default_rng(17)
    X = random_space(3, np.random.default_rng(41), scale=1.0)
    Y = random_space(3, np.random.default_rng(42), scale=1.0)
    bridge = build_bridge(X, Y)
    t = build_bridge_tunnel(X, Y, bridge)
    rep = extent(t, CFG)
    ext = rep.total.upper
    a = Operator.diagonal(rng.standard_normal(X.n) * 0.3)
    lvl = 1.3 * max(opnorm(a) / t.M, ClassicalLip(X).eval(a))
    samples, info = target_set_sample(t, a, lvl, count=8, seed=5)
    assert samples, info
    eB = t.rho.apply(t.e)
    for b in samples:
        lhs = opnorm(eB @ b @ eB)
        assert lhs <= opnorm(a) + lvl * ext + 1e-7
    for b1 in samples:
        for b2 in samples:
            lhs = opnorm(eB @ (b1 - b2) @ eB)
            assert lhs <= 2 * lvl * ext + 1e-7


def test_target_set_level_too_small():
    t, X, _ = make_identity(seed=19)
    a = Operator.diagonal(np.linspace(0, 1, X.n))
    gauge = max(opnorm(a) / t.M, t.lipT.eval(a))
    samples, info = target_set_sample(t, a, 0.5 * gauge, count=3, seed=0)
    assert samples == []
    assert "reason" in info


def test_target_product_check():
    t, X, _ = make_identity(seed=23)
    rng = np.random.default_rng(3)
    a = Operator.diagonal(rng.standard_normal(X.n) * 0.2)
    ap = Operator.diagonal(rng.standard_normal(X.n) * 0.2)
    lvl = 1.2 * max(max(opnorm(x) / t.M, t.lipT.eval(x)) for x in (a, ap))
    ok, res = target_product_check(t, a, ap, lvl)
    assert ok, res


def test_metametric_upper_portfolio():
    t, *_ = make_identity(seed=29)
    br = metametric_upper([t], cfg=CFG)
    assert br.lower == 0.0
    assert br.upper == pytest.approx(extent(t, CFG).total.upper, abs=1e-9)
    with pytest.raises(ValueError):
        metametric_upper([])


def test_dh_upper_diameter_term():
    assert dh_upper({1.0: 0.05, 2.0: 0.05}, math.inf, math.inf) == \
        pytest.approx(0.05, abs=1e-6)
    v = dh_upper({1.0: 0.0}, 1.0, 2.0)
    assert v == pytest.approx(abs(math.exp(-1) - math.exp(-2)), abs=1e-6)


def test_dh_upper_identity_portfolio():
    t, *_ = make_identity(seed=37)
    up = extent(t, CFG).total.upper
    grid = geometric_r_grid(0.5, points=4)
    vals = {r: up for r in grid}
    assert dh_upper(vals, math.inf, math.inf) <= up + 1e-6


def test_tunnel_to_compact_small_extent():
    # a near-perfect identity tunnel quotients to a near-zero compact extent
    t, X, lam = make_identity(n=3, lam=0.005, seed=43)
    r = 2 * X.diam() + 1
    if extent(t, CFG).total.upper >= min(3.0, 1.0 / (4 * r + 6)):
        pytest.skip("cutoff too coarse for the threshold")
    ct = tunnel_to_compact(t, r, samples=3, seed=1)
    assert ct.measured <= ct.bound + 1e-6, (ct.measured, ct.bound)


def test_check_pinned_sequence_on_bridge():
    from qproxim.tunnels import check_pinned_sequence
    X = random_space(4, np.random.default_rng(8), scale=1.0)
    Y = random_space(4, np.random.default_rng(9), scale=1.0)
    t = build_bridge_tunnel(X, Y, build_bridge(X, Y))
    assert check_pinned_sequence(t, tol=0.5)


def test_tunnel_to_json_references():
    t, X, _ = make_identity(seed=51)
    rec = t.to_json()
    assert rec["M"] == t.M
    assert rec["e"]["dim"] == X.n
    assert "lipT" in rec


def test_hausdorff_one_sided_identity_witness():
    from qproxim.algebra import CompressedState, identity_morphism
    from qproxim.statemetrics import hausdorff_one_sided
    t, X, _ = make_identity(seed=53)
    sources = [CompressedState(character_delta(t.D, z), t.e)
               for z in range(X.n)]
    br = hausdorff_one_sided(sources, t.D, identity_morphism(t.D), t.lipT,
                             t.M, witness=lambda s: s, tunnel_alg=t.D)
    assert br.upper <= 1e-9

    br2 = hausdorff_one_sided(sources, t.D, identity_morphism(t.D), t.lipT,
                              t.M, witness=None, tunnel_alg=t.D)
    assert math.isinf(br2.upper)
    assert br2.method == "no-witness"


def test_portfolio_triangle_at_upper_bounds():
    # adding a composed tunnel to the (A, D) portfolio realizes the local
    # generalized triangle inequality up to the composition slack
    eps = 1e-3
    t1, X, _ = make_identity(seed=61, lam=0.02)
    t2 = identity_tunnel(t1.D, t1.lipT, t1.e, t1.M, label="id-second")
    u1 = extent(t1, CFG).total.upper
    u2 = extent(t2, CFG).total.upper
    composed = compose(t1, t2, eps, cfg=CFG)
    lam_ad = metametric_upper([composed], cfg=CFG)
    bound = (1 + u2) ** 2 * u1 + (1 + u1) ** 2 * u2
    assert lam_ad.upper <= math.exp(eps) * bound + eps + 1e-9
