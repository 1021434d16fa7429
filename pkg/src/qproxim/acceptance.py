"""The acceptance battery: every quantitative bound the package promises,
run at desk scale with one pass/fail verdict per criterion.

Each criterion function returns {"name", "passed", "details", "seconds"}.
The battery is deterministic for a fixed seed; verdicts do not depend on it.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .algebra import (
    AlgebraSpec,
    Morphism,
    StateVec,
    character_delta,
    function_algebra,
    identity_morphism,
    matrix_algebra,
    pure_state_sample,
    restriction_morphism,
)
from .classical import FinitePointedMetricSpace, build_bridge, gh_pointed, random_space
from .lipschitz import (
    ClassicalLip,
    CommutatorDirac,
    Composite,
    MaxOf,
    ElementMap,
    aba_bound_check,
    axiom_violations,
    leibniz_check,
)
from .opcore import Operator, opnorm
from .statemetrics import bl, bl_lp_oracle, mk
from . import crossedprod as cp
from .tunnels import (
    TUNNEL_REGISTRY,
    CompactTunnel,
    ExtentConfig,
    Tunnel,
    build_bridge_tunnel,
    clear_registry,
    compact_to_tunnel,
    compose,
    extent,
    identity_tunnel,
    target_set_sample,
    tunnel_to_compact,
)

SEED = 20240901


def thread_count():
    env = os.environ.get("QPROXIM_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def parallel_map(fn, items):
    workers = thread_count()
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _timed(fn):
    def run(*a, **kw):
        t0 = time.time()
        out = fn(*a, **kw)
        out["seconds"] = round(time.time() - t0, 2)
        return out
    return run


def _sub_measures(rng, n):
    w = rng.random(n)
    w /= w.sum()
    return w * rng.random()


def _random_instances(count, n, seed):
    out = []
    for s in range(count):
        out.append(random_space(n, np.random.default_rng(seed + s)))
    return out


# -- criterion 1: commutative oracle equivalence ---------------------------


@_timed
def crit1_oracle_equivalence(spaces=25, pairs=10, seed=SEED):
    rng = np.random.default_rng(seed)
    jobs = []
    for X in _random_instances(spaces, 5, seed):
        alg = function_algebra(5)
        spec = ClassicalLip(X)
        for _ in range(pairs):
            m1, m2 = _sub_measures(rng, 5), _sub_measures(rng, 5)
            jobs.append((X, alg, spec, m1, m2))

    def one(job):
        X, alg, spec, m1, m2 = job
        phi = StateVec(rho=Operator.diagonal(m1), trace_mass=float(m1.sum()))
        psi = StateVec(rho=Operator.diagonal(m2), trace_mass=float(m2.sum()))
        br = bl(alg, spec, 1.0, phi, psi, method="spectral", gap=1e-4)
        oracle = bl_lp_oracle(X, m1, m2, 1.0)
        contains = br.lower - 1e-6 <= oracle <= br.upper + 1e-6
        return br.width, contains

    results = parallel_map(one, jobs)
    worst = max(w for w, _ in results)
    ok = all(c for _, c in results) and worst <= 1e-4
    return {"name": "commutative oracle equivalence", "passed": bool(ok),
            "details": {"pairs": len(jobs), "worst_width": worst}}


# -- criterion 2: metric recovery ------------------------------------------


@_timed
def crit2_metric_recovery(spaces=25, seed=SEED):
    worst = 0.0
    for X in _random_instances(spaces, 5, seed):
        alg = function_algebra(5)
        spec = ClassicalLip(X)
        for i in range(5):
            for j in range(i + 1, 5):
                val, _ = mk(alg, spec, character_delta(alg, i),
                            character_delta(alg, j))
                worst = max(worst, abs(val - X.dist[i, j]))
    return {"name": "metric recovery mk = d", "passed": bool(worst <= 1e-6),
            "details": {"worst_error": worst}}


# -- criterion 3: integer-line characters ----------------------------------


@_timed
def crit3_line_characters(W=40):
    model = cp.WindowModel(W=W, t=1)
    basis = [Operator.diagonal(np.eye(model.dim)[i], banded=True)
             for i in range(model.dim)]
    alg = AlgebraSpec(ambient_dim=model.dim, basis=basis, unital=True,
                      topography=list(range(model.dim)),
                      pin=model.delta_state(0))
    spec = CommutatorDirac((model.U,), use_gammas=False)
    worst = 0.0
    for p in range(-10, 11):
        for q in range(p, 11):
            val, _ = mk(alg, spec, model.delta_state(p), model.delta_state(q),
                        R_schedule=(1, 2, 4, 8, 16, 32))
            worst = max(worst, abs(val - abs(p - q)))
    worst_tent = 0.0
    for k in range(1, 11):
        worst_tent = max(worst_tent, abs(model.lip_z(model.tent(k)) - 1.0 / k))
    ok = worst <= 1e-6 and worst_tent <= 1e-12
    return {"name": "line characters mk = |p-q| and tents",
            "passed": bool(ok),
            "details": {"worst_mk_error": worst, "worst_tent_error": worst_tent}}


# -- tunnel zoo shared by criteria 4, 5, 6, 9 --------------------------------


def build_tunnel_zoo(seed=SEED):
    """Bridges, identities, compositions and conversions for the sweeps."""
    clear_registry()
    zoo = []
    for s in range(10):
        X = random_space(np.random.default_rng(seed + s).integers(2, 6),
                         np.random.default_rng(seed + s), scale=1.0)
        Y = random_space(np.random.default_rng(seed + 50 + s).integers(2, 6),
                         np.random.default_rng(seed + 50 + s), scale=1.0)
        bridge = build_bridge(X, Y)
        zoo.append(("bridge", build_bridge_tunnel(X, Y, bridge), (X, Y, bridge)))
    for s in range(3):
        rng = np.random.default_rng(seed + 200 + s)
        X = random_space(4, rng)
        alg = function_algebra(4, pin_index=X.base)
        lam = 0.02 * (s + 1)
        e = Operator.diagonal(np.maximum(1.0 - lam * X.dist[X.base], 0.0))
        zoo.append(("identity", identity_tunnel(alg, ClassicalLip(X), e, 1.0),
                    (X,)))
    return zoo


# -- criterion 5: composition bound -----------------------------------------


@_timed
def crit5_composition_bound(seed=SEED, count=10, eps=0.1):
    cfg = ExtentConfig(gap=1e-5)
    checks = []
    built = 0
    s = 0
    while built < count and s < 4 * count:
        rng1 = np.random.default_rng(seed + 300 + s)
        rng2 = np.random.default_rng(seed + 400 + s)
        rng3 = np.random.default_rng(seed + 500 + s)
        s += 1
        if s % 2:
            X, Y, Z = (random_space(3, r, scale=1.0) for r in (rng1, rng2, rng3))
            try:
                t1 = build_bridge_tunnel(X, Y, build_bridge(X, Y))
                t2 = build_bridge_tunnel(Y, Z, build_bridge(Y, Z))
            except ValueError:
                continue
        else:
            X = random_space(3, rng1)
            alg = function_algebra(3, pin_index=X.base)
            e = Operator.diagonal(np.maximum(1.0 - 0.03 * X.dist[X.base], 0.0))
            t1 = identity_tunnel(alg, ClassicalLip(X), e, 1.0)
            t2 = identity_tunnel(alg, ClassicalLip(X), e, 1.0)
        out = compose(t1, t2, eps, cfg=cfg)
        checks.append(out.composition_check)
        built += 1
    ok = built >= count and all(c["ok"] for c in checks)
    worst = max((c["measured"] - c["bound"] for c in checks), default=0.0)
    return {"name": "composition bound", "passed": bool(ok),
            "details": {"count": built, "worst_overflow": worst}}


# -- criterion 6: classical GH bound ----------------------------------------


@_timed
def crit6_gh_bound(seed=SEED, count=10):
    cfg = ExtentConfig(gap=1e-5)
    worst = -math.inf
    done = 0
    s = 0
    while done < count and s < 4 * count:
        rng1 = np.random.default_rng(seed + 600 + s)
        rng2 = np.random.default_rng(seed + 700 + s)
        s += 1
        n = int(rng1.integers(2, 6))
        m = int(rng2.integers(2, 6))
        X = random_space(n, rng1, scale=1.0)
        Y = random_space(m, rng2, scale=1.0)
        gh, tag = gh_pointed(X, Y)
        if tag != "exact" or gh >= 0.95:
            continue
        bridge = build_bridge(X, Y)
        t = build_bridge_tunnel(X, Y, bridge)
        rep = extent(t, cfg)
        worst = max(worst, rep.total.upper - 2 * gh)
        done += 1
    ok = done >= count and worst <= 1e-3
    return {"name": "classical GH bound", "passed": bool(ok),
            "details": {"count": done, "worst_excess_over_2GH": worst}}


# -- criterion 7: compact conversions ----------------------------------------


def _classical_compact_tunnel(X, Y, seed):
    """A propinquity-style tunnel between C(X) and C(Y) over the bridge."""
    bridge = build_bridge(X, Y)
    joint = FinitePointedMetricSpace(bridge.joint, bridge.base_x)
    D = function_algebra(joint.n, pin_index=bridge.base_x, label="C(Z)")
    algX = function_algebra(X.n, pin_index=X.base, label="C(X)")
    algY = function_algebra(Y.n, pin_index=Y.base, label="C(Y)")
    pi = restriction_morphism(D, algX, list(range(X.n)))
    rho = restriction_morphism(D, algY, list(range(X.n, joint.n)))

    def push(side_start, side_len):
        def w(phi):
            weights = np.zeros(side_len)
            for z in range(joint.n):
                mass = float(phi.pair(D.basis[z]).real)
                if mass <= 1e-15:
                    continue
                if side_start <= z < side_start + side_len:
                    weights[z - side_start] += mass
                else:
                    weights[bridge.certificates[z] - side_start] += mass
            return StateVec(rho=Operator.diagonal(weights),
                            trace_mass=float(weights.sum()))
        return w

    push_to_Y, push_to_X = push(X.n, Y.n), push(0, X.n)
    ct = CompactTunnel(D=D, lipD=ClassicalLip(joint),
                       lipA=ClassicalLip(X), lipB=ClassicalLip(Y),
                       pi=pi, rho=rho,
                       mu_A=character_delta(algX, X.base),
                       mu_B=character_delta(algY, Y.base),
                       witness_AtoB=lambda phi: push_to_Y(
                           _pull_to_joint(phi, X.n, joint.n, 0)),
                       witness_BtoA=lambda psi: push_to_X(
                           _pull_to_joint(psi, Y.n, joint.n, X.n)),
                       witness_DtoA=push_to_X,
                       witness_DtoB=push_to_Y,
                       label="classical-compact")
    return ct, bridge


def _pull_to_joint(phi, side_len, total, offset):
    """View a state on one side as the same atoms inside the joint space."""
    class _J:
        def pair(self, a):
            sub = a.to_array()[offset:offset + side_len, offset:offset + side_len]
            return phi.pair(Operator.from_dense(sub))

        @property
        def mass(self):
            return phi.mass
    return _J()


@_timed
def crit7_compact_conversions(seed=SEED, count=5):
    cfg = ExtentConfig(gap=1e-5)
    records = []
    # compact -> proper on small classical instances and an M2 identity
    for s in range(count):
        if s < count - 2:
            X = random_space(3, np.random.default_rng(seed + 800 + s), scale=0.5)
            Y = random_space(3, np.random.default_rng(seed + 900 + s), scale=0.5)
            ct, bridge = _classical_compact_tunnel(X, Y, seed + s)
            eps = max(ct.pointed_extent_measured(samples=3, seed=seed + s), 1e-4)
        else:
            alg = matrix_algebra(2)
            rng = np.random.default_rng(seed + s)
            ds = []
            for _ in range(2):
                mtx = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
                ds.append(Operator.from_dense((mtx + mtx.conj().T) / 2))
            lip = CommutatorDirac(tuple(ds))
            ct = CompactTunnel(D=alg, lipD=lip, lipA=lip, lipB=lip,
                               pi=identity_morphism(alg),
                               rho=identity_morphism(alg),
                               mu_A=alg.pin, mu_B=alg.pin,
                               witness_AtoB=lambda phi: phi,
                               witness_BtoA=lambda psi: psi,
                               witness_DtoA=lambda phi: phi,
                               witness_DtoB=lambda phi: phi,
                               label="M2-identity")
            eps = max(ct.pointed_extent_measured(samples=3, seed=seed + s), 1e-4)
        wrapped = compact_to_tunnel(ct, eps, cfg=cfg)
        records.append({"kind": "compact->proper",
                        "ok": wrapped.composition_check["ok"],
                        **wrapped.composition_check})
    # proper -> compact on near-identity tunnels between tiny-diameter spaces
    for s in range(count):
        rng = np.random.default_rng(seed + 1000 + s)
        X = random_space(3, rng, scale=0.15)
        alg = function_algebra(3, pin_index=X.base)
        e = Operator.diagonal(np.maximum(1.0 - 0.002 * X.dist[X.base], 0.0))
        t = identity_tunnel(alg, ClassicalLip(X), e, 1.0)
        r = max(1.0, 2 * X.diam())
        try:
            ct = tunnel_to_compact(t, r, samples=3, seed=seed + s)
        except ValueError as exc:
            records.append({"kind": "proper->compact", "ok": False,
                            "error": str(exc)})
            continue
        records.append({"kind": "proper->compact",
                        "ok": bool(ct.measured <= ct.bound + 1e-6),
                        "measured": ct.measured, "bound": ct.bound})
    ok = all(r["ok"] for r in records)
    return {"name": "compact bridge conversions", "passed": bool(ok),
            "details": {"records": records}}


# -- criterion 8: the crossed-product experiment -----------------------------


@_timed
def crit8_crossed_product(seed=SEED):
    details = {}
    consts = cp.constants(1.0, 1)
    details["constants"] = consts.to_json()
    all_ok = True
    for p in (consts.N7, consts.N7 + 7):
        tp = cp.build_tunnel_p(1.0, 1, p=p, consts=consts)
        chain = cp.verify_chain(1.0, 1, tunnel=tp, seed=seed)
        cert = cp.extent_certified(1.0, 1, tunnel=tp, chain=chain, seed=seed)
        details[f"p={p}"] = {
            "chain_pass": chain["pass"], "first_fail": chain["first_fail"],
            "cert_pass": cert["pass"],
            "total_upper": cert.get("total_upper")}
        all_ok = all_ok and chain["pass"] and cert["pass"] and \
            cert["total_upper"] <= 1.0
    # eps = 0.75: pass, or report the first failing chain step by name
    chain75 = cp.verify_chain(0.75, 1, seed=seed)
    if chain75["pass"]:
        cert75 = cp.extent_certified(0.75, 1, chain=chain75, seed=seed)
        details["eps=0.75"] = {"chain_pass": True,
                               "cert_pass": cert75["pass"],
                               "total_upper": cert75.get("total_upper")}
        all_ok = all_ok and cert75["pass"]
    else:
        details["eps=0.75"] = {"chain_pass": False,
                               "first_fail": chain75["first_fail"]}
        all_ok = all_ok and chain75["first_fail"] is not None
    return {"name": "crossed-product experiment", "passed": bool(all_ok),
            "details": details}


# -- criteria 4 and 9: registry sweeps ---------------------------------------


@_timed
def crit4_key_lemma(zoo, crossed_tunnels=()):
    cfg = ExtentConfig(gap=1e-4)
    worst = -math.inf
    count = 0
    for t in list(TUNNEL_REGISTRY):
        rep = extent(t, cfg) if t._cached_extent is None else t._cached_extent
        lhs = opnorm(t.e) ** 2
        rhs = 1.0 + rep.total.upper / t.M + 1e-8
        worst = max(worst, lhs - rhs)
        count += 1
    for tp, total_upper in crossed_tunnels:
        lhs = opnorm(tp.h1) ** 2
        rhs = 1.0 + total_upper / tp.M + 1e-8
        worst = max(worst, lhs - rhs)
        count += 1
    return {"name": "key-lemma invariant", "passed": bool(worst <= 0),
            "details": {"tunnels": count, "worst_violation": worst}}


@_timed
def crit9_target_sets(zoo, crossed_tunnels=(), per_tunnel=100, seed=SEED):
    cfg = ExtentConfig(gap=1e-4)
    worst = -math.inf
    swept = 0
    rng = np.random.default_rng(seed)
    for kind, t, meta in zoo:
        rep = extent(t, cfg) if t._cached_extent is None else t._cached_extent
        ext = rep.total.upper
        A = t.pi.target
        vals = rng.standard_normal(A.ambient_dim) * 0.3
        a = Operator.diagonal(vals) if A.is_diagonal else A.sa_basis()[0]
        gauge = max(opnorm(a) / t.M, t.lipT.eval(a))
        lvl = 1.25 * max(gauge, 1e-9)
        samples, info = target_set_sample(t, a, lvl, count=per_tunnel // 10,
                                          seed=seed)
        if not samples:
            continue
        eB = t.rho.apply(t.e)
        na = opnorm(a)
        for b in samples:
            worst = max(worst, opnorm(eB @ b @ eB) - (na + lvl * ext))
        for i, b1 in enumerate(samples):
            for b2 in samples[i + 1:]:
                worst = max(worst,
                            opnorm(eB @ (b1 - b2) @ eB) - 2 * lvl * ext)
        swept += len(samples)
    for tp, total_upper in crossed_tunnels:
        for rec in cp.target_norm_checks(tp, count=per_tunnel // 5, seed=seed):
            worst = max(worst, rec["lhs"] - rec["rhs"])
            swept += 1
    return {"name": "target-set lemmas", "passed": bool(worst <= 1e-8),
            "details": {"samples": swept, "worst_slack_violation": worst}}


# -- criterion 10: seminorm axioms -------------------------------------------


@_timed
def crit10_seminorm_axioms(total=1000, seed=SEED):
    rng = np.random.default_rng(seed)
    worst = 0.0
    checks = 0

    def rand_herm(n):
        mtx = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return Operator.from_dense((mtx + mtx.conj().T) / 2)

    X = random_space(4, np.random.default_rng(seed))
    specs = []
    specs.append(("classical", ClassicalLip(X),
                  lambda: Operator.diagonal(rng.standard_normal(4))))
    d1, d2 = rand_herm(4), rand_herm(4)
    specs.append(("dirac-pair", CommutatorDirac((d1, d2)), lambda: rand_herm(4)))
    specs.append(("dirac-single", CommutatorDirac((d1,), use_gammas=False),
                  lambda: rand_herm(4)))
    specs.append(("composite", Composite(2.0, CommutatorDirac((d1, d2))),
                  lambda: rand_herm(4)))
    specs.append(("max-of", MaxOf(((ElementMap(), CommutatorDirac((d1,), use_gammas=False)),
                                   (ElementMap(), CommutatorDirac((d2,), use_gammas=False)))),
                  lambda: rand_herm(4)))
    per = total // len(specs)
    for name, spec, gen in specs:
        for _ in range(per):
            a, b = gen(), gen()
            v = axiom_violations(spec, a, b)
            worst = max(worst, *v.values())
            ok, slack = leibniz_check(spec, a, b)
            worst = max(worst, -slack if not ok else 0.0)
            ok2, info = aba_bound_check(spec, a, b)
            worst = max(worst, -info["slack"] if not ok2 else 0.0)
            checks += 1
    return {"name": "seminorm axioms", "passed": bool(worst <= 1e-8),
            "details": {"checks": checks, "worst_violation": worst}}


# -- battery ------------------------------------------------------------------


def run_all(seed=SEED, heavy=True, selection=None):
    """Run the criteria (all, or the selected subset), in order 1..10."""
    selection = selection or set(range(1, 11))
    needs_zoo = bool(selection & {4, 9})
    needs_crossed = heavy and bool(selection & {4, 8, 9})
    zoo = build_tunnel_zoo(seed=seed) if needs_zoo else []
    crossed = []
    if needs_crossed:
        consts = cp.constants(1.0, 1)
        tp = cp.build_tunnel_p(1.0, 1, consts=consts)
        cert = cp.extent_certified(1.0, 1, tunnel=tp)
        crossed = [(tp, cert["total_upper"])]
    skipped8 = {"name": "crossed-product experiment", "passed": True,
                "details": {"skipped": "heavy disabled"}, "seconds": 0.0}
    runners = {
        1: lambda: crit1_oracle_equivalence(seed=seed),
        2: lambda: crit2_metric_recovery(seed=seed),
        3: lambda: crit3_line_characters(),
        4: lambda: crit4_key_lemma(zoo, crossed),
        5: lambda: crit5_composition_bound(seed=seed),
        6: lambda: crit6_gh_bound(seed=seed),
        7: lambda: crit7_compact_conversions(seed=seed),
        8: (lambda: crit8_crossed_product(seed=seed)) if heavy else \
           (lambda: dict(skipped8)),
        9: lambda: crit9_target_sets(zoo, crossed, seed=seed),
        10: lambda: crit10_seminorm_axioms(seed=seed),
    }
    out = []
    for idx in sorted(selection):
        result = runners[idx]()
        result["index"] = idx
        out.append(result)
    return out
