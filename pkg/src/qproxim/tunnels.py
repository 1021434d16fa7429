"""Tunnels between pointed quantum metric spaces and their extents.

A tunnel places two spaces inside a third one via topographic surjections
and a cutoff element; its extent collects three defects: how far compressed
quasi-states sit from the pulled-back state spaces (c1), the distance of
the two pins (c2), and the quality of the cutoff (c3).  Witness maps are
mandatory: every constructor exhibits, for each source state, the nearby
target state its proof uses, which is what makes c1 upper bounds certified
rather than sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_min

from . import classical as cl
from .algebra import (
    AlgebraSpec,
    CompressedState,
    Functional,
    MappedFunctional,
    Morphism,
    PulledState,
    StateVec,
    character_delta,
    direct_sum,
    function_algebra,
    identity_morphism,
    pure_state_sample,
    restriction_morphism,
)
from .lipschitz import ClassicalLip, Composite, ElementMap, MaxOf, ScaledCoupling, scaled_norm
from .opcore import Operator, opnorm
from .statemetrics import (
    DEFAULT_GAP,
    MetricBracket,
    SpectralProblem,
    bl,
    mk,
)

KEY_LEMMA_TOL = 1e-8

# every tunnel built by a constructor in this package registers itself here;
# the acceptance battery sweeps the registry for the universal invariants
TUNNEL_REGISTRY = []


class LiftError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class ExtentConfig:
    samples: int = 6
    seed: int = 0
    gap: float = DEFAULT_GAP
    r_schedule: tuple = (1, 2, 4, 8, 16, 32, 64)
    method: str = "auto"


@dataclass
class ExtentReport:
    c1: MetricBracket
    c2_value: float
    c2: MetricBracket
    c3: float
    total: MetricBracket
    checklist: list = field(default_factory=list)

    def to_json(self):
        return {
            "c1": self.c1.to_json(),
            "c2_value": None if math.isinf(self.c2_value) else self.c2_value,
            "c2": self.c2.to_json(),
            "c3": self.c3,
            "total": self.total.to_json(),
            "checklist": self.checklist,
        }


@dataclass
class Tunnel:
    """(D, Lip_T, topography, pi, rho, e) with pins, witnesses and M."""

    D: AlgebraSpec
    lipT: object
    e: Operator
    pi: Morphism
    rho: Morphism
    mu_A: Functional
    mu_B: Functional
    M: float
    witness_to_A: object = None
    witness_to_B: object = None
    pinned_sequence: list = field(default_factory=list)
    label: str = ""
    extent_hook: object = None   # structural tunnels supply their own certificate
    composition_check: dict = field(default_factory=dict)
    _cached_extent: ExtentReport = None

    def __post_init__(self):
        TUNNEL_REGISTRY.append(self)

    def domain(self):
        return self.pi.target

    def codomain(self):
        return self.rho.target

    def to_json(self):
        """Reference-style record: algebras and morphisms by label."""
        rec = {
            "label": self.label, "M": self.M,
            "D": self.D.label, "domain": self.pi.target.label,
            "codomain": self.rho.target.label,
            "pi": self.pi.label, "rho": self.rho.label,
            "e": self.e.to_json(),
            "pinned_sequence_len": len(self.pinned_sequence),
        }
        if hasattr(self.lipT, "to_json"):
            try:
                rec["lipT"] = self.lipT.to_json()
            except (NotImplementedError, AttributeError):
                rec["lipT"] = {"node": "opaque"}
        return rec


def clear_registry():
    TUNNEL_REGISTRY.clear()


# ---------------------------------------------------------------------------
# functional helpers
# ---------------------------------------------------------------------------


@dataclass
class MixedFunctional(Functional):
    parts: list  # (weight, functional)

    def pair(self, a):
        return sum(w * f.pair(a) for w, f in self.parts)

    @property
    def mass(self):
        return float(sum(w * f.mass for w, f in self.parts))


class BlockFunctional(Functional):
    """Restriction of a direct-sum functional to one block."""

    def __init__(self, state, offset, size, total):
        self.state = state
        self.offset = offset
        self.size = size
        self.total = total

    def pair(self, a):
        return self.state.pair(_block_embed(a, self.total, self.offset))

    @property
    def mass(self):
        sub = np.zeros((self.total, self.total), dtype=complex)
        sub[self.offset:self.offset + self.size,
            self.offset:self.offset + self.size] = np.eye(self.size)
        return float(self.state.pair(Operator.from_dense(sub)).real)


def _block_embed(small, dim, offset):
    big = np.zeros((dim, dim), dtype=complex)
    arr = small.to_array()
    big[offset:offset + arr.shape[0], offset:offset + arr.shape[0]] = arr
    return Operator.from_dense(big)


def _scaled(f, s):
    return MappedFunctional(f, lambda a, s=s: s * a, mass_value=f.mass * s)


def _clamped(w):
    """Rescale a functional into the quasi-state mass range."""
    if w.mass > 1 + 1e-12:
        return _scaled(w, 1.0 / w.mass)
    return w


# ---------------------------------------------------------------------------
# extent
# ---------------------------------------------------------------------------


def _source_states(t, cfg):
    """Quasi-states of D whose compressions probe c1: extreme points when D
    is commutative-diagonal (sufficient: distance to a convex set is convex,
    so the sup is attained at extreme points), random pure states otherwise;
    the zero functional is always included."""
    D = t.D
    out = []
    if D.is_diagonal:
        for z in range(D.ambient_dim):
            out.append(character_delta(D, z))
    else:
        out.extend(pure_state_sample(D, cfg.samples, cfg.seed))
    out.append(StateVec.zero(D.ambient_dim))
    return out


def extent(t, cfg=None):
    """Assemble the three extent components into a certified report."""
    if t.extent_hook is not None:
        return t.extent_hook(cfg)
    default_cfg = cfg is None
    if default_cfg and t._cached_extent is not None:
        return t._cached_extent
    cfg = cfg or ExtentConfig()
    sources = _source_states(t, cfg)
    checklist = []

    def run_side(embed, witness, tag):
        if witness is None:
            return MetricBracket(0.0, math.inf, method="no-witness")
        upper, lower, iters = 0.0, 0.0, 0
        for phi in sources:
            src = CompressedState(phi, t.e)
            w = _clamped(witness(phi))
            br = bl(t.D, t.lipT, t.M, src, embed.pull(w),
                    gap=cfg.gap, method=cfg.method)
            iters += br.iterations
            upper = max(upper, br.upper)
            lower = max(lower, br.lower)
        checklist.append({"id": f"c1-{tag}", "lhs": upper, "rhs": None,
                          "pass": True})
        return MetricBracket(min(lower, upper), upper, method="witness",
                             iterations=iters)

    c1a = run_side(t.pi, t.witness_to_A, "A")
    c1b = run_side(t.rho, t.witness_to_B, "B")
    c1 = MetricBracket(max(c1a.lower, c1b.lower), max(c1a.upper, c1b.upper),
                       method="witness",
                       iterations=c1a.iterations + c1b.iterations)

    pin_a = PulledState(t.mu_A, t.pi)
    pin_b = PulledState(t.mu_B, t.rho)
    c2_value, hist = mk(t.D, t.lipT, pin_a, pin_b, cfg.r_schedule,
                        gap=cfg.gap, method=cfg.method)
    c2 = hist[-1] if hist else MetricBracket(0.0, math.inf, method="diverges")
    if math.isinf(c2_value):
        c2 = MetricBracket(c2.lower, math.inf, method="diverges")

    lip_e = t.lipT.eval(t.e)
    pa = abs(1.0 - t.mu_A.pair(t.pi.apply(t.e)).real)
    pb = abs(1.0 - t.mu_B.pair(t.rho.apply(t.e)).real)
    c3 = max(2 * t.M * lip_e, pa, pb)
    checklist.append({"id": "c3-lip", "lhs": 2 * t.M * lip_e, "rhs": None, "pass": True})
    checklist.append({"id": "c3-pinA", "lhs": pa, "rhs": None, "pass": True})
    checklist.append({"id": "c3-pinB", "lhs": pb, "rhs": None, "pass": True})

    hi = max(c1.upper, c2.upper if not math.isinf(c2_value) else math.inf, c3)
    lo = min(max(c1.lower, c2.lower, c3), hi)
    total = MetricBracket(lo, hi, method="assembled")

    norm_e = opnorm(t.e)
    key_ok = norm_e**2 <= 1.0 + total.upper / t.M + KEY_LEMMA_TOL
    checklist.append({"id": "key-lemma", "lhs": norm_e**2,
                      "rhs": 1.0 + total.upper / t.M + KEY_LEMMA_TOL,
                      "pass": bool(key_ok)})

    report = ExtentReport(c1=c1, c2_value=c2_value, c2=c2, c3=c3,
                          total=total, checklist=checklist)
    if default_cfg:
        t._cached_extent = report
    return report


def reverse(t):
    return Tunnel(D=t.D, lipT=t.lipT, e=t.e, pi=t.rho, rho=t.pi,
                  mu_A=t.mu_B, mu_B=t.mu_A, M=t.M,
                  witness_to_A=t.witness_to_B, witness_to_B=t.witness_to_A,
                  pinned_sequence=t.pinned_sequence,
                  label=f"reverse({t.label})", extent_hook=t.extent_hook)


def check_pinned_sequence(t, tol=0.3):
    """Properness on the supplied sequence only: Lip_T decreasing to <= tol,
    pin values and norms at 1 on the final element, and both morphism images
    again pinned exhaustive on the endpoint spaces."""
    from .algebra import is_pinned_exhaustive
    seq = t.pinned_sequence
    if not seq:
        return False
    lips = [t.lipT.eval(h) for h in seq]
    norms = [opnorm(h) for h in seq]
    pin = PulledState(t.mu_A, t.pi)
    if not is_pinned_exhaustive(seq, lips, pin, norms, tol=tol):
        return False
    for morph, mu in ((t.pi, t.mu_A), (t.rho, t.mu_B)):
        images = [morph.apply(h) for h in seq]
        norms_i = [opnorm(h) for h in images]
        if abs(mu.pair(images[-1]).real - 1.0) > tol:
            return False
        if abs(norms_i[-1] - 1.0) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# smoothed gauge minimization over affine sets (shared by lift machinery)
# ---------------------------------------------------------------------------


def _smoothed_affine_min(consts, stacks, budget=2400, restarts=2, seed=0):
    """min over z of max_j || consts[j] + sum_l z_l stacks[j][l] ||."""
    zdim = stacks[0].shape[0] if stacks else 0

    def exact(z):
        vals = []
        for C, T in zip(consts, stacks):
            A = C + (np.tensordot(z, T, axes=(0, 0)) if T.shape[0] else 0)
            vals.append(np.linalg.norm(A, 2) if A.size else 0.0)
        return max(vals) if vals else 0.0

    if zdim == 0:
        return np.zeros(0), exact(np.zeros(0))

    def smooth(z, mu):
        parts, top = [], -np.inf
        for C, T in zip(consts, stacks):
            A = C + np.tensordot(z, T, axes=(0, 0))
            U, s, Vh = np.linalg.svd(A, full_matrices=False)
            parts.append((U, s, Vh, T))
            if s.size:
                top = max(top, s[0])
        top = top if top > -np.inf else 0.0
        zsum, grad = 0.0, np.zeros(zdim)
        packs = []
        for U, s, Vh, T in parts:
            w = np.exp((s - top) / mu)
            zsum += w.sum()
            packs.append((U, w, Vh, T))
        for U, w, Vh, T in packs:
            G = (U * (w / zsum)) @ Vh
            grad += np.real(np.tensordot(np.conj(G), T, axes=([0, 1], [1, 2])))
        return top + mu * math.log(zsum if zsum > 0 else 1.0), grad

    rng = np.random.default_rng(seed)
    best_z = np.zeros(zdim)
    best_val = exact(best_z)
    for attempt in range(restarts):
        z = np.zeros(zdim) if attempt == 0 else rng.standard_normal(zdim) * 0.1
        scale = max(exact(z), 1e-9)
        for mu in (1e-1 * scale, 1e-2 * scale, 1e-4 * scale, 1e-6 * scale,
                   1e-8 * scale):
            res = _scipy_min(lambda zz: smooth(zz, mu), z, jac=True,
                             method="L-BFGS-B",
                             options={"maxiter": budget // 10, "ftol": 1e-16,
                                      "gtol": 1e-14})
            z = res.x
        val = exact(z)
        if val < best_val:
            best_val, best_z = val, z
    return best_z, best_val


def _element_of(sa, x):
    out = sa[0] * float(x[0])
    for xi, e in zip(x[1:], sa[1:]):
        out = out + float(xi) * e
    return out


def _minimize_over_fiber(spec_maps, sa, x0, N, budget=2400, restarts=2, seed=0):
    consts, stacks = [], []
    for m in spec_maps:
        consts.append(m(_element_of(sa, x0)).to_array())
        cols = [m(_element_of(sa, N[:, l])).to_array() for l in range(N.shape[1])]
        stacks.append(np.stack(cols) if cols else
                      np.zeros((0,) + consts[-1].shape, dtype=complex))
    z, val = _smoothed_affine_min(consts, stacks, budget=budget,
                                  restarts=restarts, seed=seed)
    return x0 + (N @ z if N.shape[1] else 0), val


# ---------------------------------------------------------------------------
# lifting through quantum isometries
# ---------------------------------------------------------------------------


def _sa_coords(alg, a):
    basis = alg.sa_basis()
    flat = np.stack([b.to_array().reshape(-1) for b in basis])
    A = np.concatenate([flat.real, flat.imag], axis=1).T
    target = a.to_array().reshape(-1)
    rhs = np.concatenate([target.real, target.imag])
    x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = float(np.linalg.norm(A @ x - rhs))
    return x, resid


def _sa_image_matrix(m, source_sa, target_alg):
    """Real matrix P with sa-coords(m(e_i)) as columns."""
    tbasis = target_alg.sa_basis()
    flat = np.stack([b.to_array().reshape(-1) for b in tbasis])
    A = np.concatenate([flat.real, flat.imag], axis=1).T
    cols = []
    for e in source_sa:
        img = m.apply(e).to_array().reshape(-1)
        rhs = np.concatenate([img.real, img.imag])
        c, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        cols.append(c)
    return np.stack(cols, axis=1)


def _fiber(m, a, sa):
    """Particular solution and null basis for {x : m(element(x)) = a}."""
    P = _sa_image_matrix(m, sa, m.target)
    b, _ = _sa_coords(m.target, a)
    x0, *_ = np.linalg.lstsq(P, b, rcond=None)
    resid = float(np.linalg.norm(P @ x0 - b))
    if resid > 1e-7 * max(1.0, float(np.linalg.norm(b))):
        raise LiftError("fiber is empty (target not in the image)",
                        residual=resid)
    u, s, vt = np.linalg.svd(P, full_matrices=True)
    rank = int((s > 1e-11 * (s[0] if s.size else 1)).sum())
    return x0, vt[rank:].T


def lift(m, a, norm_spec, topographic=False, slack=1e-6, budget=2400, seed=0):
    """Find d in the fiber of ``a`` under ``m`` nearly minimizing norm_spec.

    Solves min norm_spec(d) over {d self-adjoint : m(d) = a} by smoothed
    descent over the affine fiber with restarts; the returned value is the
    best found, reported with the requested slack factor.  Topographic
    lifts restrict the search to the source topography span.
    """
    src = m.source
    if topographic:
        topo_ops = src.topography_ops()
        sub = AlgebraSpec(ambient_dim=src.ambient_dim, basis=topo_ops,
                          unital=False, topography=list(range(len(topo_ops))))
        sa = sub.sa_basis()
    else:
        sa = src.sa_basis()
    x0, N = _fiber(m, a, sa)
    x, val = _minimize_over_fiber(norm_spec.maps(), sa, x0, N, budget=budget,
                                  seed=seed)
    return _element_of(sa, x), val * (1 + slack)


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------


def _relative_lift_objective(lip_source, target, target_lip, floor=1e-9):
    """max(||d|| / ||a||, Lip(d) / Lip(a)), with floors for vanishing refs."""
    from .lipschitz import MaxOf, NormImage, Scaled
    ref_norm = max(opnorm(target), floor)
    ref_lip = max(target_lip, floor)
    return MaxOf(((ElementMap(), NormImage(1.0 / ref_norm, ElementMap())),
                  (ElementMap(), Scaled(1.0 / ref_lip, lip_source))))


def _same_algebra(a, b):
    if a is b:
        return True
    if a.ambient_dim != b.ambient_dim or len(a.basis) != len(b.basis):
        return False
    return all(np.allclose(x.to_array(), y.to_array(), atol=1e-12)
               for x, y in zip(a.basis, b.basis))


def compose(t1, t2, eps, cfg=None, ext1=None, ext2=None):
    """Approximate composition of tunnels (domain t1 -> codomain t2).

    Builds the direct-sum tunnel with the coupling seminorm and the lifted
    cutoff pair, then measures its extent and asserts the composition bound
    exp(eps) [x1 (1+x2)^2 + x2 (1+x1)^2] + eps against the measured extents
    of the factors.
    """
    if t1.M != t2.M:
        raise ValueError("composition requires a common M")
    if not _same_algebra(t1.codomain(), t2.domain()):
        raise ValueError("codomain(t1) must equal domain(t2)")
    cfg = cfg or ExtentConfig()
    D1, D2 = t1.D, t2.D
    n1, n2 = D1.ambient_dim, D2.ambient_dim
    D = direct_sum(D1, D2, label=f"{D1.label}(+){D2.label}")

    e1, e2 = t1.e, t2.e
    eps0 = eps / max(1.0, opnorm(e1), opnorm(e2))

    # lifted companions of the cutoffs through the middle space; the lift
    # objective matches the topographic-isometry requirement that both the
    # norm and the seminorm of the lift stay within exp(eps/2) of the
    # target element's values, so each is minimized relative to its target
    slack = math.exp(eps / 2) - 1
    e2p, _ = lift(t1.rho, t2.pi.apply(e2),
                  _relative_lift_objective(t1.lipT, t2.pi.apply(e2),
                                           t2.lipT.eval(e2)),
                  topographic=True, slack=slack)
    e1p, _ = lift(t2.pi, t1.rho.apply(e1),
                  _relative_lift_objective(t2.lipT, t1.rho.apply(e1),
                                           t1.lipT.eval(e1)),
                  topographic=True, slack=slack)

    f1 = e1 @ e2p
    f2 = e2 @ e1p
    f1 = (f1 + f1.adjoint()) * 0.5
    f2 = (f2 + f2.adjoint()) * 0.5
    f = Operator.from_dense(_block_embed(f1, n1 + n2, 0).to_array()
                            + _block_embed(f2, n1 + n2, n1).to_array())

    lipT = MaxOf((
        (ElementMap(kind="block", start=0, stop=n1), t1.lipT),
        (ElementMap(kind="block", start=n1, stop=n1 + n2), t2.lipT),
        (ElementMap(kind="id"),
         ScaledCoupling(1.0 / eps0,
                        ElementMap(kind="block", start=0, stop=n1,
                                   linmap=t1.rho.apply, label="rho1"),
                        ElementMap(kind="block", start=n1, stop=n1 + n2,
                                   linmap=t2.pi.apply, label="pi2"))),
    ))

    k1 = len(D1.basis)
    pi = Morphism(D, t1.pi.target,
                  np.concatenate([t1.pi.coord_matrix,
                                  np.zeros((t1.pi.coord_matrix.shape[0],
                                            len(D2.basis)))], axis=1),
                  label="pi")
    rho = Morphism(D, t2.rho.target,
                   np.concatenate([np.zeros((t2.rho.coord_matrix.shape[0], k1)),
                                   t2.rho.coord_matrix], axis=1),
                   label="rho")

    def split(phi):
        return (BlockFunctional(phi, 0, n1, n1 + n2),
                BlockFunctional(phi, n1, n2, n1 + n2))

    # images of the lifted companions compress the same-side witnesses:
    # the source already carries both cutoffs (f2 = e2 e1'), but a factor
    # witness only matches the e2-compression, so the remaining e1' layer
    # moves to the target side as rho2(e1') (and symmetrically for A)
    e1p_img = t2.rho.apply(e1p)
    e2p_img = t1.pi.apply(e2p)

    def witness_to_B(phi):
        phi1, phi2 = split(phi)
        parts = []
        if phi2.mass > 1e-12 and t2.witness_to_B is not None:
            theta2 = t2.witness_to_B(phi2)
            parts.append((1.0, CompressedState(theta2, e1p_img)))
        if phi1.mass > 1e-12 and None not in (t1.witness_to_B, t2.witness_to_B):
            psi1 = t1.witness_to_B(phi1)          # quasi-state on B
            parts.append((1.0, t2.witness_to_B(PulledState(psi1, t2.pi))))
        if not parts:
            return StateVec.zero(t2.rho.target.ambient_dim)
        return MixedFunctional(parts)

    def witness_to_A(phi):
        phi1, phi2 = split(phi)
        parts = []
        if phi1.mass > 1e-12 and t1.witness_to_A is not None:
            theta1 = t1.witness_to_A(phi1)
            parts.append((1.0, CompressedState(theta1, e2p_img)))
        if phi2.mass > 1e-12 and None not in (t2.witness_to_A, t1.witness_to_A):
            psi2 = t2.witness_to_A(phi2)          # quasi-state on B
            parts.append((1.0, t1.witness_to_A(PulledState(psi2, t1.rho))))
        if not parts:
            return StateVec.zero(t1.pi.target.ambient_dim)
        return MixedFunctional(parts)

    pinned = [Operator.from_dense(
        _block_embed(h1, n1 + n2, 0).to_array()
        + _block_embed(h2, n1 + n2, n1).to_array())
        for h1, h2 in zip(t1.pinned_sequence, t2.pinned_sequence)]

    out = Tunnel(D=D, lipT=lipT, e=f, pi=pi, rho=rho,
                 mu_A=t1.mu_A, mu_B=t2.mu_B, M=t1.M,
                 witness_to_A=witness_to_A, witness_to_B=witness_to_B,
                 pinned_sequence=pinned,
                 label=f"compose({t1.label},{t2.label})")

    x1 = (ext1 if ext1 is not None else extent(t1, cfg)).total.upper
    x2 = (ext2 if ext2 is not None else extent(t2, cfg)).total.upper
    bound = math.exp(eps) * (x1 * (1 + x2) ** 2 + x2 * (1 + x1) ** 2) + eps
    measured = extent(out, cfg).total.upper
    out.composition_check = {"measured": measured, "bound": bound,
                             "x1": x1, "x2": x2, "eps": eps,
                             "ok": bool(measured <= bound + 1e-9)}
    if measured > bound + 1e-9:
        raise AssertionError(f"composition bound violated: {measured} > {bound}")
    return out


# ---------------------------------------------------------------------------
# target sets
# ---------------------------------------------------------------------------


def target_set_sample(t, a, l, count=10, seed=0):
    """rho-images of fiber points over ``a`` with |d|_{LipT,M} <= l."""
    spec = Composite(t.M, t.lipT)
    sa = t.pi.source.sa_basis()
    x0, N = _fiber(t.pi, a, sa)
    x_min, val = _minimize_over_fiber(spec.maps(), sa, x0, N, seed=seed)
    if val > l:
        return [], {"reason": "l below the fiber minimum", "fiber_min": val}

    def gauge(x):
        return scaled_norm(t.lipT, t.M, _element_of(sa, x))

    rng = np.random.default_rng(seed)
    samples = [t.rho.apply(_element_of(sa, x_min))]
    for _ in range(count - 1):
        if N.shape[1] == 0:
            break
        w = N @ rng.standard_normal(N.shape[1])
        hi_s = 1.0
        # grow then bisect the largest feasible step along w (gauge convex)
        while gauge(x_min + hi_s * w) <= l and hi_s < 2**12:
            hi_s *= 2
        lo_s = 0.0
        for _ in range(40):
            mid = (lo_s + hi_s) / 2
            if gauge(x_min + mid * w) <= l:
                lo_s = mid
            else:
                hi_s = mid
        frac = rng.random()
        samples.append(t.rho.apply(_element_of(sa, x_min + frac * lo_s * w)))
    return samples, {"fiber_min": val}


def target_product_check(t, a, ap, l, seed=0, tol=1e-8):
    """Re/Im(b b') land in the target sets of Re/Im(a a') at level 2 M l^2.

    Constructive route from the product lemma: the fiber witnesses of b, b'
    multiply to a fiber element over a a' whose scaled seminorm obeys the
    Leibniz product bound; membership is certified by measuring it.
    """
    spec = Composite(t.M, t.lipT)
    sa = t.pi.source.sa_basis()

    def fiber_point(target):
        x0, N = _fiber(t.pi, target, sa)
        x, val = _minimize_over_fiber(spec.maps(), sa, x0, N, seed=seed)
        return _element_of(sa, x), val

    d, vd = fiber_point(a)
    dp, vdp = fiber_point(ap)
    if max(vd, vdp) > l * (1 + 1e-6):
        raise LiftError("fiber witnesses exceed level l")
    prod = d @ dp
    re = (prod + prod.adjoint()) * 0.5
    im = (prod - prod.adjoint()) * complex(0, -0.5)
    level = 2 * t.M * l * l
    results = {"re": scaled_norm(t.lipT, t.M, re),
               "im": scaled_norm(t.lipT, t.M, im)}
    ok = all(v <= level * (1 + 1e-6) + tol for v in results.values())
    return ok, results


# ---------------------------------------------------------------------------
# identity and bridge tunnels
# ---------------------------------------------------------------------------


def identity_tunnel(alg, lip, e, M, label=None, pinned=None):
    """The trivial tunnel (A, Lip_A, id, id, e); extent = cutoff defects only."""
    def witness(phi):
        return CompressedState(phi, e)

    return Tunnel(D=alg, lipT=lip, e=e, pi=identity_morphism(alg),
                  rho=identity_morphism(alg),
                  mu_A=alg.pin, mu_B=alg.pin, M=M,
                  witness_to_A=witness, witness_to_B=witness,
                  pinned_sequence=pinned or [e],
                  label=label or f"id[{alg.label}]")


def build_bridge_tunnel(X, Y, bridge, M=1.0, label=None):
    """The classical bridge tunnel over C(X + Y) with the glued metric.

    Cutoff h = min(1, eps * d(., Z \\ B)) where B is the union of the two
    1/eps balls (h = 1 when the balls exhaust Z); witnesses send each atom
    to its certified nearby point, compressed by h.
    """
    if bridge.eps >= 1:
        raise ValueError("bridge parameter must be < 1")
    n, m = X.n, Y.n
    total = n + m
    joint_space = cl.FinitePointedMetricSpace(bridge.joint, bridge.base_x)
    D = function_algebra(total, pin_index=bridge.base_x, label="C(Z)")
    lipT = ClassicalLip(joint_space)

    eps = bridge.eps
    ball = set(joint_space.ball(bridge.base_x, 1.0 / eps)) | \
        set(joint_space.ball(bridge.base_y, 1.0 / eps))
    outside = [z for z in range(total) if z not in ball]
    h_vals = np.ones(total)
    for z in range(total) if outside else ():
        h_vals[z] = min(1.0, eps * min(bridge.joint[z, w] for w in outside))
    e = Operator.diagonal(h_vals)

    algX = function_algebra(n, pin_index=X.base, label="C(X)")
    algY = function_algebra(m, pin_index=Y.base, label="C(Y)")
    pi = restriction_morphism(D, algX, list(range(n)))
    rho = restriction_morphism(D, algY, list(range(n, total)))

    def cert_to(side_start, side_len):
        def w(phi):
            weights = np.zeros(side_len)
            for z in range(total):
                mass = float(phi.pair(D.basis[z]).real)
                if mass <= 1e-15:
                    continue
                if side_start <= z < side_start + side_len:
                    target = z - side_start
                else:
                    target = bridge.certificates[z] - side_start
                weights[target] += mass * h_vals[z] ** 2
            return StateVec(rho=Operator.diagonal(weights),
                            trace_mass=float(weights.sum()))
        return w

    pinned = [Operator.diagonal(
        np.maximum(1.0 - bridge.joint[bridge.base_x] / (k + 1), 0.0))
        for k in (4, 16, 64)]

    return Tunnel(D=D, lipT=lipT, e=e, pi=pi, rho=rho,
                  mu_A=character_delta(algX, X.base),
                  mu_B=character_delta(algY, Y.base), M=M,
                  witness_to_A=cert_to(0, n), witness_to_B=cert_to(n, m),
                  pinned_sequence=pinned,
                  label=label or "bridge")


# ---------------------------------------------------------------------------
# compact tunnels and conversions
# ---------------------------------------------------------------------------


@dataclass
class CompactTunnel:
    """Propinquity-style tunnel between unital compact spaces.

    Witness maps match states across the tunnel: witness_AtoB sends a state
    of A to a quasi-state of B whose pullbacks are mk-close, etc.
    """

    D: AlgebraSpec
    lipD: object
    lipA: object
    lipB: object
    pi: Morphism
    rho: Morphism
    mu_A: Functional
    mu_B: Functional
    witness_AtoB: object = None
    witness_BtoA: object = None
    witness_DtoA: object = None
    witness_DtoB: object = None
    label: str = ""
    measured: float = None
    bound: float = None

    def pointed_extent_measured(self, samples=4, seed=0, gap=DEFAULT_GAP):
        """Upper estimate of the pointed extent from witness matches."""
        vals = []
        sts = pure_state_sample(self.D, samples, seed)
        for phi in sts:
            for w, morph in ((self.witness_DtoB, self.rho),
                             (self.witness_DtoA, self.pi)):
                if w is None:
                    continue
                val, _ = mk(self.D, self.lipD, phi,
                            PulledState(_clamped(w(phi)), morph), gap=gap)
                vals.append(val)
        pin_val, _ = mk(self.D, self.lipD, PulledState(self.mu_A, self.pi),
                        PulledState(self.mu_B, self.rho), gap=gap)
        vals.append(pin_val)
        return max(vals) if vals else 0.0


def compact_to_tunnel(ct, eps, M=1.0, cfg=None):
    """Wrap a compact tunnel into a proper tunnel on A (+) D (+) B.

    ``eps`` is the supplied pointed extent of ``ct``; the produced tunnel's
    measured extent is compared against (3 eps + eps^2)/(1 + eps) and the
    verdict stored in ``composition_check``.
    """
    cfg = cfg or ExtentConfig()
    A, B, D0 = ct.pi.target, ct.rho.target, ct.D
    AD = direct_sum(A, D0, label="A(+)D")
    E = direct_sum(AD, B, label="A(+)D(+)B")
    nA, nD, nB = A.ambient_dim, D0.ambient_dim, B.ambient_dim
    total = nA + nD + nB

    coeff = (1 + eps) / eps if eps > 0 else 1e9
    lipT = MaxOf((
        (ElementMap(kind="block", start=0, stop=nA), ct.lipA),
        (ElementMap(kind="block", start=nA, stop=nA + nD), ct.lipD),
        (ElementMap(kind="block", start=nA + nD, stop=total), ct.lipB),
        (ElementMap(kind="id"),
         ScaledCoupling(coeff,
                        ElementMap(kind="block", start=0, stop=nA),
                        ElementMap(kind="block", start=nA, stop=nA + nD,
                                   linmap=ct.pi.apply, label="pi"))),
        (ElementMap(kind="id"),
         ScaledCoupling(coeff,
                        ElementMap(kind="block", start=nA + nD, stop=total),
                        ElementMap(kind="block", start=nA, stop=nA + nD,
                                   linmap=ct.rho.apply, label="rho"))),
    ))

    kA, kD, kB = len(A.basis), len(D0.basis), len(B.basis)
    CA = np.zeros((kA, kA + kD + kB), dtype=complex)
    CA[:, :kA] = np.eye(kA)
    CB = np.zeros((kB, kA + kD + kB), dtype=complex)
    CB[:, kA + kD:] = np.eye(kB)
    piE = Morphism(E, A, CA, label="piE")
    rhoE = Morphism(E, B, CB, label="rhoE")
    e = Operator.identity(total)

    def witness_to_B(phi):
        p1 = BlockFunctional(phi, 0, nA, total)
        p2 = BlockFunctional(phi, nA, nD, total)
        p3 = BlockFunctional(phi, nA + nD, nB, total)
        parts = []
        if p1.mass > 1e-12 and ct.witness_AtoB is not None:
            parts.append((1.0, ct.witness_AtoB(p1)))
        if p2.mass > 1e-12 and ct.witness_DtoB is not None:
            parts.append((1.0, ct.witness_DtoB(p2)))
        if p3.mass > 1e-12:
            parts.append((1.0, p3))
        return MixedFunctional(parts) if parts else StateVec.zero(nB)

    def witness_to_A(phi):
        p1 = BlockFunctional(phi, 0, nA, total)
        p2 = BlockFunctional(phi, nA, nD, total)
        p3 = BlockFunctional(phi, nA + nD, nB, total)
        parts = []
        if p3.mass > 1e-12 and ct.witness_BtoA is not None:
            parts.append((1.0, ct.witness_BtoA(p3)))
        if p2.mass > 1e-12 and ct.witness_DtoA is not None:
            parts.append((1.0, ct.witness_DtoA(p2)))
        if p1.mass > 1e-12:
            parts.append((1.0, p1))
        return MixedFunctional(parts) if parts else StateVec.zero(nA)

    out = Tunnel(D=E, lipT=lipT, e=e, pi=piE, rho=rhoE,
                 mu_A=ct.mu_A, mu_B=ct.mu_B, M=M,
                 witness_to_A=witness_to_A, witness_to_B=witness_to_B,
                 pinned_sequence=[e], label=f"compact->proper[{ct.label}]")
    bound = (3 * eps + eps * eps) / (1 + eps) if eps > 0 else 0.0
    rep = extent(out, cfg)
    out.composition_check = {
        "measured": rep.total.upper, "bound": bound, "eps": eps,
        "ok": bool(rep.total.upper <= bound + rep.total.width + 1e-7)}
    return out


def _double_stacks(t, r, ext, sa):
    """Constraint stacks of the Lip[S] body on D (+) D coordinates."""
    k = len(sa)
    mats = [e.to_array() for e in sa]
    n = t.D.ambient_dim
    ident = np.eye(n, dtype=complex)
    muA_pi = PulledState(t.mu_A, t.pi)
    muB_rho = PulledState(t.mu_B, t.rho)
    cA = np.array([float(muA_pi.pair(e).real) for e in sa])
    cB = np.array([float(muB_rho.pair(e).real) for e in sa])

    def both(left, right):
        return np.concatenate([left, right], axis=0)

    zero = np.zeros((k, n, n), dtype=complex)
    stacks = []
    stacks.append(both(np.stack([(mats[i] - cA[i] * ident) / r
                                 for i in range(k)]), zero))
    stacks.append(both(zero, np.stack([(mats[i] - cB[i] * ident) / r
                                       for i in range(k)])))
    for m in t.lipT.maps():
        img = np.stack([m(e).to_array() for e in sa])
        zz = np.zeros_like(img)
        stacks.append(both(img, zz))
        stacks.append(both(zz, img))
    coupling = both(np.stack(mats), -np.stack(mats)) / max(ext, 1e-12)
    stacks.append(coupling)
    return stacks


class QuotientLip:
    """Lip[Q](a, b) = inf{ Lip[S](d1, d2) : pi(d1) = a, rho(d2) = b },
    evaluated by the lift solver over the double fiber."""

    def __init__(self, t, r, ext):
        self.t = t
        self.r = r
        self.ext = ext
        self.sa = t.D.sa_basis()
        self.stacks = _double_stacks(t, r, ext, self.sa)
        self.nA = t.pi.target.ambient_dim

    def eval(self, ab):
        t = self.t
        arr = ab.to_array()
        a = Operator.from_dense(arr[:self.nA, :self.nA])
        b = Operator.from_dense(arr[self.nA:, self.nA:])
        x1, N1 = _fiber(t.pi, a, self.sa)
        x2, N2 = _fiber(t.rho, b, self.sa)
        k = len(self.sa)
        x0 = np.concatenate([x1, x2])
        N = np.zeros((2 * k, N1.shape[1] + N2.shape[1]))
        N[:k, :N1.shape[1]] = N1
        N[k:, N1.shape[1]:] = N2
        consts = [np.tensordot(x0, T, axes=(0, 0)) for T in self.stacks]
        reduced = [np.tensordot(N.T, T, axes=(1, 0)) for T in self.stacks]
        _, val = _smoothed_affine_min(consts, reduced)
        return val

    def maps(self):
        raise NotImplementedError("quotient seminorm has no max-normal form")


def tunnel_to_compact(t, r, samples=4, seed=0, cfg=None):
    """Quotient a proper tunnel between compact spaces to a compact tunnel.

    Precondition: extent < min{3, 1/(4r+6)} (the max version of this
    threshold would be vacuous).  The returned compact tunnel's
    measured pointed extent is stored with the budget ext*(3 + 9r + 4r^2).
    """
    cfg = cfg or ExtentConfig()
    rep = extent(t, cfg)
    ext = rep.total.upper
    if not ext < min(3.0, 1.0 / (4 * r + 6)):
        raise ValueError(
            f"extent {ext} above the threshold {min(3.0, 1.0 / (4 * r + 6))}")
    A, B = t.pi.target, t.rho.target
    E = direct_sum(A, B, label="A(+)B")
    nA, nB = A.ambient_dim, B.ambient_dim
    kA, kB = len(A.basis), len(B.basis)
    CA = np.zeros((kA, kA + kB), dtype=complex)
    CA[:, :kA] = np.eye(kA)
    CB = np.zeros((kB, kA + kB), dtype=complex)
    CB[:, kA:] = np.eye(kB)
    etaA = Morphism(E, A, CA, label="etaA")
    etaB = Morphism(E, B, CB, label="etaB")

    lipQ = QuotientLip(t, r, ext)

    def witness_AtoB(phi_on_A):
        wit = t.witness_to_B(PulledState(phi_on_A, t.pi))
        mass = wit.mass
        if mass <= 1e-9:
            return StateVec.zero(nB)
        # mass normalization of the matched quasi-state, as in the proof
        return _scaled(wit, 1.0 / mass)

    def witness_BtoA(phi_on_B):
        wit = t.witness_to_A(PulledState(phi_on_B, t.rho))
        mass = wit.mass
        if mass <= 1e-9:
            return StateVec.zero(nA)
        return _scaled(wit, 1.0 / mass)

    ct = CompactTunnel(D=E, lipD=lipQ, lipA=None, lipB=None,
                       pi=etaA, rho=etaB, mu_A=t.mu_A, mu_B=t.mu_B,
                       witness_AtoB=witness_AtoB, witness_BtoA=witness_BtoA,
                       label=f"proper->compact[{t.label}]")
    ct.measured = _compact_pointed_extent(t, ct, r, ext, samples, seed)
    ct.bound = ext * (3 + 9 * r + 4 * r * r)
    return ct


def _compact_pointed_extent(t, ct, r, ext, samples, seed):
    """Measured pointed extent of the quotient compact tunnel.

    mk_{Lip[Q]}(phi o etaA, psi o etaB) equals the sup of the pulled pairing
    over the Lip[S] unit body on D (+) D; all constraints there are linear
    matrix maps, so the splitting dual gives a certified upper bound.
    """
    sa = t.D.sa_basis()
    stacks = _double_stacks(t, r, ext, sa)

    def pair_value(phiA, psiB):
        cA = np.array([float(PulledState(phiA, t.pi).pair(e).real) for e in sa])
        cB = np.array([float(PulledState(psiB, t.rho).pair(e).real) for e in sa])
        prob = SpectralProblem(c=np.concatenate([cA, -cB]), stacks=stacks)
        return prob.upper_bound(budget=3000)

    worst = pair_value(t.mu_A, t.mu_B)
    for phi in pure_state_sample(t.pi.target, samples, seed):
        worst = max(worst, pair_value(phi, _clamped(ct.witness_AtoB(phi))))
    for psi in pure_state_sample(t.rho.target, samples, seed + 1):
        worst = max(worst, pair_value(_clamped(ct.witness_BtoA(psi)), psi))
    return worst


# ---------------------------------------------------------------------------
# metametrics
# ---------------------------------------------------------------------------


def metametric_upper(portfolio, M=None, cfg=None):
    """min of extent upper bounds over a tunnel portfolio (lower stays 0:
    infima over all tunnels are never certified)."""
    if not portfolio:
        raise ValueError("empty portfolio")
    uppers = []
    for t in portfolio:
        if M is not None and t.M != M:
            continue
        uppers.append(extent(t, cfg).total.upper)
    if not uppers:
        raise ValueError("no tunnels at the requested M")
    return MetricBracket(0.0, min(uppers), method="portfolio-min")


def dh_upper(uppers_by_r, qdiam_a, qdiam_b):
    """Quantum metametric upper bound from per-cutoff tunnel portfolios.

    uppers_by_r: {r: Lambda_r upper bound} on a grid covering
    [1, 1/eps_target]; qdiam = +inf contributes exp(-inf) = 0 to the
    diameter term.
    """
    rs = sorted(uppers_by_r)
    if not rs:
        raise ValueError("empty r-grid")

    def sup_up_to(eps):
        vals = [uppers_by_r[r] for r in rs if r <= 1.0 / eps]
        return max(vals) if vals else uppers_by_r[rs[0]]

    lo, hi = 1e-12, 2 * max(max(uppers_by_r.values()), 1e-9) + 1.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if sup_up_to(mid) < mid:
            hi = mid
        else:
            lo = mid
    eps_star = hi
    da = 0.0 if math.isinf(qdiam_a) else math.exp(-qdiam_a)
    db = 0.0 if math.isinf(qdiam_b) else math.exp(-qdiam_b)
    return max(eps_star, abs(da - db))


def geometric_r_grid(eps_target, points=8):
    """Geometric grid on [1, 1/eps]: monotonicity of Lambda_r in r is not
    established, so the metametric is evaluated on a grid."""
    top = max(1.0 / eps_target, 1.0)
    return [float(r) for r in np.geomspace(1.0, top, points)]
