"""Seminorm expression trees and their evaluation.

Every node evaluates to max_j ||A_j(a)|| for finitely many linear matrix
maps A_j of the element a.  That normal form is what both solver paths
consume: the spectral solver materializes the maps on a self-adjoint basis,
and the LP path applies when every materialized map is supported on a single
diagonal offset with real entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import FinitePointedMetricSpace, classical_lip
from .opcore import GAMMA1, GAMMA2, Operator, commutator, gamma_pair_norm, opnorm, tensor_gamma


class SeminormSpec:
    """Base node; subclasses are immutable and serializable."""

    def eval(self, a):
        raise NotImplementedError

    def maps(self):
        """Linear matrix maps m with eval(a) = max_m ||m(a)||."""
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError


def _diag_values(a):
    vals = a.band(0)
    off = [k for k in a.offsets() if k != 0]
    if off:
        raise ValueError("element is not diagonal")
    return np.real_if_close(vals)


@dataclass(frozen=True)
class ElementMap:
    """A declarative linear map of elements: extract a block, then multiply.

    kind 'id'        : a -> a
    kind 'block'     : a -> compression of a to rows/cols [start, stop)
    optional factors : a -> left @ a @ right (either may be None)
    optional linmap  : an arbitrary callable (not serializable; labeled)
    """

    kind: str = "id"
    start: int = 0
    stop: int = 0
    left: Operator | None = None
    right: Operator | None = None
    linmap: object | None = None
    label: str = ""

    def __call__(self, a):
        out = a
        if self.kind == "block":
            sub = out.to_array()[self.start:self.stop, self.start:self.stop]
            out = Operator.from_dense(sub)
        if self.linmap is not None:
            out = self.linmap(out)
        if self.left is not None:
            out = self.left @ out
        if self.right is not None:
            out = out @ self.right
        return out

    def to_json(self):
        rec = {"kind": self.kind, "start": self.start, "stop": self.stop,
               "label": self.label}
        if self.left is not None:
            rec["left"] = self.left.to_json()
        if self.right is not None:
            rec["right"] = self.right.to_json()
        if self.linmap is not None:
            rec["linmap"] = self.label or "opaque"
        return rec


@dataclass(frozen=True)
class CommutatorDirac(SeminormSpec):
    """a -> || sum_k [D_k, a] (x) gamma_k ||; plain ||[D, a]|| for one D."""

    derivation_ops: tuple
    use_gammas: bool = True
    pre: ElementMap = ElementMap()

    def eval(self, a):
        a = self.pre(a)
        ds = self.derivation_ops
        if len(ds) == 1 and not self.use_gammas:
            return opnorm(commutator(ds[0], a))
        if len(ds) == 1:
            return opnorm(commutator(ds[0], a))
        if len(ds) == 2:
            x = commutator(ds[0], a)
            y = commutator(ds[1], a)
            return gamma_pair_norm(x, y)
        gammas = (GAMMA1, GAMMA2)
        total = None
        for d, g in zip(ds, gammas):
            term = tensor_gamma(commutator(d, a), g)
            total = term if total is None else total + term
        return opnorm(total)

    def maps(self):
        ds = self.derivation_ops
        if len(ds) == 1:
            return [lambda a, d=ds[0]: commutator(d, self.pre(a))]
        if len(ds) == 2:
            d1, d2 = ds
            return [
                lambda a: commutator(d1, self.pre(a)) + 1j * commutator(d2, self.pre(a)),
                lambda a: commutator(d1, self.pre(a)) - 1j * commutator(d2, self.pre(a)),
            ]
        raise NotImplementedError("more than two derivation blocks")

    def to_json(self):
        return {"node": "commutator_dirac",
                "derivations": [d.to_json() for d in self.derivation_ops],
                "use_gammas": self.use_gammas}


@dataclass(frozen=True)
class ClassicalLip(SeminormSpec):
    """f -> max |f(x)-f(y)|/d(x,y) on a finite metric space (diagonal elements)."""

    space: FinitePointedMetricSpace
    pre: ElementMap = ElementMap()

    def eval(self, a):
        vals = _diag_values(self.pre(a))
        return classical_lip(vals, self.space.dist)

    def pairs(self):
        n = self.space.n
        return [(i, j) for i in range(n) for j in range(i + 1, n)
                if self.space.dist[i, j] > 0]

    def maps(self):
        pairs = self.pairs()
        d = self.space.dist

        def quotient(a):
            vals = self.pre(a).band(0)
            q = np.array([(vals[i] - vals[j]) / d[i, j] for i, j in pairs])
            return Operator.diagonal(q)

        return [quotient]

    def to_json(self):
        return {"node": "classical_lip", "space": self.space.to_json()}


@dataclass(frozen=True)
class MaxOf(SeminormSpec):
    """Pointwise max of component seminorms (components extract blocks)."""

    parts: tuple

    def eval(self, a):
        return max(spec.eval(extract(a)) for extract, spec in self.parts)

    def maps(self):
        out = []
        for extract, spec in self.parts:
            for m in spec.maps():
                out.append(lambda a, e=extract, mm=m: mm(e(a)))
        return out

    def to_json(self):
        return {"node": "max_of",
                "parts": [{"extract": e.to_json(), "spec": s.to_json()}
                          for e, s in self.parts]}


@dataclass(frozen=True)
class ScaledCoupling(SeminormSpec):
    """(d1, d2) -> c * || m1(d) - m2(d) || for two element maps."""

    c: float
    map1: ElementMap
    map2: ElementMap

    def eval(self, a):
        return self.c * opnorm(self.map1(a) - self.map2(a))

    def maps(self):
        return [lambda a: self.c * (self.map1(a) - self.map2(a))]

    def to_json(self):
        return {"node": "scaled_coupling", "c": self.c,
                "map1": self.map1.to_json(), "map2": self.map2.to_json()}


@dataclass(frozen=True)
class NormImage(SeminormSpec):
    """a -> c * || m(a) ||."""

    c: float
    map: ElementMap

    def eval(self, a):
        return self.c * opnorm(self.map(a))

    def maps(self):
        return [lambda a: self.c * self.map(a)]

    def to_json(self):
        return {"node": "norm_image", "c": self.c, "map": self.map.to_json()}


@dataclass(frozen=True)
class Scaled(SeminormSpec):
    """a -> c * base(a)."""

    c: float
    base: SeminormSpec

    def eval(self, a):
        return self.c * self.base.eval(a)

    def maps(self):
        return [lambda a, m=m: self.c * m(a) for m in self.base.maps()]

    def to_json(self):
        return {"node": "scaled", "c": self.c, "base": self.base.to_json()}


@dataclass(frozen=True)
class Composite(SeminormSpec):
    """a -> max(||a|| / M, base(a)): the M-scaled norm |.|_{L,M}."""

    M: float
    base: SeminormSpec

    def eval(self, a):
        return max(opnorm(a) / self.M, self.base.eval(a))

    def maps(self):
        return [lambda a: (1.0 / self.M) * a] + self.base.maps()

    def to_json(self):
        return {"node": "composite", "M": self.M, "base": self.base.to_json()}


def from_json(obj):
    node = obj["node"]
    if node == "commutator_dirac":
        return CommutatorDirac(tuple(Operator.from_json(d) for d in obj["derivations"]),
                               use_gammas=obj.get("use_gammas", True))
    if node == "classical_lip":
        return ClassicalLip(FinitePointedMetricSpace.from_json(obj["space"]))
    if node == "max_of":
        parts = []
        for rec in obj["parts"]:
            e = rec["extract"]
            parts.append((ElementMap(kind=e["kind"], start=e.get("start", 0),
                                     stop=e.get("stop", 0)),
                          from_json(rec["spec"])))
        return MaxOf(tuple(parts))
    if node == "composite":
        return Composite(float(obj["M"]), from_json(obj["base"]))
    if node == "scaled_coupling":
        def read_map(rec):
            return ElementMap(kind=rec["kind"], start=rec.get("start", 0),
                              stop=rec.get("stop", 0),
                              left=Operator.from_json(rec["left"]) if "left" in rec else None,
                              right=Operator.from_json(rec["right"]) if "right" in rec else None)
        return ScaledCoupling(float(obj["c"]), read_map(obj["map1"]), read_map(obj["map2"]))
    raise ValueError(f"unknown seminorm node {node}")


# ---------------------------------------------------------------------------
# checks on seminorm values
# ---------------------------------------------------------------------------


def scaled_norm(spec, M, a):
    """||a||_{L,M} = max(||a||/M, L(a))."""
    return max(opnorm(a) / M, spec.eval(a))


def leibniz_check(spec, a, b, tol=1e-8):
    """Lip(ab) <= ||a|| Lip(b) + Lip(a) ||b|| + tol; returns (ok, slack)."""
    lhs = spec.eval(a @ b)
    rhs = opnorm(a) * spec.eval(b) + spec.eval(a) * opnorm(b)
    return lhs <= rhs + tol, rhs - lhs


def aba_bound_check(spec, a, b, tol=1e-8):
    """Sandwich bound Lip(aba) <= ||a|| (2 ||b|| Lip(a) + ||a|| Lip(b)).

    The bound follows the Leibniz chain for a*(b*a); the variant with the
    roles of the Lipschitz factors exchanged is reported alongside.
    """
    lhs = spec.eval(a @ b @ a)
    na, nb = opnorm(a), opnorm(b)
    la, lb = spec.eval(a), spec.eval(b)
    rhs = na * (2 * nb * la + na * lb)
    rhs_swapped = na * (2 * nb * lb + na * la)
    return lhs <= rhs + tol, {"slack": rhs - lhs, "rhs": rhs,
                              "rhs_swapped": rhs_swapped}


def axiom_violations(spec, a, b, tol=1e-8):
    """Homogeneity / subadditivity / hermitian defects on a random pair."""
    va, vb = spec.eval(a), spec.eval(b)
    out = {}
    t = 1.7
    out["homogeneity"] = abs(spec.eval(t * a) - abs(t) * va)
    out["subadditivity"] = max(0.0, spec.eval(a + b) - (va + vb))
    out["hermitian"] = abs(spec.eval(a.adjoint()) - va)
    return out


# ---------------------------------------------------------------------------
# polyhedral normal form (LP path)
# ---------------------------------------------------------------------------


def polyhedral_rows(spec, sa_basis):
    """Rows R with eval(sum_i x_i e_i) = max |R x|, or None.

    Exists when every materialized constraint matrix is supported on a
    single common diagonal offset with real entries: the situation for
    classical Lipschitz seminorms, diagonal couplings, and single-band
    commutator seminorms on diagonal algebras.
    """
    rows = []
    try:
        for m in spec.maps():
            images = [m(e) for e in sa_basis]
            offsets = set()
            for img in images:
                offsets |= set(img.offsets())
            if len(offsets) > 1:
                return None
            off = offsets.pop() if offsets else 0
            block = np.stack([img.band(off) for img in images])
            if np.max(np.abs(block.imag)) > 1e-11:
                return None
            rows.append(block.real.T)   # (entries, k)
    except (NotImplementedError, ValueError):
        return None
    if not rows:
        return None
    return np.concatenate(rows, axis=0)
