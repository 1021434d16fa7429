"""Concrete finite-dimensional C*-algebras, states, characters and morphisms.

An AlgebraSpec is a linear basis of operators on an ambient C^n, closed (up
to tolerance) under products and adjoints, together with a distinguished
commutative topography sub-basis and a pin state.  States are stored as
ambient density representatives; two states are "the same" exactly when
their pairings against the basis agree, so the ambient representative never
leaks into comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .opcore import Operator, commutator, opnorm

CLOSURE_TOL = 1e-9
COMMUTE_TOL = 1e-10
CHARACTER_TOL = 1e-8
PSD_TOL = 1e-10


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


class Functional:
    """Anything that pairs with algebra elements: states, pullbacks, compressions."""

    def pair(self, a):
        raise NotImplementedError

    @property
    def mass(self):
        raise NotImplementedError


@dataclass
class StateVec(Functional):
    """A (quasi-)state as an ambient density representative.

    ``rho`` is positive semidefinite with trace equal to ``trace_mass``;
    trace_mass = 1 for states, < 1 for proper quasi-states (0 is allowed).
    A rank-one state may carry its defining vector instead of the matrix.
    """

    rho: Operator | None
    trace_mass: float
    vec: np.ndarray | None = None

    def __post_init__(self):
        if self.rho is None and self.vec is None:
            raise ValidationError("state needs a density or a vector")
        if self.vec is not None:
            self.vec = np.asarray(self.vec, dtype=complex)

    @staticmethod
    def from_vector(v, mass=1.0):
        v = np.asarray(v, dtype=complex)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValidationError("zero vector")
        return StateVec(rho=None, trace_mass=float(mass), vec=v / nrm * np.sqrt(mass))

    @staticmethod
    def zero(dim):
        return StateVec(rho=Operator.zero(dim, banded=True), trace_mass=0.0)

    def validate(self):
        if self.vec is not None:
            got = float(np.vdot(self.vec, self.vec).real)
            if abs(got - self.trace_mass) > 1e-8:
                raise ValidationError("vector norm does not match trace_mass")
            return True
        mat = self.rho.to_array()
        if np.max(np.abs(mat - mat.conj().T)) > 1e-9:
            raise ValidationError("density not hermitian")
        eigs = np.linalg.eigvalsh((mat + mat.conj().T) / 2)
        if eigs.size and eigs.min() < -PSD_TOL:
            raise ValidationError(f"density not psd (min eig {eigs.min():.2e})")
        if abs(float(np.trace(mat).real) - self.trace_mass) > 1e-8:
            raise ValidationError("trace does not match trace_mass")
        return True

    def pair(self, a):
        if self.vec is not None:
            return complex(np.vdot(self.vec, a.matvec(self.vec)))
        if self.rho.is_banded and a.is_banded:
            # tr(rho a) = sum_k <rho band k, a band -k>; storage rows align.
            total = 0.0 + 0.0j
            for k, diag in self.rho.bands.items():
                total += np.dot(diag, a.band(-k))
            return complex(total)
        return complex(np.trace(self.rho.to_array() @ a.to_array()))

    @property
    def mass(self):
        return self.trace_mass

    def to_json(self):
        rho = self.rho if self.rho is not None else _vec_density(self.vec)
        return {"rho": rho.to_json(), "trace_mass": self.trace_mass}

    @staticmethod
    def from_json(obj):
        return StateVec(rho=Operator.from_json(obj["rho"]),
                        trace_mass=float(obj["trace_mass"]))


def _vec_density(v):
    return Operator.from_dense(np.outer(v, np.conj(v)))


@dataclass
class PulledState(Functional):
    """psi o m for a *-morphism m; pairs on the morphism's source."""

    state: Functional
    morphism: "Morphism"

    def pair(self, a):
        return self.state.pair(self.morphism.apply(a))

    @property
    def mass(self):
        return self.state.mass


@dataclass
class CompressedState(Functional):
    """a |-> phi(e a e); a quasi-state whenever ||e|| <= 1."""

    state: Functional
    e: Operator

    def pair(self, a):
        return self.state.pair(self.e @ a @ self.e)

    @property
    def mass(self):
        return float(self.state.pair(self.e @ self.e).real)


@dataclass
class MappedFunctional(Functional):
    """Pair through an arbitrary element map (used by structural tunnels)."""

    state: Functional
    fn: object
    mass_value: float | None = None

    def pair(self, a):
        return self.state.pair(self.fn(a))

    @property
    def mass(self):
        return self.mass_value if self.mass_value is not None else self.state.mass


# ---------------------------------------------------------------------------
# algebras
# ---------------------------------------------------------------------------


def _vectorize(ops):
    return np.stack([op.to_array().reshape(-1) for op in ops])


@dataclass
class AlgebraSpec:
    """A concrete C*-algebra: basis in B(C^n), topography indices, pin."""

    ambient_dim: int
    basis: list
    unital: bool
    topography: list
    pin: StateVec | None = None
    label: str = ""
    _sa: list = field(default=None, repr=False)
    _gram_inv: np.ndarray = field(default=None, repr=False)

    def validate(self, check_closure=True):
        V = _vectorize(self.basis)
        rank = np.linalg.matrix_rank(V, tol=1e-10)
        if rank < len(self.basis):
            raise ValidationError("basis is linearly dependent")
        if check_closure:
            for i, a in enumerate(self.basis):
                self._project(a.adjoint(), err=f"adjoint of basis[{i}]")
                for j, b in enumerate(self.basis):
                    self._project(a @ b, err=f"product basis[{i}]*basis[{j}]")
        for i in self.topography:
            for j in self.topography:
                if opnorm(commutator(self.basis[i], self.basis[j])) > COMMUTE_TOL:
                    raise ValidationError(f"topography elements {i},{j} do not commute")
        if self.pin is not None:
            self.pin.validate()
            for i in self.topography:
                for j in self.topography:
                    ti, tj = self.basis[i], self.basis[j]
                    lhs = self.pin.pair(ti @ tj)
                    rhs = self.pin.pair(ti) * self.pin.pair(tj)
                    if abs(lhs - rhs) > CHARACTER_TOL:
                        raise ValidationError(
                            f"pin is not multiplicative on topography ({i},{j}): "
                            f"{abs(lhs - rhs):.2e}")
        return True

    # -- coordinates ---------------------------------------------------

    def _gram(self):
        if self._gram_inv is None:
            V = _vectorize(self.basis)
            G = V.conj() @ V.T
            self._gram_inv = np.linalg.pinv(G, rcond=1e-12)
            self._V = V
        return self._gram_inv

    def coords_of(self, a, tol=CLOSURE_TOL):
        """Complex coordinates of ``a`` in the basis; error if outside span."""
        Ginv = self._gram()
        v = a.to_array().reshape(-1)
        rhs = self._V.conj() @ v
        c = Ginv @ rhs
        residual = np.linalg.norm(v - self._V.T @ c)
        scale = max(1.0, np.linalg.norm(v))
        if residual > tol * scale:
            raise ValidationError(f"element outside span (residual {residual:.2e})")
        return c

    def _project(self, a, err=""):
        try:
            return self.coords_of(a)
        except ValidationError as exc:
            raise ValidationError(f"span not closed: {err}: {exc}") from exc

    def element_of(self, coords):
        out = Operator.zero(self.ambient_dim)
        for c, b in zip(coords, self.basis):
            out = out + complex(c) * b
        return out

    # -- self-adjoint real basis ---------------------------------------

    def sa_basis(self):
        """Orthonormal real basis of the self-adjoint part of the span."""
        if self._sa is None and self.is_diagonal:
            diags = np.stack([b.band(0) for b in self.basis])
            cands = np.concatenate([diags.real, diags.imag], axis=0)
            u, s, vt = np.linalg.svd(cands, full_matrices=False)
            keep = s > 1e-10 * (s[0] if s.size else 1.0)
            self._sa = [Operator.diagonal(row, banded=True) for row in vt[keep]]
        if self._sa is None:
            cands = []
            for b in self.basis:
                cands.append((b + b.adjoint()) * 0.5)
                cands.append((b - b.adjoint()) * complex(0, -0.5))
            mats = np.stack([c.to_array() for c in cands])
            flat = mats.reshape(len(cands), -1)
            real = np.concatenate([flat.real, flat.imag], axis=1)
            u, s, vt = np.linalg.svd(real, full_matrices=False)
            keep = s > 1e-10 * (s[0] if s.size else 1.0)
            n = self.ambient_dim
            half = n * n
            out = []
            for row in vt[keep]:
                mat = (row[:half] + 1j * row[half:]).reshape(n, n)
                mat = (mat + mat.conj().T) / 2
                nrm = np.linalg.norm(mat)
                if nrm > 1e-12:
                    out.append(Operator.from_dense(mat / nrm))
            self._sa = out
        return self._sa

    @property
    def is_diagonal(self):
        return all(set(b.offsets()) <= {0} for b in self.basis)

    def topography_ops(self):
        return [self.basis[i] for i in self.topography]

    def states_equal(self, phi, psi, tol=1e-9):
        return all(abs(phi.pair(b) - psi.pair(b)) <= tol for b in self.basis)

    def to_json(self):
        return {
            "label": self.label,
            "ambient_dim": self.ambient_dim,
            "unital": self.unital,
            "basis": [b.to_json() for b in self.basis],
            "topography": list(self.topography),
            "pin": self.pin.to_json() if self.pin is not None else None,
        }

    @staticmethod
    def from_json(obj):
        return AlgebraSpec(
            ambient_dim=int(obj["ambient_dim"]),
            basis=[Operator.from_json(b) for b in obj["basis"]],
            unital=bool(obj["unital"]),
            topography=[int(i) for i in obj["topography"]],
            pin=StateVec.from_json(obj["pin"]) if obj.get("pin") else None,
            label=obj.get("label", ""),
        )


def function_algebra(n_points, pin_index=0, label="C(X)", banded=False):
    """The diagonal algebra of all functions on n points."""
    basis = []
    for i in range(n_points):
        v = np.zeros(n_points, dtype=complex)
        v[i] = 1.0
        basis.append(Operator.diagonal(v, banded=banded))
    pin = character_density(n_points, pin_index)
    return AlgebraSpec(ambient_dim=n_points, basis=basis, unital=True,
                       topography=list(range(n_points)), pin=pin, label=label)


def character_density(dim, index):
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return StateVec.from_vector(v)


def character_delta(alg, point_index):
    """Evaluation character at a diagonal slot of a commutative algebra."""
    if not alg.is_diagonal:
        raise ValidationError("character_delta needs a diagonal algebra")
    if not 0 <= point_index < alg.ambient_dim:
        raise IndexError("point index out of range")
    return character_density(alg.ambient_dim, point_index)


def matrix_algebra(n, label=None):
    """Full matrix algebra M_n with matrix-unit basis."""
    basis = []
    for i in range(n):
        for j in range(n):
            m = np.zeros((n, n), dtype=complex)
            m[i, j] = 1.0
            basis.append(Operator.from_dense(m))
    diag_idx = [i * n + i for i in range(n)]
    pin = character_density(n, 0)
    return AlgebraSpec(ambient_dim=n, basis=basis, unital=True,
                       topography=diag_idx, pin=pin, label=label or f"M{n}")


def direct_sum(a, b, label=None):
    """Block-diagonal direct sum; the caller supplies the pin afterwards."""
    n, m = a.ambient_dim, b.ambient_dim
    basis = []
    for op in a.basis:
        mat = np.zeros((n + m, n + m), dtype=complex)
        mat[:n, :n] = op.to_array()
        basis.append(Operator.from_dense(mat))
    for op in b.basis:
        mat = np.zeros((n + m, n + m), dtype=complex)
        mat[n:, n:] = op.to_array()
        basis.append(Operator.from_dense(mat))
    topo = list(a.topography) + [len(a.basis) + i for i in b.topography]
    return AlgebraSpec(ambient_dim=n + m, basis=basis,
                       unital=a.unital and b.unital, topography=topo,
                       pin=None, label=label or f"{a.label}(+){b.label}")


def pure_state_sample(alg, count, seed):
    """Rank-one densities from uniformly random ambient unit vectors."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        v = rng.standard_normal(alg.ambient_dim) + 1j * rng.standard_normal(alg.ambient_dim)
        out.append(StateVec.from_vector(v))
    return out


def embed_state(state, offset, total_dim):
    """View a state on a block as a state on the direct-sum ambient."""
    if state.vec is not None:
        v = np.zeros(total_dim, dtype=complex)
        v[offset:offset + len(state.vec)] = state.vec
        return StateVec(rho=None, trace_mass=state.trace_mass, vec=v)
    small = state.rho.to_array()
    k = small.shape[0]
    big = np.zeros((total_dim, total_dim), dtype=complex)
    big[offset:offset + k, offset:offset + k] = small
    return StateVec(rho=Operator.from_dense(big), trace_mass=state.trace_mass)


# ---------------------------------------------------------------------------
# morphisms
# ---------------------------------------------------------------------------


@dataclass
class Morphism:
    """Linear map on basis coordinates: image(basis_src[i]) = sum_j C[j,i] basis_tgt[j]."""

    source: AlgebraSpec
    target: AlgebraSpec
    coord_matrix: np.ndarray
    label: str = ""
    verified_flags: dict = field(default_factory=dict)

    def __post_init__(self):
        C = np.asarray(self.coord_matrix, dtype=complex)
        if C.shape != (len(self.target.basis), len(self.source.basis)):
            raise ValidationError(
                f"coord_matrix shape {C.shape} != ({len(self.target.basis)},"
                f" {len(self.source.basis)})")
        self.coord_matrix = C

    def apply(self, a):
        coords = self.source.coords_of(a)
        return self.target.element_of(self.coord_matrix @ coords)

    def pull(self, state):
        return PulledState(state, self)


def check_star_morphism(m, tol=1e-8):
    """Set star/multiplicative/surjective/topographic flags from numeric checks."""
    src, tgt = m.source, m.target
    report = {}
    star_err = 0.0
    mult_err = 0.0
    images = [m.apply(b) for b in src.basis]
    for i, b in enumerate(src.basis):
        diff = m.apply(b.adjoint()) - images[i].adjoint()
        star_err = max(star_err, opnorm(diff))
        for j, c in enumerate(src.basis):
            diff = m.apply(b @ c) - images[i] @ images[j]
            mult_err = max(mult_err, opnorm(diff))
    report["star"] = star_err <= tol
    report["star_err"] = star_err
    report["multiplicative"] = mult_err <= tol
    report["mult_err"] = mult_err
    rank = np.linalg.matrix_rank(m.coord_matrix, tol=1e-10)
    report["surjective"] = bool(rank == len(tgt.basis))
    topo_err = 0.0
    topo_span = _vectorize(tgt.topography_ops()) if tgt.topography else None
    for i in src.topography:
        img = images[i].to_array().reshape(-1)
        if topo_span is None:
            topo_err = max(topo_err, float(np.linalg.norm(img)))
            continue
        coef, *_ = np.linalg.lstsq(topo_span.T, img, rcond=None)
        topo_err = max(topo_err, float(np.linalg.norm(img - topo_span.T @ coef)))
    report["topographic"] = topo_err <= tol
    report["topo_err"] = topo_err
    m.verified_flags = {k: v for k, v in report.items()
                        if k in ("star", "multiplicative", "surjective", "topographic") and v}
    return report


def identity_morphism(alg):
    return Morphism(alg, alg, np.eye(len(alg.basis)), label="id")


def block_projection(sum_alg, part, which, n_first_basis):
    """Projection A(+)B -> A (which=0) or -> B (which=1) on basis coordinates."""
    k = len(part.basis)
    total = len(sum_alg.basis)
    C = np.zeros((k, total), dtype=complex)
    start = 0 if which == 0 else n_first_basis
    for i in range(k):
        C[i, start + i] = 1.0
    return Morphism(sum_alg, part, C, label=f"proj{which}")


def restriction_morphism(joint_alg, part_alg, indices):
    """C(Z) -> C(S): restrict functions to the points listed in ``indices``."""
    C = np.zeros((len(part_alg.basis), len(joint_alg.basis)), dtype=complex)
    for out_pos, z in enumerate(indices):
        C[out_pos, z] = 1.0
    return Morphism(joint_alg, part_alg, C, label="restrict")


def is_pinned_exhaustive(seq, lip_values, pin, norms, tol=1e-6):
    """Accept (h_n) as Lipschitz pinned exhaustive: Lip dec -> <= tol,
    mu(h_n) -> 1 and ||h_n|| -> 1 at the final index."""
    lips = list(lip_values)
    if any(lips[i + 1] > lips[i] + 1e-12 for i in range(len(lips) - 1)):
        return False
    if lips and lips[-1] > tol:
        return False
    if abs(pin.pair(seq[-1]).real - 1.0) > tol:
        return False
    if abs(norms[-1] - 1.0) > tol:
        return False
    return True
