"""Covariance-matrix calculus for Gaussian states on a symplectic space.

Generators ``Q_k`` obey ``[Q_k, Q_l] = i * form[k, l]``. The form may be
degenerate: rows of zeros mark central (classical) generators, which are
carried through every operation as ordinary Gaussian variables.

Covariances use the symmetrized convention
``cov[k, l] = 1/2 <{Q_k - m_k, Q_l - m_l}>``, so a canonical vacuum mode
has ``cov = diag(1/2, 1/2)`` and the characteristic function is
``exp(i beta.m - beta.cov.beta / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import DimensionError, InvalidMeasurementError, SingularMeasurementError

PSD_TOL = 1e-12
RS_TOL = 1e-10
FORM_TOL = 1e-10


def _as_real_matrix(a, n=None, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise DimensionError(f"{name} has size {a.shape[0]}, expected {n}")
    return a


def _as_real_vector(v, n, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionError(f"{name} has shape {v.shape}, expected ({n},)")
    return v


@dataclass(frozen=True, eq=False)
class SymplecticSpace:
    """Ordered generator labels with their commutator form."""

    labels: tuple
    form: np.ndarray

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate generator labels: {labels}")
        form = _as_real_matrix(self.form, len(labels), "form")
        if not np.array_equal(form, -form.T):
            raise ValueError("form must be exactly antisymmetric")
        form = form.copy()
        form.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "form", form)

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DimensionError(f"unknown generator {label!r}") from None

    def indices(self, keys: Iterable) -> list:
        """Resolve labels or integer positions to positions."""
        out = []
        for k in keys:
            if isinstance(k, (int, np.integer)):
                if not 0 <= k < self.n:
                    raise DimensionError(f"generator index {k} out of range")
                out.append(int(k))
            else:
                out.append(self.index(k))
        return out

    def restrict(self, keys: Sequence) -> "SymplecticSpace":
        idx = self.indices(keys)
        return SymplecticSpace(tuple(self.labels[i] for i in idx), self.form[np.ix_(idx, idx)])

    def central(self) -> list:
        """Positions of generators commuting with everything."""
        return [k for k in range(self.n) if not np.any(self.form[k])]

    @classmethod
    def canonical(cls, n_modes: int, labels: Sequence | None = None) -> "SymplecticSpace":
        """``n_modes`` canonical pairs ordered ``(q1, p1, q2, p2, ...)``."""
        if labels is None:
            labels = [f"{c}{k}" for k in range(1, n_modes + 1) for c in ("q", "p")]
        form = np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))
        return cls(tuple(labels), form)

    @classmethod
    def direct_sum(cls, *spaces: "SymplecticSpace") -> "SymplecticSpace":
        labels = sum((s.labels for s in spaces), ())
        n = len(labels)
        form = np.zeros((n, n))
        k = 0
        for s in spaces:
            form[k:k + s.n, k:k + s.n] = s.form
            k += s.n
        return cls(labels, form)

    def same_as(self, other: "SymplecticSpace") -> bool:
        return self.labels == other.labels and np.array_equal(self.form, other.form)


def _check_space(a: SymplecticSpace, b: SymplecticSpace):
    if a is not b and not a.same_as(b):
        raise DimensionError("operands live on different symplectic spaces")


def robertson_schrodinger_gap(cov: np.ndarray, form: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian matrix ``cov + (i/2) form``."""
    return float(np.linalg.eigvalsh(cov + 0.5j * form)[0])


def _rs_tolerance(cov):
    return RS_TOL * max(1.0, float(np.max(np.abs(cov), initial=0.0)))


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance over a :class:`SymplecticSpace`.

    Construction validates symmetry, positivity and the uncertainty
    relation ``cov + (i/2) form >= 0``.
    """

    space: SymplecticSpace
    mean: np.ndarray
    cov: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        n = self.space.n
        mean = _as_real_vector(self.mean, n, "mean").copy()
        cov = _as_real_matrix(self.cov, n, "cov")
        asym = np.max(np.abs(cov - cov.T), initial=0.0)
        scale = max(1.0, float(np.max(np.abs(cov), initial=0.0)))
        if asym > PSD_TOL * scale:
            raise ValueError(f"covariance not symmetric (max asymmetry {asym:.3g})")
        cov = 0.5 * (cov + cov.T)
        if self.validate:
            lo = float(np.linalg.eigvalsh(cov)[0]) if n else 0.0
            if lo < -PSD_TOL * scale:
                raise ValueError(f"covariance not positive semidefinite (min eigenvalue {lo:.3g})")
            gap = robertson_schrodinger_gap(cov, self.space.form) if n else 0.0
            if gap < -_rs_tolerance(cov):
                raise ValueError(f"uncertainty relation violated (min eigenvalue {gap:.3g})")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self) -> int:
        return self.space.n

    @classmethod
    def vacuum(cls, space: SymplecticSpace) -> "GaussianState":
        """Minimum-uncertainty state for a canonical space."""
        return cls(space, np.zeros(space.n), 0.5 * np.eye(space.n))

    def rs_gap(self) -> float:
        return robertson_schrodinger_gap(self.cov, self.space.form)

    def is_pure(self, tol: float = 1e-9) -> bool:
        """True when every symplectic eigenvalue saturates the bound."""
        nu = symplectic_eigenvalues(self.cov, self.space.form)
        return bool(np.all(np.abs(nu - 0.5) < tol))


@dataclass(frozen=True, eq=False)
class QuadraticHamiltonian:
    """``H = 1/2 Q.quad.Q + lin.Q``."""

    space: SymplecticSpace
    quad: np.ndarray
    lin: np.ndarray | None = None

    def __post_init__(self):
        n = self.space.n
        quad = _as_real_matrix(self.quad, n, "quad")
        if not np.array_equal(quad, quad.T):
            raise ValueError("quad must be exactly symmetric")
        lin = np.zeros(n) if self.lin is None else _as_real_vector(self.lin, n, "lin")
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)

    def generator(self) -> np.ndarray:
        """Matrix ``M`` of the linear Heisenberg equations ``dQ/dt = M Q + const``."""
        return self.space.form @ self.quad


@dataclass(frozen=True, eq=False)
class AffineSymplecticMap:
    """Heisenberg-picture map ``Q -> linear Q + shift``."""

    space: SymplecticSpace
    linear: np.ndarray
    shift: np.ndarray | None = None

    def __post_init__(self):
        n = self.space.n
        linear = _as_real_matrix(self.linear, n, "linear")
        shift = np.zeros(n) if self.shift is None else _as_real_vector(self.shift, n, "shift")
        err = self.form_error(linear)
        tol = FORM_TOL * max(1.0, float(np.max(np.abs(linear), initial=0.0)) ** 2)
        if err > tol:
            raise ValueError(f"map does not preserve the form (error {err:.3g})")
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "shift", shift)

    def form_error(self, linear=None) -> float:
        s = self.linear if linear is None else linear
        return float(np.max(np.abs(s @ self.space.form @ s.T - self.space.form), initial=0.0))

    @classmethod
    def identity(cls, space: SymplecticSpace) -> "AffineSymplecticMap":
        return cls(space, np.eye(space.n))

    def then(self, other: "AffineSymplecticMap") -> "AffineSymplecticMap":
        """Apply ``self`` to a state first, then ``other``."""
        _check_space(self.space, other.space)
        return AffineSymplecticMap(
            self.space, other.linear @ self.linear, other.linear @ self.shift + other.shift
        )


class MeasurementKind(str, Enum):
    ABELIAN = "abelian-density"
    PURE = "pure-projector"


@dataclass(frozen=True, eq=False)
class GaussianMeasurement:
    """Gaussian measurement on a block of generators.

    ``resolution`` is the covariance ``W`` of the measurement kernel on the
    measured block. An abelian density weight ``exp(-d x^2 / 2)`` has
    ``W = 1/d``; a projector onto a pure Gaussian vector uses that vector's
    covariance.
    """

    measured: tuple
    resolution: np.ndarray
    kind: MeasurementKind = MeasurementKind.ABELIAN

    def __post_init__(self):
        measured = tuple(self.measured)
        if not measured:
            raise DimensionError("measured block is empty")
        w = _as_real_matrix(np.atleast_2d(self.resolution), len(measured), "resolution")
        if np.max(np.abs(w - w.T), initial=0.0) > PSD_TOL * max(1.0, np.max(np.abs(w))):
            raise InvalidMeasurementError("resolution must be symmetric")
        w = 0.5 * (w + w.T)
        if np.linalg.eigvalsh(w)[0] < -PSD_TOL * max(1.0, np.max(np.abs(w))):
            raise InvalidMeasurementError("resolution must be positive semidefinite")
        object.__setattr__(self, "measured", measured)
        object.__setattr__(self, "resolution", w)
        object.__setattr__(self, "kind", MeasurementKind(self.kind))

    def check_against(self, space: SymplecticSpace) -> list:
        idx = space.indices(self.measured)
        if len(set(idx)) != len(idx):
            raise DimensionError("measured generators repeat")
        if self.kind is MeasurementKind.PURE:
            form = space.form[np.ix_(idx, idx)]
            if len(idx) % 2 or abs(np.linalg.det(form)) < 1e-14:
                raise InvalidMeasurementError("pure projector needs a nondegenerate measured block")
            nu = symplectic_eigenvalues(self.resolution, form)
            if np.max(np.abs(nu - 0.5)) > 1e-9:
                raise InvalidMeasurementError(
                    f"resolution is not a pure-state covariance (symplectic eigenvalues {nu})"
                )
        return idx


def char_fn(state: GaussianState, beta) -> complex:
    """``<exp(i beta.Q)>`` for a Gaussian state."""
    beta = _as_real_vector(beta, state.n, "beta")
    return complex(np.exp(1j * beta @ state.mean - 0.5 * beta @ state.cov @ beta))


def flow(H: QuadraticHamiltonian, t: float) -> AffineSymplecticMap:
    """Heisenberg flow of ``dQ/dt = form (quad Q + lin)`` for time ``t``.

    Linear part and shift come from one exponential of the augmented
    generator, so the shift equals ``int_0^t exp(u M) du . form . lin``.
    """
    if not np.isfinite(t):
        raise ValueError("time must be finite")
    n = H.space.n
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = H.generator()
    aug[:n, n] = H.space.form @ H.lin
    # Scaling and squaring loses accuracy on the secular (non-normal) growth
    # these generators show at long times; short exact steps multiplied in
    # sequence keep the rounding error linear in the number of steps.
    steps = max(1, int(np.ceil(abs(t) * np.linalg.norm(aug, 1) / 4.0)))
    step = expm((t / steps) * aug)
    e = np.eye(n + 1)
    for _ in range(steps):
        e = step @ e
    return AffineSymplecticMap(H.space, e[:n, :n], e[:n, n])


def apply(m: AffineSymplecticMap, state: GaussianState) -> GaussianState:
    _check_space(m.space, state.space)
    s = m.linear
    return GaussianState(state.space, s @ state.mean + m.shift, s @ state.cov @ s.T)


def condition(state: GaussianState, meas: GaussianMeasurement, outcome=None) -> GaussianState:
    """Post-measurement state of the unmeasured generators.

    Schur-complement update with kernel covariance ``W``:
    ``V_B' = V_B - V_BA (V_A + W)^-1 V_AB`` and
    ``m_B' = m_B + V_BA (V_A + W)^-1 (outcome - m_A)``. ``outcome``
    defaults to the prior mean of the measured block.

    An abelian weight is a classical likelihood only for generators that
    commute with the measured block; the others (for instance the partner
    quadrature of a weighted mode) are dropped from the result.
    """
    a = meas.check_against(state.space)
    b = [k for k in range(state.n) if k not in a]
    if meas.kind is MeasurementKind.ABELIAN:
        tol = FORM_TOL * max(1.0, float(np.max(np.abs(state.space.form))))
        b = [k for k in b if np.max(np.abs(state.space.form[k, a])) <= tol]
    if not b:
        raise DimensionError("nothing left after measuring every generator")
    v = state.cov
    va = v[np.ix_(a, a)] + meas.resolution
    vba = v[np.ix_(b, a)]
    scale = max(1.0, float(np.max(np.abs(va))))
    if np.linalg.cond(va) > 1e14 or abs(np.linalg.det(va / scale)) < 1e-300:
        raise SingularMeasurementError("V_A + W is singular")
    ma = state.mean[a]
    outcome = ma if outcome is None else _as_real_vector(np.atleast_1d(outcome), len(a), "outcome")
    gain = np.linalg.solve(va, vba.T).T
    cov = v[np.ix_(b, b)] - gain @ vba.T
    mean = state.mean[b] + gain @ (outcome - ma)
    return GaussianState(state.space.restrict(b), mean, 0.5 * (cov + cov.T))


def marginal(state: GaussianState, keep: Sequence) -> GaussianState:
    keep = list(keep)
    if not keep:
        raise DimensionError("marginal needs at least one generator")
    idx = state.space.indices(keep)
    return GaussianState(state.space.restrict(idx), state.mean[idx], state.cov[np.ix_(idx, idx)])


def variance(state: GaussianState, combo) -> float:
    """Variance of the linear combination ``combo . Q``."""
    combo = _as_real_vector(combo, state.n, "combo")
    if not np.any(combo):
        raise ValueError("combo must be nonzero")
    return float(combo @ state.cov @ combo)


def combination(space: SymplecticSpace, weights: dict) -> np.ndarray:
    """Coefficient vector from a ``{label: weight}`` mapping."""
    v = np.zeros(space.n)
    for label, w in weights.items():
        v[space.index(label)] += w
    return v


# -- two-mode witnesses -----------------------------------------------------

CLOUD_LABELS = ("J+_y", "J+_z", "J-_y", "J-_z")


def variance_witness(state: GaussianState) -> float:
    """``Var(J+_y + J-_y) + Var(J+_z + J-_z)`` for the two cloud modes.

    Values below 2 certify entanglement; 2 or more is inconclusive.
    """
    if set(state.space.labels) != set(CLOUD_LABELS) or state.n != 4:
        raise DimensionError(f"witness needs exactly the generators {CLOUD_LABELS}")
    sp = state.space
    expected = {("J+_y", "J+_z"): 1.0, ("J-_y", "J-_z"): -1.0}
    for i, li in enumerate(CLOUD_LABELS):
        for lj in CLOUD_LABELS[i + 1:]:
            want = expected.get((li, lj), 0.0)
            got = sp.form[sp.index(li), sp.index(lj)]
            if abs(got - want) > 1e-12:
                raise DimensionError(f"[{li}, {lj}] = {got}i, expected {want}i (canonical units)")
    jy = combination(sp, {"J+_y": 1.0, "J-_y": 1.0})
    jz = combination(sp, {"J+_z": 1.0, "J-_z": 1.0})
    return variance(state, jy) + variance(state, jz)


class Verdict(str, Enum):
    SEPARABLE = "separable-PPT"
    ENTANGLED = "entangled-NPT"


_OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _canonical_pairs(state: GaussianState, split) -> list:
    sp = state.space
    if split is None:
        if state.n != 4:
            raise DimensionError("two-mode check needs four generators")
        split = [(0, 1), (2, 3)]
    pairs = []
    for pair in split:
        q, p = sp.indices(pair)
        pairs.append((q, p))
    flat = [k for pr in pairs for k in pr]
    if len(pairs) != 2 or sorted(flat) != list(range(sp.n)):
        raise DimensionError("split must partition four generators into two conjugate pairs")
    out = []
    for q, p in pairs:
        w = sp.form[q, p]
        if abs(abs(w) - 1.0) > 1e-12:
            raise DimensionError(f"generators {sp.labels[q]}, {sp.labels[p]} are not canonically conjugate")
        out.append((q, p) if w > 0 else (p, q))
    (q1, p1), (q2, p2) = out
    if abs(sp.form[q1, q2]) + abs(sp.form[q1, p2]) + abs(sp.form[p1, q2]) + abs(sp.form[p1, p2]) > 1e-12:
        raise DimensionError("the two modes do not commute")
    return [q1, p1, q2, p2]


def canonical_two_mode(state: GaussianState, split=None) -> np.ndarray:
    """Covariance reordered to ``(q1, p1, q2, p2)`` with ``[q, p] = i``."""
    order = _canonical_pairs(state, split)
    return state.cov[np.ix_(order, order)]


def cloud_split():
    """Conjugate-pair split for the cloud modes, minus cloud as ``(J-_z, J-_y)``."""
    return [("J+_y", "J+_z"), ("J-_z", "J-_y")]


def partial_transpose(cov4: np.ndarray) -> np.ndarray:
    """Flip the momentum sign of the second mode."""
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    return flip @ cov4 @ flip


def ppt_gap(state: GaussianState, split=None) -> float:
    """Uncertainty gap of the partially transposed covariance (negative means NPT)."""
    cov = partial_transpose(canonical_two_mode(state, split))
    return robertson_schrodinger_gap(cov, np.kron(np.eye(2), _OMEGA))


def ppt_check(state: GaussianState, split=None, tol: float = RS_TOL) -> Verdict:
    """Simon's PPT test; definitive for one mode on each side."""
    gap = ppt_gap(state, split)
    return Verdict.SEPARABLE if gap >= -tol * max(1.0, np.max(np.abs(state.cov))) else Verdict.ENTANGLED


def symplectic_eigenvalues(cov: np.ndarray, form: np.ndarray) -> np.ndarray:
    """Moduli of the eigenvalues of ``i form cov``, one per conjugate pair."""
    ev = np.abs(np.linalg.eigvals(1j * form @ cov))
    ev = np.sort(ev)
    nz = ev[ev > 1e-14] if np.any(np.abs(form) > 0) else ev
    return nz[::2] if len(nz) % 2 == 0 else nz


def local_symplectic(state: GaussianState, map_b: AffineSymplecticMap, map_c: AffineSymplecticMap) -> GaussianState:
    """Apply two maps with disjoint supports, identity elsewhere."""
    sp = state.space
    ib = sp.indices(map_b.space.labels)
    ic = sp.indices(map_c.space.labels)
    if set(ib) & set(ic):
        raise DimensionError("local maps overlap")
    for m, idx in ((map_b, ib), (map_c, ic)):
        if not np.allclose(sp.form[np.ix_(idx, idx)], m.space.form, atol=1e-12):
            raise DimensionError("local map form does not match the state's sub-block")
    linear = np.eye(sp.n)
    shift = np.zeros(sp.n)
    for m, idx in ((map_b, ib), (map_c, ic)):
        linear[np.ix_(idx, idx)] = m.linear
        shift[idx] = m.shift
    return apply(AffineSymplecticMap(sp, linear, shift), state)


def random_sl2(rng: np.random.Generator, max_squeeze: float = 1.0) -> np.ndarray:
    """Random single-mode symplectic matrix: rotation, squeeze, rotation."""
    th1, th2 = rng.uniform(0.0, 2 * np.pi, size=2)
    r = rng.uniform(-max_squeeze, max_squeeze)

    def rot(a):
        return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])

    return rot(th1) @ np.diag([np.exp(r), np.exp(-r)]) @ rot(th2)


def rotation_map(space: SymplecticSpace, angle: float) -> AffineSymplecticMap:
    """Phase-space rotation of a single canonical mode."""
    if space.n != 2:
        raise DimensionError("rotation_map needs one mode")
    c, s = np.cos(angle), np.sin(angle)
    return AffineSymplecticMap(space, np.array([[c, -s], [s, c]]))
