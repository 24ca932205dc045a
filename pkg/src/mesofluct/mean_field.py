"""Exact finite-N dynamics of a laser ensemble coupled to two spin clouds.

Three ensembles of ``N`` two-level sites (laser ``L``, clouds ``P`` and
``M``) evolve under

    H_N = 1/(2N) sum_a a_a L_a (P_a + M_a),

where ``L_a``, ``P_a``, ``M_a`` are collective Pauli sums. Two
representations are provided: the full tensor product (``3N <= 20``) and
the permutation-symmetric Dicke sector of each ensemble, optionally
truncated to a few spin flips away from the polarized reference state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln, xlogy

from .errors import CapacityError, ConvergenceError, DimensionError
from .spin_chain import PAULI

ENSEMBLES = ("L", "P", "M")
AXES = ("x", "y", "z")
MAX_FULL_SPINS = 20
MAX_DIM = 4_000_000
DENSE_DIM = 1024
NORM_TOL = 1e-10
ENERGY_TOL = 1e-9
BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class EnsembleSpec:
    """Site count, representation and pure single-site Bloch vector."""

    N: int
    rep: str = "dicke"
    polarization: tuple = (1.0, 0.0, 0.0)
    max_excitations: int | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.rep not in ("full", "dicke"):
            raise ValueError("rep must be 'full' or 'dicke'")
        r = np.asarray(self.polarization, dtype=float)
        if r.shape != (3,) or abs(np.linalg.norm(r) - 1) > 1e-12:
            raise ValueError("polarization must be a unit Bloch vector (pure product state)")
        object.__setattr__(self, "polarization", tuple(float(v) for v in r))
        if self.max_excitations is not None:
            if self.rep != "dicke" or self.max_excitations < 1:
                raise ValueError("max_excitations applies to the Dicke representation and must be >= 1")

    @property
    def local_dim(self) -> int:
        if self.rep == "full":
            return 2**self.N
        if self.max_excitations is None:
            return self.N + 1
        return min(self.N, self.max_excitations) + 1


def _full_collective(N: int, axis: str) -> sp.csr_matrix:
    """``sum_l sigma_axis`` on ``N`` sites."""
    s = sp.csr_matrix(PAULI[axis])
    out = sp.csr_matrix((2**N, 2**N), dtype=complex)
    for l in range(N):
        out = out + sp.kron(sp.kron(sp.identity(2**l, format="csr"), s), sp.identity(2 ** (N - l - 1)), format="csr")
    return out.tocsr()


def _dicke_axis_map(pol) -> tuple:
    """Reference axis for the Dicke basis: ``+x`` or ``-x`` side of the sphere."""
    return -1.0 if pol[0] < 0 else 1.0


def _dicke_collective(N: int, dim: int, sign: float) -> dict:
    """Collective Pauli sums on the symmetric sector, quantized along ``sign * x``.

    Basis vector ``k`` has ``k`` flips from the state with ``sum sigma_x =
    sign * N``. The physical axes map onto the ladder axes as
    ``x -> sign J3``, ``y -> J1``, ``z -> sign J2``, which keeps the
    commutation relations right-handed for either sign.
    """
    j = N / 2
    k = np.arange(dim)
    m = j - k
    j3 = sp.diags(m.astype(complex))
    # <m-1| J- |m> = sqrt((j+m)(j-m+1)) for m = j - k, k = 0..dim-2
    low = np.sqrt((j + m[:-1]) * (j - m[:-1] + 1))
    jm = sp.diags(low.astype(complex), -1, shape=(dim, dim))
    jp = jm.T.conj()
    j1 = 0.5 * (jp + jm)
    j2 = -0.5j * (jp - jm)
    return {"x": (2 * sign * j3).tocsr(), "y": (2 * j1).tocsr(), "z": (2 * sign * j2).tocsr()}


def _coherent_dicke(N: int, dim: int, sign: float, r) -> np.ndarray:
    """Symmetric product state with Bloch vector ``r`` in the Dicke basis."""
    r3, r1, r2 = sign * r[0], r[1], sign * r[2]
    theta = math.acos(max(-1.0, min(1.0, r3)))
    phi = math.atan2(r2, r1)
    k = np.arange(N + 1)
    logc = 0.5 * (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1))
    with np.errstate(divide="ignore"):
        logamp = logc + xlogy(N - k, math.cos(theta / 2)) + xlogy(k, math.sin(theta / 2))
    amp = np.exp(logamp) * np.exp(1j * phi * k)
    return amp[:dim].astype(complex)


@dataclass(frozen=True, eq=False)
class TripartiteCollectiveState:
    """Normalized state vector on laser x plus-cloud x minus-cloud."""

    vector: np.ndarray
    dims: tuple
    rep: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex).reshape(-1)
        if v.size != int(np.prod(self.dims)):
            raise DimensionError("vector length does not match dims")
        if abs(np.linalg.norm(v) - 1) > 1e-12:
            raise ValueError("state vector must have unit norm")
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    def expect(self, op) -> complex:
        return complex(np.vdot(self.vector, op @ self.vector))

    def variance(self, op) -> float:
        w = op @ self.vector
        return float(np.vdot(w, w).real - abs(np.vdot(self.vector, w)) ** 2)

    def boundary_weight(self, ensemble: int, levels: int = 1) -> float:
        """Probability in the last ``levels`` basis states of one factor."""
        amp = self.vector.reshape(self.dims)
        p = np.sum(np.abs(np.moveaxis(amp, ensemble, 0)[-levels:]) ** 2)
        return float(p)


@dataclass(frozen=True, eq=False)
class CollectiveOperator:
    """Embedded collective operator of one ensemble."""

    ensemble: str
    axis: str
    kind: str
    matrix: sp.csr_matrix

    def __post_init__(self):
        if self.kind not in ("total", "mean", "fluctuation"):
            raise ValueError("kind must be total, mean or fluctuation")
        diff = self.matrix - self.matrix.getH()
        if diff.nnz and abs(diff).max() > 1e-12:
            raise ValueError("collective operator must be Hermitian")


@dataclass(eq=False)
class TripartiteSystem:
    """Three equal ensembles in a common representation."""

    N: int
    rep: str = "dicke"
    polarizations: tuple = ((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0))
    max_excitations: int | None = None
    _ops: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.specs = tuple(
            EnsembleSpec(self.N, self.rep, tuple(p), self.max_excitations) for p in self.polarizations
        )
        if len(self.specs) != 3:
            raise DimensionError("three ensembles are required")
        if self.rep == "full" and 3 * self.N > MAX_FULL_SPINS:
            raise CapacityError(f"full tensor representation allows 3N <= {MAX_FULL_SPINS}; got N = {self.N}")
        if self.dim > MAX_DIM:
            raise CapacityError(f"dimension {self.dim} exceeds the limit {MAX_DIM}")

    @property
    def dims(self) -> tuple:
        return tuple(s.local_dim for s in self.specs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def truncated(self) -> bool:
        return self.rep == "dicke" and self.max_excitations is not None and self.max_excitations < self.N

    def _local(self, e: int) -> dict:
        spec = self.specs[e]
        if self.rep == "full":
            return {a: _full_collective(self.N, a) for a in AXES}
        return _dicke_collective(self.N, spec.local_dim, _dicke_axis_map(spec.polarization))

    def total(self, ensemble: str, axis: str) -> sp.csr_matrix:
        """Embedded ``sum_l sigma_axis`` of one ensemble."""
        key = (ensemble, axis)
        if key not in self._ops:
            e = ENSEMBLES.index(ensemble)
            local = self._local(e)
            for a in AXES:
                mats = [sp.identity(d, dtype=complex, format="csr") for d in self.dims]
                mats[e] = local[a]
                self._ops[(ensemble, a)] = sp.kron(sp.kron(mats[0], mats[1]), mats[2], format="csr")
        return self._ops[key]

    def collective(self, ensemble: str, axis: str, kind: str = "total") -> CollectiveOperator:
        """Total, mean (``/N``) or centered fluctuation (``/sqrt(N)``) operator."""
        tot = self.total(ensemble, axis)
        if kind == "total":
            mat = tot
        elif kind == "mean":
            mat = tot / self.N
        elif kind == "fluctuation":
            r = self.specs[ENSEMBLES.index(ensemble)].polarization[AXES.index(axis)]
            mat = (tot - self.N * r * sp.identity(self.dim, format="csr")) / math.sqrt(self.N)
        else:
            raise ValueError("kind must be total, mean or fluctuation")
        return CollectiveOperator(ensemble, axis, kind, mat.tocsr())

    def initial_state(self) -> TripartiteCollectiveState:
        vecs = []
        for spec in self.specs:
            r = spec.polarization
            if self.rep == "full":
                theta, phi = math.acos(max(-1.0, min(1.0, r[2]))), math.atan2(r[1], r[0])
                site = np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
                v = np.ones(1, dtype=complex)
                for _ in range(self.N):
                    v = np.kron(v, site)
            else:
                v = _coherent_dicke(self.N, spec.local_dim, _dicke_axis_map(r), r)
                lost = 1 - np.linalg.norm(v) ** 2
                if lost > BOUNDARY_TOL:
                    raise ConvergenceError(f"initial state loses weight {lost:.3g} to the truncation")
                v = v / np.linalg.norm(v)
            vecs.append(v)
        return TripartiteCollectiveState(np.kron(np.kron(vecs[0], vecs[1]), vecs[2]), self.dims, self.rep)


def build_hamiltonian(system: TripartiteSystem, couplings: Sequence) -> sp.csr_matrix:
    """``1/(2N) sum_a a_a L_a (P_a + M_a)`` as a sparse Hermitian matrix."""
    a = np.asarray(couplings, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError("couplings must be three finite numbers")
    h = sp.csr_matrix((system.dim, system.dim), dtype=complex)
    for ax, coef in zip(AXES, a):
        if coef:
            clouds = system.total("P", ax) + system.total("M", ax)
            h = h + (coef / (2 * system.N)) * (system.total("L", ax) @ clouds)
    h = h.tocsr()
    diff = h - h.getH()
    if diff.nnz and abs(diff).max() > 1e-12:
        raise AssertionError("Hamiltonian is not Hermitian")
    return h


def bcs_commutator_check(N: int, couplings: Sequence = (1.0, 1.0, 1.0)) -> float:
    """Operator norm of ``[H_N, sum sigma_x / sqrt(N)]`` for the single-chain model.

    ``H_N = 1/N sum_a a_a (sum_l sigma_a)^2`` in the full tensor product.
    """
    if not 1 <= N <= 10:
        raise CapacityError("the single-chain check runs in the full tensor product for N <= 10")
    a = np.asarray(couplings, dtype=float)
    tot = {ax: _full_collective(N, ax).toarray() for ax in AXES}
    h = sum(c * tot[ax] @ tot[ax] for ax, c in zip(AXES, a)) / N
    q = tot["x"] / math.sqrt(N)
    return float(np.linalg.norm(h @ q - q @ h, 2))


def _check_evolution(state, out, h):
    drift = abs(np.linalg.norm(out) - 1)
    if drift > NORM_TOL:
        raise ConvergenceError(f"norm drift {drift:.3g} exceeds {NORM_TOL}")
    e0 = np.vdot(state, h @ state).real
    e1 = np.vdot(out, h @ out).real
    scale = max(1.0, abs(e0))
    if abs(e1 - e0) > ENERGY_TOL * scale:
        raise ConvergenceError(f"energy drift {abs(e1 - e0):.3g} exceeds tolerance")


def evolve_exact(state: TripartiteCollectiveState, H, t: float, method: str = "auto") -> TripartiteCollectiveState:
    """``exp(-i H t) state`` by dense exponential or sparse Krylov action."""
    if t == 0:
        return state
    dim = state.vector.size
    if method == "auto":
        method = "dense" if dim <= DENSE_DIM else "krylov"
    if method == "dense":
        hd = H.toarray() if sp.issparse(H) else np.asarray(H)
        out = expm(-1j * t * hd) @ state.vector
    elif method == "krylov":
        out = expm_multiply(-1j * t * sp.csr_matrix(H), state.vector)
    else:
        raise ValueError("method must be auto, dense or krylov")
    _check_evolution(state.vector, out, H)
    out = out / np.linalg.norm(out)
    return TripartiteCollectiveState(out, state.dims, state.rep)


def evolve_grid(state: TripartiteCollectiveState, H, times: Sequence) -> list:
    """States at each of the ascending ``times``, propagated step to step."""
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be nonnegative and ascending")
    out, cur, t0 = [], state, 0.0
    for t in times:
        cur = evolve_exact(cur, H, t - t0)
        out.append(cur)
        t0 = t
    return out


# -- limits --------------------------------------------------------------------

def mean_field_rhs(a):
    a = np.asarray(a, dtype=float)

    def rhs(_, y):
        rl, rp, rm = y[:3], y[3:6], y[6:]
        return np.concatenate([np.cross(a * (rp + rm), rl), np.cross(a * rl, rp), np.cross(a * rl, rm)])

    return rhs


def micro_limit_curve(polarizations: Sequence, couplings: Sequence, times: Sequence) -> np.ndarray:
    """Single-site Bloch vectors in the ``N -> infinity`` limit.

    Returns an array of shape ``(len(times), 3, 3)`` indexed by time,
    ensemble (laser, plus, minus) and axis. For the reference state the
    laser and both clouds point along ``x`` and the curve is constant.
    """
    y0 = np.concatenate([np.asarray(p, dtype=float) for p in polarizations])
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times must be nonempty")
    if np.all(times == 0):
        return np.tile(y0.reshape(3, 3), (times.size, 1, 1))
    sol = solve_ivp(mean_field_rhs(couplings), (0.0, float(times.max())), y0, t_eval=np.sort(times),
                    method="DOP853", rtol=1e-12, atol=1e-13)
    order = np.argsort(np.argsort(times))
    return sol.y.T[order].reshape(-1, 3, 3)


@dataclass(frozen=True)
class MicroRow:
    N: int
    t: float
    exact: float
    limit: float

    @property
    def error(self) -> float:
        return abs(self.exact - self.limit)


def micro_finite_check(polarizations, couplings, N_list, t: float, max_excitations=None) -> tuple:
    """Compare ``<sigma_y>`` of one plus-cloud site with the mean-field limit.

    Returns ``(rows, exponent)`` where the exponent is fitted to
    ``error ~ N**-exponent``.
    """
    limit = micro_limit_curve(polarizations, couplings, [t])[0, 1, 1]
    rows = []
    for n in N_list:
        system = TripartiteSystem(n, "dicke", tuple(polarizations), max_excitations)
        h = build_hamiltonian(system, couplings)
        psi = evolve_exact(system.initial_state(), h, t)
        _check_truncation(system, psi)
        rows.append(MicroRow(n, t, psi.expect(system.total("P", "y")).real / n, float(limit)))
    errs = np.array([r.error for r in rows])
    ns = np.array([r.N for r in rows], dtype=float)
    exponent = float(-np.polyfit(np.log(ns), np.log(errs), 1)[0]) if np.all(errs > 0) and len(rows) > 1 else float("inf")
    return rows, exponent


def _check_truncation(system: TripartiteSystem, psi: TripartiteCollectiveState):
    if not system.truncated:
        return
    for e in range(3):
        w = psi.boundary_weight(e)
        if w > BOUNDARY_TOL:
            raise ConvergenceError(
                f"truncation at {system.max_excitations} excitations leaks weight {w:.3g} in ensemble {ENSEMBLES[e]}"
            )


@dataclass(frozen=True)
class MesoRow:
    """Finite-N fluctuation variance against the two mesoscopic predictions."""

    N: int
    t: float
    observable: str
    exact: float
    tau_bar: float
    tau_tilde: float

    @property
    def err_bar(self) -> float:
        return abs(self.exact - self.tau_bar)

    @property
    def err_tilde(self) -> float:
        return abs(self.exact - self.tau_tilde)


MESO_OBSERVABLES = ("S_y", "S_z", "Jsum_y", "Jsum_z")


def meso_predictions(couplings, t: float) -> dict:
    """Fluctuation variances in Pauli units from the Gaussian engine.

    Pauli-unit variances are twice the canonical ones. Returns
    ``{observable: (tau_bar, tau_tilde)}``.
    """
    from . import gaussian_core as gc
    from .protocol import ProtocolParams, initial_state, tau_bar, tau_tilde

    ax, ay, az = (float(c) for c in couplings)
    params = ProtocolParams(s=1.0, gamma=1.0, a_x=ax, a_y=ay, a_z=az, t=t, a=2.0)
    init = initial_state(params)
    tilde = gc.apply(tau_tilde(params, sense=-1), init)
    bar = gc.apply(tau_bar(params, sense=-1), init)
    combos = {
        "S_y": {"S_y": 1.0}, "S_z": {"S_z": 1.0},
        "Jsum_y": {"J+_y": 1.0, "J-_y": 1.0}, "Jsum_z": {"J+_z": 1.0, "J-_z": 1.0},
    }
    out = {}
    for name, w in combos.items():
        c = gc.combination(init.space, w)
        out[name] = (2 * gc.variance(bar, c), 2 * gc.variance(tilde, c))
    return out


def meso_variance_curve(couplings, N_list: Sequence, t_grid: Sequence, max_excitations: int | None = None) -> list:
    """Exact fluctuation variances on the Dicke sector against both predictions.

    The reference state has laser and plus cloud along ``+x`` and the minus
    cloud along ``-x``. Observables are ``L_y/sqrt(N)``, ``L_z/sqrt(N)`` and
    the cloud sums ``(P + M)/sqrt(N)``.
    """
    N_list = [int(n) for n in N_list]
    t_grid = [float(t) for t in t_grid]
    if not N_list or not t_grid:
        raise ValueError("N_list and t_grid must be nonempty")
    if N_list != sorted(N_list):
        raise ValueError("N_list must be ascending")
    preds = {t: meso_predictions(couplings, t) for t in t_grid}
    rows = []
    for n in N_list:
        system = TripartiteSystem(n, "dicke", max_excitations=max_excitations)
        h = build_hamiltonian(system, couplings)
        ops = {
            "S_y": system.total("L", "y"), "S_z": system.total("L", "z"),
            "Jsum_y": system.total("P", "y") + system.total("M", "y"),
            "Jsum_z": system.total("P", "z") + system.total("M", "z"),
        }
        order = np.argsort(t_grid, kind="stable")
        states = evolve_grid(system.initial_state(), h, [t_grid[k] for k in order])
        by_t = {t_grid[k]: psi for k, psi in zip(order, states)}
        for t in t_grid:
            psi = by_t[t]
            _check_truncation(system, psi)
            for name in MESO_OBSERVABLES:
                bar, tilde = preds[t][name]
                rows.append(MesoRow(n, t, name, psi.variance(ops[name]) / n, bar, tilde))
    return rows


def fitted_rate(rows: Sequence, observable: str = "S_y", t: float | None = None) -> float:
    """Exponent ``p`` in ``err_tilde ~ N**-p`` for one observable and time."""
    sel = [r for r in rows if r.observable == observable and (t is None or r.t == t)]
    ns = np.array([r.N for r in sel], dtype=float)
    errs = np.array([r.err_tilde for r in sel])
    if len(sel) < 2 or np.any(errs <= 0):
        return float("inf")
    return float(-np.polyfit(np.log(ns), np.log(errs), 1)[0])


def counterexample_time(a_x: float = 1.0, a_z: float = 1.0, a_t: float = 1.0) -> float:
    """First time with laser variance growth ``1 + a_t**2``.

    With ``kappa = a_z / a_x`` the growth is ``1 + 4 kappa**2 (1 - cos(a_x t))``.
    """
    kappa = a_z / a_x
    c = 1 - a_t**2 / (4 * kappa**2)
    if not -1 <= c <= 1:
        raise ValueError("requested growth is out of reach for these couplings")
    return math.acos(c) / a_x
