"""Fluctuation operators of shift-invariant product states on a spin chain.

For a product state every site carries the same density matrix, so the
commutator and anticommutator sums that define the limiting Weyl algebra
reduce to single-site expectations, and finite-chain characteristic
functions factorize into a power of a single-site trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .gaussian_core import GaussianState, SymplecticSpace

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class SingleSiteState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionError("density matrix must be square")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValueError("density matrix must be Hermitian")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ValueError("density matrix must have unit trace")
        if np.linalg.eigvalsh(rho)[0] < -1e-12:
            raise ValueError("density matrix must be positive semidefinite")
        object.__setattr__(self, "rho", rho)

    @property
    def d(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def from_bloch(cls, r) -> "SingleSiteState":
        """Qubit state ``(1 + r.sigma) / 2``; requires ``|r| <= 1``."""
        r = np.asarray(r, dtype=float)
        if np.linalg.norm(r) > 1 + 1e-12:
            raise ValueError("Bloch vector longer than 1")
        return cls(0.5 * (np.eye(2) + r[0] * PAULI["x"] + r[1] * PAULI["y"] + r[2] * PAULI["z"]))

    @classmethod
    def pure(cls, psi) -> "SingleSiteState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def expect(self, op) -> complex:
        return complex(np.trace(self.rho @ np.asarray(op)))


@dataclass(frozen=True, eq=False)
class LocalObservable:
    matrix: np.ndarray
    label: str = "q"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("observable must be square")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError(f"observable {self.label!r} is not Hermitian")
        object.__setattr__(self, "matrix", m)


def pauli_observables(axes: str = "xyz", prefix: str = "sigma_") -> list:
    return [LocalObservable(PAULI[a], f"{prefix}{a}") for a in axes]


@dataclass(frozen=True, eq=False)
class FluctuationSpec:
    """Product state, observables and chain half-width (``2N + 1`` sites)."""

    state: SingleSiteState
    observables: tuple
    N: int

    def __post_init__(self):
        obs = tuple(self.observables)
        for q in obs:
            if q.matrix.shape[0] != self.state.d:
                raise DimensionError(f"observable {q.label!r} has the wrong local dimension")
        if self.N < 0:
            raise ValueError("N must be nonnegative")
        object.__setattr__(self, "observables", obs)


def _check_dims(omega: SingleSiteState, *qs):
    for q in qs:
        if q.matrix.shape[0] != omega.d:
            raise DimensionError(f"observable {q.label!r} does not match the local dimension {omega.d}")


def s_form(omega: SingleSiteState, q1: LocalObservable, q2: LocalObservable) -> float:
    """Real coefficient ``s`` with ``omega([q1, q2]) = i s``."""
    _check_dims(omega, q1, q2)
    comm = q1.matrix @ q2.matrix - q2.matrix @ q1.matrix
    return float(omega.expect(comm).imag)


def _centered(omega, q):
    return q.matrix - omega.expect(q.matrix).real * np.eye(omega.d)


def t_form(omega: SingleSiteState, q1: LocalObservable, q2: LocalObservable) -> float:
    """``omega({q1 - <q1>, q2 - <q2>})``."""
    _check_dims(omega, q1, q2)
    a, b = _centered(omega, q1), _centered(omega, q2)
    return float(omega.expect(a @ b + b @ a).real)


def _expi(h, x):
    """``exp(i x h)`` for Hermitian ``h``."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * x * w)) @ v.conj().T


def finite_N_char_fn(spec: FluctuationSpec, beta, ordered: bool = False) -> complex:
    """Exact ``omega(exp(i sum_k beta_k q_k,<N>))`` on ``2N + 1`` sites.

    With ``ordered=True`` the product ``prod_k exp(i beta_k q_k,<N>)`` is
    evaluated instead.
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != len(spec.observables):
        raise DimensionError("one beta per observable")
    omega = spec.state
    sites = 2 * spec.N + 1
    x = 1.0 / np.sqrt(sites)
    centered = [_centered(omega, q) for q in spec.observables]
    if ordered:
        u = np.eye(omega.d, dtype=complex)
        for b, c in zip(beta, centered):
            u = u @ _expi(c, b * x)
    else:
        u = _expi(sum(b * c for b, c in zip(beta, centered)), x)
    z = omega.expect(u)
    if z == 0:
        return 0j
    return complex(np.exp(sites * np.log(z)))


def _forms(omega, observables):
    n = len(observables)
    sigma = np.zeros((n, n))
    t = np.zeros((n, n))
    for k in range(n):
        for l in range(n):
            if k < l:
                sigma[k, l] = s_form(omega, observables[k], observables[l])
                sigma[l, k] = -sigma[k, l]
            t[k, l] = t_form(omega, observables[k], observables[l])
    return sigma, t


def limit_char_fn(omega: SingleSiteState, observables: Sequence, beta, ordered: bool = False) -> complex:
    """Gaussian limit of :func:`finite_N_char_fn` as ``N -> infinity``.

    The covariance is half the anticommutator form. For the ordered product
    the commutator phase ``exp(-(i/2) sum_{k<l} beta_k beta_l s_kl)`` is
    included.
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != len(observables):
        raise DimensionError("one beta per observable")
    sigma, t = _forms(omega, list(observables))
    expo = -0.25 * beta @ t @ beta
    if ordered:
        expo = expo - 0.5j * float(beta @ np.triu(sigma, 1) @ beta)
    return complex(np.exp(expo))


def weyl_map(omega: SingleSiteState, observables: Sequence, scale: float = 1.0,
             labels: Sequence | None = None) -> tuple:
    """Symplectic space and centered Gaussian state of the limiting fluctuations.

    Each generator is ``scale`` times the fluctuation of its observable, so
    both the form and the covariance pick up ``scale**2``.
    """
    observables = list(observables)
    if labels is None:
        labels = [q.label for q in observables]
    sigma, t = _forms(omega, observables)
    c = np.stack([_centered(omega, q).reshape(-1) for q in observables])
    if np.linalg.matrix_rank(c, tol=1e-12) < len(observables):
        raise ValueError("centered observables are linearly dependent")
    space = SymplecticSpace(tuple(labels), scale**2 * sigma)
    try:
        state = GaussianState(space, np.zeros(len(observables)), 0.5 * scale**2 * t)
    except ValueError as exc:
        raise RuntimeError(f"fluctuation data violate the Gaussian state invariants: {exc}") from exc
    return space, state


@dataclass(frozen=True)
class ConvergenceProfile:
    rows: tuple
    exponent: float
    limit: complex

    def errors(self):
        return np.array([r[1] for r in self.rows])


def convergence_profile(spec: FluctuationSpec, beta, N_list: Sequence) -> ConvergenceProfile:
    """Tabulate ``|finite_N - limit|`` and fit ``error ~ N**-exponent``.

    The fit uses the points with nonzero error; an all-zero table reports an
    infinite exponent.
    """
    N_list = [int(n) for n in N_list]
    if not N_list or N_list != sorted(N_list):
        raise ValueError("N_list must be nonempty and ascending")
    limit = limit_char_fn(spec.state, spec.observables, beta)
    rows = []
    for n in N_list:
        val = finite_N_char_fn(FluctuationSpec(spec.state, spec.observables, n), beta)
        rows.append((n, abs(val - limit), val))
    ns = np.array([r[0] for r in rows], dtype=float)
    errs = np.array([r[1] for r in rows])
    mask = (errs > 1e-15) & (ns > 0)
    if mask.sum() >= 2:
        slope = np.polyfit(np.log(ns[mask]), np.log(errs[mask]), 1)[0]
        exponent = float(-slope)
    else:
        exponent = float("inf")
    return ConvergenceProfile(tuple(rows), exponent, limit)


def third_central_moment(omega: SingleSiteState, observables: Sequence, beta) -> float:
    """``omega(X**3)`` for ``X = sum_k beta_k (q_k - <q_k>)``.

    A nonzero value makes the finite-chain error decay like ``N**-1/2``
    rather than ``N**-1``.
    """
    x = sum(b * _centered(omega, q) for b, q in zip(np.asarray(beta, float), observables))
    return float(omega.expect(x @ x @ x).real)
