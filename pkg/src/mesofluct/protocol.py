"""Laser plus two atomic clouds: mesoscopic evolution, measurement, witnesses.

Nine generators are tracked: the laser fluctuations ``S_x, S_y, S_z`` and
the cloud fluctuations ``J+_*`` and ``J-_*``. All of them are scaled by
``1/sqrt(2 gamma)`` relative to the Pauli fluctuations, which makes the
cloud pairs canonical, ``[J+_y, J+_z] = i`` and ``[J-_y, J-_z] = -i``, and
leaves the laser with ``[S_y, S_z] = i s / gamma``. A uniform scale keeps
the coefficients of the linear equations of motion unchanged.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import gaussian_core as gc
from .errors import ClosedFormUndefinedError
from .gaussian_core import (
    CLOUD_LABELS,
    AffineSymplecticMap,
    GaussianMeasurement,
    GaussianState,
    MeasurementKind,
    QuadraticHamiltonian,
    SymplecticSpace,
)
from .spin_chain import SingleSiteState, pauli_observables, weyl_map

LASER_LABELS = ("S_x", "S_y", "S_z")
PLUS_LABELS = ("J+_x", "J+_y", "J+_z")
MINUS_LABELS = ("J-_x", "J-_y", "J-_z")
LABELS = LASER_LABELS + PLUS_LABELS + MINUS_LABELS

CONSISTENCY_TOL = 1e-9
MEASUREMENTS = ("none", "abelian", "pure")


@dataclass(frozen=True)
class ProtocolParams:
    """Model and measurement parameters.

    ``s`` and ``gamma`` are the single-site polarizations ``<sigma_x>`` of
    the laser and of the plus cloud (the minus cloud has ``-gamma``).
    ``a`` fixes the initial laser width, ``Var(S_y) = 1/a``; ``d`` is the
    measurement resolution.
    """

    s: float = 1.0
    gamma: float = 1.0
    a_x: float = 1.0
    a_y: float = 0.0
    a_z: float = 1.0
    t: float = 0.0
    measurement: str = "none"
    d: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if not -1.0 <= self.s <= 1.0 or self.s == 0:
            raise ValueError("s must lie in [-1, 1] and be nonzero")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if min(self.a_x, self.a_y, self.a_z) < 0:
            raise ValueError("couplings must be nonnegative")
        if self.measurement not in MEASUREMENTS:
            raise ValueError(f"measurement must be one of {MEASUREMENTS}")
        if self.d < 0 or self.a <= 0:
            raise ValueError("need d >= 0 and a > 0")
        if not math.isfinite(self.t):
            raise ValueError("t must be finite")

    @property
    def omega(self) -> float:
        """Rotation frequency ``s * a_x`` of the cloud sums."""
        return self.s * self.a_x

    @property
    def c_t(self) -> float:
        return math.cos(self.omega * self.t)

    @property
    def s_t(self) -> float:
        return math.sin(self.omega * self.t)

    @property
    def pure_input(self) -> bool:
        return abs(self.s) == 1.0 and self.gamma == 1.0

    def with_ct(self, c_t: float) -> "ProtocolParams":
        """Same parameters at the first time where ``cos(s t a_x) = c_t``."""
        if self.omega == 0:
            raise ClosedFormUndefinedError("c_t is constant when s * a_x = 0")
        return replace(self, t=math.acos(c_t) / self.omega)


def protocol_space(params: ProtocolParams) -> SymplecticSpace:
    return initial_state(params).space


def initial_state(params: ProtocolParams) -> GaussianState:
    """Product Gaussian state built from the three single-site states."""
    return _initial_state(params.s, params.gamma, params.a)


@lru_cache(maxsize=256)
def _initial_state(s: float, gamma: float, a: float) -> GaussianState:
    params = ProtocolParams(s=s, gamma=gamma, a=a)
    scale = 1.0 / math.sqrt(2.0 * params.gamma)
    parts = []
    for pol, labels in ((params.s, LASER_LABELS), (params.gamma, PLUS_LABELS), (-params.gamma, MINUS_LABELS)):
        rho = SingleSiteState.from_bloch((pol, 0.0, 0.0))
        parts.append(weyl_map(rho, pauli_observables(), scale=scale, labels=labels)[1])
    space = SymplecticSpace.direct_sum(*(p.space for p in parts))
    cov = np.zeros((9, 9))
    for k, p in enumerate(parts):
        cov[3 * k:3 * k + 3, 3 * k:3 * k + 3] = p.cov
    # squeeze the laser pair so that Var(S_y) = 1/a
    r = math.sqrt((1.0 / params.a) / cov[1, 1])
    sq = np.eye(9)
    sq[1, 1], sq[2, 2] = r, 1.0 / r
    return GaussianState(space, np.zeros(9), sq @ cov @ sq.T)


def tau_tilde_generator(params: ProtocolParams, sense: int = 1) -> np.ndarray:
    """Matrix ``M`` of the mesoscopic equations ``dQ/dt = M Q``.

    ``sense = +1`` rotates the cloud sums as ``J_y -> cos J_y + sin J_z``;
    ``sense = -1`` is the opposite rotation, which is the one produced by
    the Heisenberg equations of the finite-N Hamiltonian.
    """
    if sense not in (1, -1):
        raise ValueError("sense must be +1 or -1")
    s, g = params.s, params.gamma
    ax, ay, az = params.a_x, params.a_y, params.a_z
    idx = {lab: k for k, lab in enumerate(LABELS)}
    m = np.zeros((9, 9))

    def add(row, col, val):
        m[idx[row], idx[col]] += val

    for cloud in ("J+", "J-"):
        add("S_y", f"{cloud}_z", s * az)
        add("S_z", f"{cloud}_y", -s * ay)
    for cloud, sign in (("J+", 1.0), ("J-", -1.0)):
        add(f"{cloud}_y", f"{cloud}_z", sense * s * ax)
        add(f"{cloud}_y", "S_z", sign * g * az)
        add(f"{cloud}_z", f"{cloud}_y", -sense * s * ax)
        add(f"{cloud}_z", "S_y", -sign * g * ay)
    return m


def tau_tilde_hamiltonian(params: ProtocolParams, sense: int = 1) -> QuadraticHamiltonian:
    """Quadratic Hamiltonian whose flow solves :func:`tau_tilde_generator`."""
    space = protocol_space(params)
    m = tau_tilde_generator(params, sense)
    live = [k for k in range(9) if k not in space.central()]
    dead = space.central()
    if np.any(m[dead]) or np.any(m[:, dead]):
        raise AssertionError("central generators must not move or drive the flow")
    form = space.form[np.ix_(live, live)]
    g_live = np.linalg.solve(form, m[np.ix_(live, live)])
    if np.max(np.abs(g_live - g_live.T)) > 1e-12 * max(1.0, np.max(np.abs(g_live))):
        raise AssertionError("equations of motion are not Hamiltonian")
    g = np.zeros((9, 9))
    g[np.ix_(live, live)] = 0.5 * (g_live + g_live.T)
    return QuadraticHamiltonian(space, g)


def tau_tilde(params: ProtocolParams, t: float | None = None, sense: int = 1) -> AffineSymplecticMap:
    return gc.flow(tau_tilde_hamiltonian(params, sense), params.t if t is None else t)


def tau_bar(params: ProtocolParams, t: float | None = None, sense: int = 1) -> AffineSymplecticMap:
    """Lifted local evolution: each cloud rotates, the laser is frozen."""
    t = params.t if t is None else t
    c, sn = math.cos(params.omega * t), sense * math.sin(params.omega * t)
    space = protocol_space(params)
    lin = np.eye(9)
    for cloud in ("J+", "J-"):
        y, z = space.index(f"{cloud}_y"), space.index(f"{cloud}_z")
        lin[y, y], lin[y, z] = c, sn
        lin[z, y], lin[z, z] = -sn, c
    return AffineSymplecticMap(space, lin)


def tau_hat(params: ProtocolParams, t: float | None = None) -> AffineSymplecticMap:
    """``tau_bar(-t)`` composed after ``tau_tilde(t)`` as operator maps."""
    t = params.t if t is None else t
    tt = tau_tilde(params, t)
    back = tau_bar(params, -t)
    return AffineSymplecticMap(tt.space, tt.linear @ back.linear, tt.shift)


def tilde_coefficients(params: ProtocolParams, flow_sd: AffineSymplecticMap | None = None) -> tuple:
    """``(a, b)`` with ``tau_tilde(S_y) = S_y + a J_y + b J_z`` (cloud sums).

    ``flow_sd`` may pass a precomputed :func:`tau_tilde_sumdiff` map.
    """
    m = tau_tilde_sumdiff(params) if flow_sd is None else flow_sd
    sp = m.space
    row = m.linear[sp.index("S_y")]
    diffs = row[sp.indices(["Jdiff_y", "Jdiff_z"])]
    if np.max(np.abs(diffs)) > 1e-9 * max(1.0, float(np.max(np.abs(row)))):
        raise AssertionError("S_y couples to the clouds through their sums only")
    return float(row[sp.index("Jsum_y")]), float(row[sp.index("Jsum_z")])


def hat_coefficients(params: ProtocolParams, flow_sd: AffineSymplecticMap | None = None) -> tuple:
    """``(a_t, b_t)`` with ``tau_hat(S_y) = S_y + a_t J_y + b_t J_z``.

    The cloud sums rotate rigidly under ``tau_bar``, so undoing that
    rotation on the two ``tau_tilde`` coefficients gives ``tau_hat``.
    """
    a, b = tilde_coefficients(params, flow_sd)
    c, sn = params.c_t, params.s_t
    return a * c + b * sn, -a * sn + b * c


def integrate_tau_tilde(params: ProtocolParams, t: float | None = None, sense: int = 1) -> np.ndarray:
    """Heisenberg matrix at time ``t`` from an adaptive ODE solver (independent of ``flow``)."""
    t = params.t if t is None else t
    m = tau_tilde_generator(params, sense)
    if t == 0:
        return np.eye(9)

    def rhs(_, y):
        return (m @ y.reshape(9, 9)).reshape(-1)

    sol = solve_ivp(rhs, (0.0, t), np.eye(9).reshape(-1), method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1].reshape(9, 9)


def evolve(params: ProtocolParams, state: GaussianState, sense: int = 1) -> GaussianState:
    return gc.apply(tau_tilde(params, sense=sense), state)


def reduce_to_clouds(state: GaussianState) -> GaussianState:
    return gc.marginal(state, CLOUD_LABELS)


def separable_decomposition(params: ProtocolParams) -> tuple:
    """Split the evolved cloud covariance into a product part plus classical noise.

    Returns ``(product_cov, noise_cov)`` on :data:`CLOUD_LABELS`. The
    product part is the initial cloud covariance; a positive semidefinite
    noise part writes the evolved state as a Gaussian mixture of displaced
    product states.
    """
    init = reduce_to_clouds(initial_state(params))
    final, _ = measure_none(params)
    return init.cov, final.cov - init.cov


# -- closed forms ------------------------------------------------------------

def _require_ax(a_x):
    if a_x == 0:
        raise ClosedFormUndefinedError("closed forms contain a_z / a_x and need a_x > 0")


def abelian_closed_form(a, d, a_x, a_z, c_t, s_t) -> dict:
    """Cloud-sum variances after weighting the laser by ``exp(-d S_y^2 / 2)``."""
    _require_ax(a_x)
    den = (a + d) * a_x**2 + 2 * a * d * a_z**2 * (1 - c_t)
    dz = ((a + d) * a_x**2 + a * d * a_z**2 * (c_t - 1) ** 2) / den
    dy = ((a + d) * a_x**2 + a * d * a_z**2 * s_t**2) / den
    return {"dJy2": dy, "dJz2": dz, "sum": dy + dz}


def abelian_printed_sum(a, d, a_x, a_z, c_t) -> float:
    """The sum expression as printed, with ``(1 - c_t)**2`` in the numerator.

    It agrees with ``dJy2 + dJz2`` only when ``c_t`` is 0 or 1.
    """
    _require_ax(a_x)
    den = (a + d) * a_x**2 + 2 * a * d * a_z**2 * (1 - c_t)
    return 2 * ((a + d) * a_x**2 + a * d * a_z**2 * (1 - c_t) ** 2) / den


def abelian_corrected_sum(a, d, a_x, a_z, c_t) -> float:
    _require_ax(a_x)
    den = (a + d) * a_x**2 + 2 * a * d * a_z**2 * (1 - c_t)
    return 2 * ((a + d) * a_x**2 + a * d * a_z**2 * (1 - c_t)) / den


def pure_printed_coefficients(a, d, a_x, a_y, a_z, c_t, s_t) -> dict:
    """Exponent coefficients of the cloud-sum density as printed.

    The density is ``exp(-alpha J_z^2/2 - gamma J_y^2/2 - beta J_y J_z)``.
    """
    _require_ax(a_x)
    k = a_x**2 * (a + d)
    alpha = 1 + (a * d * a_z**2 * s_t**2 + a_y**2 * (c_t - 1) ** 2) / k
    gamma = 1 + (a * d * a_z**2 * (c_t - 1) ** 2 + a_y**2 * s_t**2) / k
    beta = s_t * (c_t - 1) * a * d * (a_z**2 + a_y**2) / k
    total = (alpha + gamma) / (alpha * gamma - beta**2)
    num = 2 * a_x**2 * (a + d) + 2 * (a * d * a_z**2 + a_y**2) * (1 - c_t)
    den = (a_x**2 * (a + d) + 2 * (a * d * a_z**2 + a_y**2) * (1 - c_t)
           + 4 * a * d * a_z**2 * a_y**2 * c_t**2 * (1 - c_t) ** 2 / k)
    return {"alpha": alpha, "beta": beta, "gamma": gamma, "sum": total, "sum_expanded": num / den}


def pure_corrected_coefficients(a, d, a_x, a_y, a_z, c_t, s_t, laser_form: float = 1.0) -> dict:
    """Exponent coefficients derived from the Gaussian update itself.

    ``laser_form`` is ``sigma`` in ``[S_y, S_z] = i sigma``; the projector
    has ``Var(S_y) = 1/d`` and ``Var(S_z) = d sigma^2 / 4``.
    """
    _require_ax(a_x)
    kap, lam = a_z / a_x, a_y / a_x
    A = a * d * kap**2 / (a + d)
    B = 4 * lam**2 / (laser_form**2 * (a + d))
    gamma = 1 + A * (1 - c_t) ** 2 + B * s_t**2
    alpha = 1 + A * s_t**2 + B * (1 - c_t) ** 2
    beta = s_t * (1 - c_t) * (A - B)
    det = alpha * gamma - beta**2
    return {"alpha": alpha, "beta": beta, "gamma": gamma, "sum": (alpha + gamma) / det,
            "dJy2": alpha / det, "dJz2": gamma / det}


# -- measurement pipeline ----------------------------------------------------

@dataclass
class WitnessReport:
    """Witness values with provenance for one protocol run."""

    params: dict
    measurement: str
    dJy2: float
    dJz2: float
    total: float
    variance_verdict: str
    ppt_verdict: str
    ppt_gap: float
    c_t: float
    s_t: float
    tilde_coefficients: tuple
    hat_coefficients: tuple
    closed_form: dict | None = None
    corrected: dict | None = None
    comparisons: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return all(c["abs_diff"] < CONSISTENCY_TOL for c in self.comparisons.values() if c["gating"])

    @property
    def max_gating_diff(self) -> float:
        diffs = [c["abs_diff"] for c in self.comparisons.values() if c["gating"]]
        return max(diffs, default=0.0)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tilde_coefficients"] = list(self.tilde_coefficients)
        out["hat_coefficients"] = list(self.hat_coefficients)
        out["consistent"] = self.consistent
        return out


def variance_verdict(total: float) -> str:
    if total < 2 - CONSISTENCY_TOL:
        return "entangled (witness < 2)"
    if abs(total - 2) <= CONSISTENCY_TOL:
        return "separable-bound saturated"
    return "inconclusive (witness >= 2)"


def _compare(report, name, printed, oracle, gating=True):
    report.comparisons[name] = {
        "closed_form": float(printed), "oracle": float(oracle),
        "abs_diff": float(abs(printed - oracle)), "gating": gating,
    }


SUMDIFF_LABELS = ("S_x", "S_y", "S_z", "Jsum_x", "Jsum_y", "Jsum_z", "Jdiff_x", "Jdiff_y", "Jdiff_z")
SUMDIFF_CLOUDS = ("Jsum_y", "Jsum_z", "Jdiff_y", "Jdiff_z")


def _sumdiff_matrix() -> np.ndarray:
    """Rows express the sum/difference generators in the ``LABELS`` basis."""
    t = np.eye(9)
    for k in range(3):
        p, m = 3 + k, 6 + k
        t[p, p], t[p, m], t[m, p], t[m, m] = 1.0, 1.0, 1.0, -1.0
    return t


def _sumdiff_inverse() -> np.ndarray:
    t = _sumdiff_matrix()
    t[3:, 3:] *= 0.5
    return t


def to_sumdiff(state: GaussianState) -> GaussianState:
    """Re-express a protocol state on cloud sums ``J+ + J-`` and differences ``J+ - J-``.

    The laser and the cloud sums form a closed block of the mesoscopic
    equations whose entries stay bounded, while the secular growth sits in
    the differences. Working in this basis keeps the witness free of
    cancellation between large cloud entries.
    """
    t = _sumdiff_matrix()
    space = SymplecticSpace(SUMDIFF_LABELS, t @ state.space.form @ t.T)
    return GaussianState(space, t @ state.mean, t @ state.cov @ t.T)


def clouds_from_sumdiff(clouds: GaussianState, params: ProtocolParams) -> GaussianState:
    """Convert a state on :data:`SUMDIFF_CLOUDS` to :data:`CLOUD_LABELS`."""
    u = 0.5 * np.array([[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, -1, 0], [0, 1, 0, -1]], dtype=float)
    space = protocol_space(params).restrict(list(CLOUD_LABELS))
    return GaussianState(space, u @ clouds.mean, u @ clouds.cov @ u.T)


def tau_tilde_sumdiff(params: ProtocolParams, t: float | None = None, sense: int = 1) -> AffineSymplecticMap:
    """:func:`tau_tilde` in the sum/difference basis."""
    h = tau_tilde_hamiltonian(params, sense)
    ti = _sumdiff_inverse()
    space = to_sumdiff(initial_state(params)).space
    quad = ti.T @ h.quad @ ti
    return gc.flow(QuadraticHamiltonian(space, 0.5 * (quad + quad.T)), params.t if t is None else t)


def _evolved_sumdiff(params, state):
    """Evolved state in the sum/difference basis and the flow that produced it."""
    flow_sd = tau_tilde_sumdiff(params)
    if state is not None:
        return to_sumdiff(state), flow_sd
    return gc.apply(flow_sd, to_sumdiff(initial_state(params))), flow_sd


def _sum_cov(clouds_sd: GaussianState) -> np.ndarray:
    idx = clouds_sd.space.indices(["Jsum_y", "Jsum_z"])
    return clouds_sd.cov[np.ix_(idx, idx)]


def _cloud_sum_precision(clouds_sd: GaussianState):
    prec = np.linalg.inv(_sum_cov(clouds_sd))
    return {"gamma": prec[0, 0], "alpha": prec[1, 1], "beta": prec[0, 1]}


def _base_report(params, clouds_sd, flow_sd=None):
    clouds = clouds_from_sumdiff(clouds_sd, params)
    cov = _sum_cov(clouds_sd)
    w_y, w_z = float(cov[0, 0]), float(cov[1, 1])
    total = w_y + w_z
    split = gc.cloud_split()
    report = WitnessReport(
        params=asdict(params),
        measurement=params.measurement,
        dJy2=w_y, dJz2=w_z, total=total,
        variance_verdict=variance_verdict(total),
        ppt_verdict=gc.ppt_check(clouds, split).value,
        ppt_gap=gc.ppt_gap(clouds, split),
        c_t=params.c_t, s_t=params.s_t,
        tilde_coefficients=tilde_coefficients(params, flow_sd),
        hat_coefficients=hat_coefficients(params, flow_sd),
        provenance={"dJy2": "oracle", "dJz2": "oracle", "total": "oracle",
                    "ppt_verdict": "oracle", "tilde_coefficients": "oracle",
                    "hat_coefficients": "oracle"},
    )
    return clouds, report


def _clouds_sd(state_sd):
    return gc.marginal(state_sd, SUMDIFF_CLOUDS)


def measure_none(params: ProtocolParams, state: GaussianState | None = None):
    state_sd, flow_sd = _evolved_sumdiff(params, state)
    clouds, report = _base_report(params, _clouds_sd(state_sd), flow_sd)
    report.notes.append("no measurement: the evolved cloud state is a mixture of product states")
    return clouds, report


def abelian_measurement(d: float) -> GaussianMeasurement:
    return GaussianMeasurement(("S_y",), [[1.0 / d]], MeasurementKind.ABELIAN)


def pure_measurement(d: float, laser_form: float) -> GaussianMeasurement:
    return GaussianMeasurement(("S_y", "S_z"), np.diag([1.0 / d, d * laser_form**2 / 4]), MeasurementKind.PURE)


def measure_abelian(params: ProtocolParams, state: GaussianState | None = None, closed_form: bool = True):
    """Weight the laser by ``exp(-d S_y^2 / 2)``, trace it out, report witnesses."""
    if closed_form:
        _require_ax(params.a_x)
    state_sd, flow_sd = _evolved_sumdiff(params, state)
    post = state_sd if params.d == 0 else gc.condition(state_sd, abelian_measurement(params.d))
    clouds, report = _base_report(params, _clouds_sd(post), flow_sd)
    report.notes.append("abelian weight exp(-d S_y^2/2) implemented as kernel covariance W = 1/d")
    if not closed_form:
        return clouds, report
    if not params.pure_input:
        report.notes.append("closed forms assume pure laser and clouds (|s| = gamma = 1); skipped")
        return clouds, report
    cf = abelian_closed_form(params.a, params.d, params.a_x, params.a_z, params.c_t, params.s_t)
    printed_sum = abelian_printed_sum(params.a, params.d, params.a_x, params.a_z, params.c_t)
    report.closed_form = dict(cf, printed_sum=printed_sum)
    _compare(report, "dJy2", cf["dJy2"], report.dJy2)
    _compare(report, "dJz2", cf["dJz2"], report.dJz2)
    _compare(report, "sum", cf["sum"], report.total)
    _compare(report, "printed_sum", printed_sum, report.total, gating=False)
    report.provenance.update({"closed_form": "closed-form"})
    if abs(printed_sum - report.total) > CONSISTENCY_TOL:
        report.corrected = {"sum": abelian_corrected_sum(params.a, params.d, params.a_x, params.a_z, params.c_t),
                            "expression": "2((a+d)a_x^2 + a d a_z^2 (1-c_t)) / ((a+d)a_x^2 + 2 a d a_z^2 (1-c_t))"}
        report.provenance["corrected"] = "closed-form"
        report.notes.append("printed sum expression carries (1-c_t)^2 where dJy2 + dJz2 gives (1-c_t)")
    return clouds, report


def measure_pure(params: ProtocolParams, state: GaussianState | None = None, closed_form: bool = True):
    """Project the laser onto the Gaussian vector ``exp(-d S_y^2 / 4)``."""
    if closed_form:
        _require_ax(params.a_x)
    state_sd, flow_sd = _evolved_sumdiff(params, state)
    sp = state_sd.space
    laser_form = sp.form[sp.index("S_y"), sp.index("S_z")]
    post = gc.condition(state_sd, pure_measurement(params.d, laser_form))
    clouds_sd = _clouds_sd(post)
    clouds, report = _base_report(params, clouds_sd, flow_sd)
    report.notes.append("projector covariance W = diag(1/d, d sigma^2/4) on (S_y, S_z)")
    if not closed_form:
        return clouds, report
    if not params.pure_input:
        report.notes.append("closed forms assume pure laser and clouds (|s| = gamma = 1); skipped")
        return clouds, report
    args = (params.a, params.d, params.a_x, params.a_y, params.a_z, params.c_t, params.s_t)
    printed = pure_printed_coefficients(*args)
    corrected = pure_corrected_coefficients(*args, laser_form=laser_form)
    oracle = _cloud_sum_precision(clouds_sd)
    report.closed_form = printed
    for key in ("alpha", "gamma"):
        _compare(report, key, printed[key], oracle[key])
    _compare(report, "beta_abs", abs(printed["beta"]), abs(oracle["beta"]))
    _compare(report, "sum", printed["sum"], report.total)
    _compare(report, "sum_expanded", printed["sum_expanded"], report.total, gating=False)
    for key in ("alpha", "beta", "gamma"):
        _compare(report, f"corrected_{key}", corrected[key], oracle[key], gating=False)
    _compare(report, "corrected_sum", corrected["sum"], report.total, gating=False)
    report.provenance.update({"closed_form": "closed-form"})
    if not report.consistent:
        report.corrected = corrected
        report.provenance["corrected"] = "closed-form"
        report.notes.append(
            "printed alpha/beta/gamma disagree with the Gaussian update; corrected set uses "
            "4 a_y^2/(sigma^2 a_x^2 (a+d)) for the S_z channel and beta = s_t(1-c_t)(A-B)"
        )
    return clouds, report


def run(params: ProtocolParams, closed_form: bool = True):
    """Dispatch on ``params.measurement``."""
    if params.measurement == "abelian":
        return measure_abelian(params, closed_form=closed_form)
    if params.measurement == "pure":
        return measure_pure(params, closed_form=closed_form)
    return measure_none(params)


# -- sweeps ------------------------------------------------------------------

def period_times(params: ProtocolParams, n: int = 64) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / (n * params.omega)


def abelian_sweep(a_values=(1e-2, 1e-1, 1.0, 1e1, 1e2), d_values=(1e-2, 1e-1, 1.0, 1e1, 1e2),
                  ratios=(1.0, 1e1, 1e2, 1e3), n_times: int = 64, s: float = 1.0) -> dict:
    """Abelian witness over a parameter grid with ``a_x = 1`` and ``a_z = ratio``."""
    best = None
    max_diff = 0.0
    count = 0
    for a in a_values:
        for d in d_values:
            for ratio in ratios:
                base = ProtocolParams(s=s, a_x=1.0, a_z=float(ratio), a=float(a), d=float(d), measurement="abelian")
                for t in period_times(base, n_times):
                    p = replace(base, t=float(t))
                    _, rep = measure_abelian(p)
                    count += 1
                    max_diff = max(max_diff, rep.max_gating_diff)
                    if best is None or rep.total < best[0]:
                        best = (rep.total, asdict(p))
    return {"min_sum": best[0], "argmin": best[1], "max_abs_diff": max_diff, "points": count}


def pure_depth_scan(base: ProtocolParams, c_t: float, a_x_values) -> list:
    """Pure-measurement witness at fixed ``c_t`` as ``a_x`` varies."""
    rows = []
    for ax in a_x_values:
        p = replace(base, a_x=float(ax), measurement="pure").with_ct(c_t)
        _, rep = measure_pure(p)
        rows.append({"a_x": float(ax), "t": p.t, "sum": rep.total,
                     "corrected_sum": rep.comparisons["corrected_sum"]["closed_form"],
                     "printed_sum": rep.comparisons["sum"]["closed_form"]})
    return rows


def counterexample_growth(params: ProtocolParams) -> dict:
    """Laser ``S_y`` variance growth under the mesoscopic evolution.

    ``growth = 1 + a_eff**2`` where ``a_eff`` is the size of the added
    cloud contribution in units of the initial laser spread.
    """
    init = initial_state(params)
    final = evolve(params, init)
    k = init.space.index("S_y")
    growth = final.cov[k, k] / init.cov[k, k]
    return {"initial": init.cov[k, k], "final": final.cov[k, k], "growth": growth,
            "a_eff": math.sqrt(max(growth - 1.0, 0.0)),
            "char_fn_normalization": "counterexample uses exp(-alpha^2 t/2) with t twice the covariance"}


def schematic_hamiltonian_rates(params: ProtocolParams) -> dict:
    """Rates induced by the printed quadratic Hamiltonian, taken literally.

    Uses ``[S_y, S_z] = i s`` and ``[J+_y, J+_z] = i gamma = [J-_z, J-_y]``.
    The equations of motion used everywhere else rotate the cloud sums at
    ``s a_x`` and drift ``S_y`` at ``s a_z``.
    """
    s, g = params.s, params.gamma
    idx = {lab: k for k, lab in enumerate(LABELS)}
    form = np.zeros((9, 9))
    for (p, q), v in {("S_y", "S_z"): s, ("J+_y", "J+_z"): g, ("J-_y", "J-_z"): -g}.items():
        form[idx[p], idx[q]], form[idx[q], idx[p]] = v, -v
    G = np.zeros((9, 9))

    def cross(p, q, c):
        G[idx[p], idx[q]] += c
        G[idx[q], idx[p]] += c

    for cl in ("J+", "J-"):
        cross(f"{cl}_z", "S_z", s * params.a_z)
        cross(f"{cl}_y", "S_y", s * params.a_y)
    for comp in ("z", "y"):
        G[idx[f"J+_{comp}"], idx[f"J+_{comp}"]] += 2 * s * params.a_x / g
        G[idx[f"J-_{comp}"], idx[f"J-_{comp}"]] -= 2 * s * params.a_x / g
    m = form @ G
    return {"rotation_rate": float(abs(m[idx["J+_y"], idx["J+_z"]])),
            "S_y_drift_rate": float(m[idx["S_y"], idx["J+_z"]]),
            "expected_rotation_rate": abs(s * params.a_x),
            "expected_S_y_drift_rate": s * params.a_z}


# -- GHZ analogy ---------------------------------------------------------------

@dataclass
class GHZReport:
    bc_reduced: list
    bc_reduced_ppt_min_eig: float
    bc_reduced_separable: bool
    bell_fidelity_after_plus: float
    bell_fidelity_after_up: float
    alice_decoupled: bool

    def to_dict(self):
        return asdict(self)


def _two_qubit_pt_min(rho):
    r = rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    return float(np.linalg.eigvalsh(r)[0])


def ghz_demo() -> GHZReport:
    """Three-qubit analogue: BC separable until Alice is projected."""
    ghz = np.zeros(8, dtype=complex)
    ghz[0] = ghz[7] = 1 / math.sqrt(2)
    rho = np.outer(ghz, ghz.conj()).reshape(2, 4, 2, 4)
    bc = np.einsum("aiaj->ij", rho)
    bell = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)

    def project_alice(vec):
        vec = np.asarray(vec, dtype=complex) / np.linalg.norm(vec)
        out = np.kron(np.outer(vec, vec.conj()), np.eye(4)) @ ghz
        out /= np.linalg.norm(out)
        bc_vec = np.kron(vec.conj(), np.eye(4)) @ out
        decoupled = np.allclose(out, np.kron(vec, bc_vec), atol=1e-12)
        return bc_vec, decoupled

    after_plus, decoupled = project_alice([1, 1])
    after_up, _ = project_alice([1, 0])
    pt_min = _two_qubit_pt_min(bc)
    return GHZReport(
        bc_reduced=bc.real.round(15).tolist(),
        bc_reduced_ppt_min_eig=pt_min,
        bc_reduced_separable=pt_min >= -1e-12,
        bell_fidelity_after_plus=float(abs(np.vdot(bell, after_plus)) ** 2),
        bell_fidelity_after_up=float(abs(np.vdot(bell, after_up)) ** 2),
        alice_decoupled=bool(decoupled),
    )


# -- stability under local maps -----------------------------------------------

@dataclass
class StabilityReport:
    seed: int
    n_maps: int
    reference_verdict: str
    verdicts: list
    witness_min: float
    witness_max: float

    @property
    def invariant(self) -> bool:
        return all(v == self.reference_verdict for v in self.verdicts)

    @property
    def witness_straddles_two(self) -> bool:
        return self.witness_min < 2 <= self.witness_max


def stability_probe(clouds: GaussianState, seed: int, n_maps: int = 100, max_squeeze: float = 1.0) -> StabilityReport:
    """Random local symplectic maps on each cloud; PPT verdict must not change.

    Each probe draws from its own counter-based stream keyed by
    ``(seed, probe index)``, so results do not depend on evaluation order.
    """
    split = gc.cloud_split()
    plus = clouds.space.restrict(list(split[0]))
    minus = clouds.space.restrict(list(split[1]))
    ref = gc.ppt_check(clouds, split).value
    verdicts, witnesses = [], []
    for k in range(n_maps):
        rng = np.random.Generator(np.random.Philox(key=[seed, k]))
        mb = AffineSymplecticMap(plus, gc.random_sl2(rng, max_squeeze))
        mc = AffineSymplecticMap(minus, gc.random_sl2(rng, max_squeeze))
        out = gc.local_symplectic(clouds, mb, mc)
        verdicts.append(gc.ppt_check(out, split).value)
        witnesses.append(gc.variance_witness(out))
    return StabilityReport(seed, n_maps, ref, verdicts, float(min(witnesses)), float(max(witnesses)))
