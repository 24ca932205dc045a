import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_state, random_symplectic
from mesofluct import gaussian_core as gc
from mesofluct.errors import DimensionError, InvalidMeasurementError, SingularMeasurementError
from mesofluct.gaussian_core import (
    AffineSymplecticMap,
    GaussianMeasurement,
    GaussianState,
    MeasurementKind,
    QuadraticHamiltonian,
    SymplecticSpace,
)

seeds = st.integers(0, 2**32 - 1)


def two_mode_space():
    return SymplecticSpace.canonical(2)


def test_vacuum_is_pure_and_saturates_uncertainty():
    vac = GaussianState.vacuum(two_mode_space())
    assert vac.is_pure()
    assert abs(vac.rs_gap()) < 1e-14


def test_rejects_state_below_uncertainty_bound():
    with pytest.raises(ValueError, match="uncertainty"):
        GaussianState(SymplecticSpace.canonical(1), np.zeros(2), 0.3 * np.eye(2))


def test_rejects_asymmetric_and_negative_covariance():
    sp = SymplecticSpace.canonical(1)
    with pytest.raises(ValueError, match="symmetric"):
        GaussianState(sp, np.zeros(2), [[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(ValueError):
        GaussianState(sp, np.zeros(2), [[-1.0, 0.0], [0.0, 1.0]])


def test_space_rejects_bad_forms():
    with pytest.raises(ValueError):
        SymplecticSpace(("a", "b"), [[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError, match="duplicate"):
        SymplecticSpace(("a", "a"), [[0.0, 1.0], [-1.0, 0.0]])


def test_central_generators_allow_classical_variance():
    sp = SymplecticSpace(("c", "q", "p"), [[0, 0, 0], [0, 0, 1], [0, -1, 0]])
    state = GaussianState(sp, np.zeros(3), np.diag([1e-6, 0.5, 0.5]))
    assert sp.central() == [0]
    assert state.is_pure()


def test_char_fn_matches_definition():
    sp = SymplecticSpace.canonical(1)
    state = GaussianState(sp, [0.3, -0.1], [[1.0, 0.2], [0.2, 0.7]])
    beta = np.array([0.4, -1.2])
    want = np.exp(1j * beta @ state.mean - 0.5 * beta @ state.cov @ beta)
    assert gc.char_fn(state, beta) == pytest.approx(want, abs=1e-15)


def test_harmonic_flow_rotates_phase_space():
    sp = SymplecticSpace.canonical(1)
    h = QuadraticHamiltonian(sp, np.eye(2))
    t = 0.37
    m = gc.flow(h, t)
    want = np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
    np.testing.assert_allclose(m.linear, want, atol=1e-14)


def test_linear_term_gives_displacement():
    sp = SymplecticSpace.canonical(1)
    # H = p: dq/dt = 1, dp/dt = 0
    m = gc.flow(QuadraticHamiltonian(sp, np.zeros((2, 2)), [0.0, 1.0]), 2.5)
    np.testing.assert_allclose(m.shift, [2.5, 0.0], atol=1e-14)


def test_flow_long_time_stays_symplectic():
    # nilpotent part: free particle, H = p^2/2, entries grow linearly
    sp = SymplecticSpace.canonical(1)
    m = gc.flow(QuadraticHamiltonian(sp, np.diag([0.0, 1.0])), 1e4)
    np.testing.assert_allclose(m.linear, [[1.0, 1e4], [0.0, 1.0]], rtol=1e-12)


@given(seed=seeds, t1=st.floats(-2, 2), t2=st.floats(-2, 2))
def test_flow_group_law(seed, t1, t2):
    rng = np.random.default_rng(seed)
    sp = SymplecticSpace.canonical(2)
    g = rng.normal(size=(4, 4))
    h = QuadraticHamiltonian(sp, (g + g.T) / 2, rng.normal(size=4))
    a, b, ab = gc.flow(h, t1), gc.flow(h, t2), gc.flow(h, t1 + t2)
    comp = a.then(b)
    scale = max(1.0, np.max(np.abs(ab.linear)))
    assert np.max(np.abs(comp.linear - ab.linear)) < 1e-10 * scale
    assert np.max(np.abs(comp.shift - ab.shift)) < 1e-10 * scale


@given(seed=seeds)
def test_symplectic_maps_preserve_uncertainty(seed):
    rng = np.random.default_rng(seed)
    state = random_state(rng)
    s = random_symplectic(rng, 2)
    m = AffineSymplecticMap(state.space, s)
    out = gc.apply(m, state)
    assert m.form_error() < 1e-10 * max(1.0, np.max(np.abs(s)) ** 2)
    assert out.rs_gap() > -gc._rs_tolerance(out.cov)


def test_non_symplectic_map_rejected():
    with pytest.raises(ValueError, match="form"):
        AffineSymplecticMap(SymplecticSpace.canonical(1), np.diag([2.0, 1.0]))


@given(seed=seeds, d=st.floats(0.05, 20))
def test_abelian_conditioning_contracts(seed, d):
    rng = np.random.default_rng(seed)
    state = random_state(rng)
    meas = GaussianMeasurement(("q1",), [[1 / d]], MeasurementKind.ABELIAN)
    post = gc.condition(state, meas)
    # p1 does not commute with q1 and is dropped
    assert post.space.labels == ("q2", "p2")
    prior = gc.marginal(state, ["q2", "p2"]).cov
    assert np.linalg.eigvalsh(prior - post.cov)[0] > -1e-12
    assert post.rs_gap() > -1e-10


@given(seed=seeds, d=st.floats(0.05, 20))
def test_pure_projector_conditioning_contracts(seed, d):
    rng = np.random.default_rng(seed)
    state = random_state(rng)
    meas = GaussianMeasurement(("q1", "p1"), np.diag([1 / d, d / 4]), MeasurementKind.PURE)
    post = gc.condition(state, meas, outcome=[0.4, -0.2])
    prior = gc.marginal(state, ["q2", "p2"]).cov
    assert np.linalg.eigvalsh(prior - post.cov)[0] > -1e-12
    assert post.rs_gap() > -1e-10


def test_outcome_shifts_mean_not_covariance(rng):
    state = random_state(rng)
    meas = GaussianMeasurement(("q1", "p1"), np.diag([0.5, 0.5]), MeasurementKind.PURE)
    a = gc.condition(state, meas, outcome=[0.0, 0.0])
    b = gc.condition(state, meas, outcome=[3.0, -1.0])
    np.testing.assert_array_equal(a.cov, b.cov)
    assert not np.allclose(a.mean, b.mean)


def test_pure_projector_needs_pure_covariance(rng):
    state = random_state(rng)
    with pytest.raises(InvalidMeasurementError):
        gc.condition(state, GaussianMeasurement(("q1", "p1"), np.eye(2), MeasurementKind.PURE))


def test_singular_measurement_raises():
    sp = SymplecticSpace(("c", "q", "p"), [[0, 0, 0], [0, 0, 1], [0, -1, 0]])
    state = GaussianState(sp, np.zeros(3), np.diag([0.0, 0.5, 0.5]))
    with pytest.raises(SingularMeasurementError):
        gc.condition(state, GaussianMeasurement(("c",), [[0.0]], MeasurementKind.ABELIAN))


def test_measuring_everything_is_an_error():
    state = GaussianState.vacuum(SymplecticSpace.canonical(1))
    with pytest.raises(DimensionError):
        gc.condition(state, GaussianMeasurement(("q1", "p1"), np.eye(2) / 2, MeasurementKind.PURE))


def two_mode_squeezed(r):
    c, s = np.cosh(2 * r), np.sinh(2 * r)
    z = np.diag([1.0, -1.0])
    return 0.5 * np.block([[c * np.eye(2), s * z], [s * z, c * np.eye(2)]])


def test_ppt_detects_two_mode_squeezing():
    sp = SymplecticSpace.canonical(2)
    tms = GaussianState(sp, np.zeros(4), two_mode_squeezed(0.5))
    assert gc.ppt_check(tms) is gc.Verdict.ENTANGLED
    assert gc.ppt_check(GaussianState.vacuum(sp)) is gc.Verdict.SEPARABLE


@given(seed=seeds)
def test_ppt_verdict_invariant_under_local_maps(seed):
    rng = np.random.default_rng(seed)
    sp = SymplecticSpace.canonical(2)
    tms = GaussianState(sp, np.zeros(4), two_mode_squeezed(rng.uniform(0.05, 1.0)))
    m1 = AffineSymplecticMap(sp.restrict(["q1", "p1"]), gc.random_sl2(rng))
    m2 = AffineSymplecticMap(sp.restrict(["q2", "p2"]), gc.random_sl2(rng))
    out = gc.local_symplectic(tms, m1, m2)
    assert gc.ppt_check(out) is gc.Verdict.ENTANGLED


def test_variance_witness_units_checked():
    sp = SymplecticSpace(gc.CLOUD_LABELS, np.kron(np.eye(2), [[0.0, 2.0], [-2.0, 0.0]]))
    with pytest.raises(DimensionError, match="canonical"):
        gc.variance_witness(GaussianState(sp, np.zeros(4), np.eye(4)))


def test_variance_witness_of_product_vacuum_is_two():
    form = np.zeros((4, 4))
    form[0, 1], form[2, 3] = 1.0, -1.0
    sp = SymplecticSpace(gc.CLOUD_LABELS, form - form.T)
    assert gc.variance_witness(GaussianState.vacuum(sp)) == pytest.approx(2.0)


def test_symplectic_eigenvalues_thermal():
    sp = SymplecticSpace.canonical(2)
    nu = gc.symplectic_eigenvalues(np.diag([0.5, 0.5, 1.5, 1.5]), sp.form)
    np.testing.assert_allclose(nu, [0.5, 1.5])


def test_rotation_map_and_dimension_checks():
    sp = SymplecticSpace.canonical(1)
    m = gc.rotation_map(sp, np.pi / 2)
    np.testing.assert_allclose(m.linear, [[0, -1], [1, 0]], atol=1e-15)
    with pytest.raises(DimensionError):
        gc.rotation_map(SymplecticSpace.canonical(2), 0.1)
    with pytest.raises(DimensionError):
        sp.index("nope")
