import numpy as np
import pytest
import scipy.sparse as sp

from mesofluct import mean_field as mf
from mesofluct.errors import CapacityError, ConvergenceError

TILTED = ((np.cos(0.3), np.sin(0.3), 0.0), (np.cos(0.2), 0.0, np.sin(0.2)),
          (-np.cos(0.4), 0.6 * np.sin(0.4), 0.8 * np.sin(0.4)))


def commutator_norm(a, b):
    c = (a @ b - b @ a)
    c = c.toarray() if sp.issparse(c) else c
    return np.linalg.norm(c, 2)


def test_single_site_hamiltonian_spectrum():
    system = mf.TripartiteSystem(1, "full")
    h = mf.build_hamiltonian(system, (1.0, 1.0, 1.0)).toarray()
    assert h.shape == (8, 8)
    np.testing.assert_allclose(np.linalg.eigvalsh(h), [-2, -2, 0, 0, 1, 1, 1, 1], atol=1e-12)
    # global spin flip X (x) X (x) X is a symmetry
    x = np.array([[0, 1], [1, 0]])
    flip = np.kron(np.kron(x, x), x)
    assert np.max(np.abs(flip @ h - h @ flip)) < 1e-14


def test_zero_couplings_give_zero_operator():
    h = mf.build_hamiltonian(mf.TripartiteSystem(2, "full"), (0.0, 0.0, 0.0))
    assert h.nnz == 0


@pytest.mark.parametrize("rep", ["full", "dicke"])
def test_isotropic_hamiltonian_conserves_total_spin(rep):
    system = mf.TripartiteSystem(3, rep)
    h = mf.build_hamiltonian(system, (0.7, 0.7, 0.7))
    for ax in mf.AXES:
        d = sum(system.total(e, ax) for e in mf.ENSEMBLES)
        assert commutator_norm(h, d) < 1e-12


def test_bcs_identity_and_its_failure_off_isotropy():
    for n in (2, 3, 4, 5):
        assert mf.bcs_commutator_check(n) < 1e-12
    assert mf.bcs_commutator_check(3, (1.0, 1.0, 0.0)) > 0.1
    with pytest.raises(CapacityError):
        mf.bcs_commutator_check(11)


def test_full_tensor_capacity_limit():
    with pytest.raises(CapacityError):
        mf.TripartiteSystem(7, "full")
    with pytest.raises(CapacityError):
        mf.TripartiteSystem(200, "dicke")


def test_polarization_must_be_pure():
    with pytest.raises(ValueError):
        mf.EnsembleSpec(3, polarization=(0.5, 0.0, 0.0))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_full_and_dicke_agree(n):
    couplings = (1.0, 0.5, 2.0)
    values = {}
    for rep in ("full", "dicke"):
        system = mf.TripartiteSystem(n, rep, TILTED)
        h = mf.build_hamiltonian(system, couplings)
        psi = mf.evolve_exact(system.initial_state(), h, 0.7)
        values[rep] = [psi.expect(system.total(e, a)).real for e in mf.ENSEMBLES for a in mf.AXES]
        values[rep] += [psi.variance(system.total("L", a)) for a in mf.AXES]
    np.testing.assert_allclose(values["full"], values["dicke"], atol=1e-10)


def test_initial_state_polarization():
    system = mf.TripartiteSystem(5, "dicke", TILTED)
    psi = system.initial_state()
    for e, pol in zip(mf.ENSEMBLES, TILTED):
        got = [psi.expect(system.total(e, a)).real / 5 for a in mf.AXES]
        np.testing.assert_allclose(got, pol, atol=1e-12)


def test_dense_and_krylov_agree_and_conserve():
    system = mf.TripartiteSystem(6, "dicke", TILTED)
    h = mf.build_hamiltonian(system, (1.0, 0.3, 0.8))
    psi0 = system.initial_state()
    a = mf.evolve_exact(psi0, h, 1.3, method="dense")
    b = mf.evolve_exact(psi0, h, 1.3, method="krylov")
    assert np.max(np.abs(a.vector - b.vector)) < 1e-10
    e0, e1 = psi0.expect(h).real, b.expect(h).real
    assert abs(e1 - e0) < 1e-9
    assert mf.evolve_exact(psi0, h, 0.0) is psi0


def test_isotropic_total_spin_expectation_constant():
    system = mf.TripartiteSystem(8, "dicke", TILTED)
    h = mf.build_hamiltonian(system, (1.0, 1.0, 1.0))
    d = sum(system.total(e, "y") for e in mf.ENSEMBLES)
    states = mf.evolve_grid(system.initial_state(), h, [0.0, 0.5, 1.0, 2.0])
    vals = [s.expect(d).real for s in states]
    assert np.ptp(vals) < 1e-10


def test_collective_operator_kinds():
    system = mf.TripartiteSystem(4, "dicke")
    psi = system.initial_state()
    assert psi.expect(system.collective("P", "x", "mean").matrix).real == pytest.approx(1.0)
    fl = system.collective("M", "x", "fluctuation").matrix
    assert abs(psi.expect(fl)) < 1e-12
    assert psi.variance(system.collective("L", "y", "fluctuation").matrix) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        system.collective("L", "y", "median")


def test_truncation_leak_is_reported():
    system = mf.TripartiteSystem(64, "dicke", max_excitations=4)
    h = mf.build_hamiltonian(system, (1.0, 0.0, 1.0))
    psi = mf.evolve_exact(system.initial_state(), h, 0.7)
    with pytest.raises(ConvergenceError):
        mf._check_truncation(system, psi)


def test_truncated_matches_untruncated():
    t = 0.6
    full = mf.meso_variance_curve((1.0, 0.0, 1.0), [24], [t])
    trunc = mf.meso_variance_curve((1.0, 0.0, 1.0), [24], [t], max_excitations=20)
    for a, b in zip(full, trunc):
        assert a.exact == pytest.approx(b.exact, abs=1e-10)


def test_micro_limit_reference_state_is_stationary():
    ref = ((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0))
    curve = mf.micro_limit_curve(ref, (1.0, 0.4, 2.0), [0.0, 1.0, 5.0])
    for snap in curve:
        np.testing.assert_allclose(snap, np.array(ref), atol=1e-12)


def test_micro_limit_rotation_of_tilted_cloud():
    th, ax = 0.4, 1.3
    pol = ((1.0, 0.0, 0.0), (np.cos(th), np.sin(th), 0.0), (-np.cos(th), -np.sin(th), 0.0))
    t = 0.9
    curve = mf.micro_limit_curve(pol, (ax, 0.0, 0.0), [t])[0]
    # laser field along x rotates each cloud about x at rate a_x
    assert curve[1, 1] == pytest.approx(np.sin(th) * np.cos(ax * t), abs=1e-10)
    assert curve[1, 2] == pytest.approx(np.sin(th) * np.sin(ax * t), abs=1e-10)


def test_micro_limit_reached_at_finite_n():
    th = 0.4
    pol = ((1.0, 0.0, 0.0), (np.cos(th), np.sin(th), 0.0), (-np.cos(th), -np.sin(th), 0.0))
    rows, exponent = mf.micro_finite_check(pol, (1.0, 0.5, 1.0), [8, 16, 32], 1.0)
    errs = [r.error for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert exponent >= 0.5


def test_meso_variance_initial_values():
    rows = mf.meso_variance_curve((1.0, 0.0, 1.0), [16], [0.0])
    by = {r.observable: r for r in rows}
    assert by["S_y"].exact == pytest.approx(1.0, abs=1e-10)
    assert by["Jsum_y"].exact == pytest.approx(2.0, abs=1e-10)
    assert all(r.err_tilde < 1e-10 for r in rows)


def test_meso_variance_tracks_tau_tilde():
    t = mf.counterexample_time()
    rows = mf.meso_variance_curve((1.0, 0.0, 1.0), [32, 64, 128], [t], max_excitations=24)
    sy = [r for r in rows if r.observable == "S_y"]
    assert sy[0].tau_tilde == pytest.approx(2.0, abs=1e-12)
    errs = [r.err_tilde for r in sy]
    assert errs[0] > errs[1] > errs[2]
    assert sy[-1].err_bar > 10 * sy[-1].err_tilde
    assert mf.fitted_rate(rows, "S_y") == pytest.approx(1.0, abs=0.1)


def test_meso_inputs_validated():
    with pytest.raises(ValueError):
        mf.meso_variance_curve((1, 0, 1), [], [0.0])
    with pytest.raises(ValueError):
        mf.meso_variance_curve((1, 0, 1), [8, 4], [0.0])
    with pytest.raises(ValueError):
        mf.counterexample_time(a_x=1.0, a_z=0.1, a_t=1.0)
