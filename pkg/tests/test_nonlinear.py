"""Nonlinearity assembly, exponential stepper, simulation driver, energy."""

import numpy as np
import pytest

from conftest import smooth_constrained_state
from vewaves.kinematics import make_initial_data, primitive_from_displacement, primitive_to_state
from vewaves.nonlinear import (
    AugmentedState,
    EtdStepper,
    IntegrityError,
    dt_max,
    hf_energy,
    hf_state_norm_sq,
    nonlinear_terms,
    run_simulation,
)
from vewaves.params import PressureModel
from vewaves.semigroup import semigroup_apply
from vewaves.spectral import CutoffSpec, make_grid
from vewaves.state import StateU


@pytest.fixture(scope="module")
def pressure():
    return PressureModel(gamma=1.0, kappa=1.0)


def converted_state(grid, mode="radial_potential", amplitude=1e-2, seed=1):
    data = make_initial_data(grid, mode, amplitude=amplitude, seed=seed)
    prim = primitive_from_displacement(grid, data.psi_tilde, data.v)
    return primitive_to_state(grid, prim)


class TestNonlinearTerms:
    def test_zero_state_gives_zero(self, default_params, pressure, grid32):
        z = StateU.zero(grid32)
        zt = np.zeros((3,) + grid32.spec_shape, complex)
        nt = nonlinear_terms(default_params, pressure, grid32, z.phi, z.w, z.Psi, zt)
        assert np.abs(nt.n_phi).max() == 0.0
        assert np.abs(nt.n_w).max() == 0.0
        assert np.abs(nt.n_psi_grad).max() == 0.0

    def test_trace_identity(self, default_params, pressure, grid32):
        state, psit = converted_state(grid32, "random_smooth", amplitude=3e-2, seed=5)
        nt = nonlinear_terms(default_params, pressure, grid32, state.phi, state.w, state.Psi, psit)
        scale = np.abs(nt.n_phi).max()
        assert nt.identity_residual <= 1e-11 * max(scale, 1e-300)

    def test_single_mode_density_flux(self, default_params, pressure):
        # N1 = -div(phi w) for single Fourier modes, against the closed form
        grid = make_grid(16, 2.0 * np.pi)
        x, y, _ = grid.mesh()
        phi_p = 1e-3 * np.cos(x)
        w_p = np.zeros((3,) + grid.phys_shape)
        w_p[1] = 1e-3 * np.sin(2.0 * y)
        # phi w = e1 * 0: only w2 nonzero: div(phi w) = d_y(phi w2)
        want = -1e-6 * np.cos(x) * 2.0 * np.cos(2.0 * y)
        state = StateU(grid, grid.to_spectral(phi_p), grid.to_spectral(w_p),
                       np.zeros((3, 3) + grid.spec_shape, complex))
        zt = np.zeros((3,) + grid.spec_shape, complex)
        nt = nonlinear_terms(default_params, pressure, grid, state.phi, state.w, state.Psi, zt)
        got = grid.to_physical(nt.n_phi)
        assert np.abs(got - want).max() <= 1e-12 * np.abs(want).max()

    def test_large_phi_rejected(self, default_params, pressure, grid32):
        phi = grid32.to_spectral(np.full(grid32.phys_shape, 0.0))
        phi[0, 0, 0] = 0.6 * grid32.n**3  # constant 0.6
        z = np.zeros((3,) + grid32.spec_shape, complex)
        with pytest.raises(IntegrityError):
            nonlinear_terms(default_params, pressure, grid32, phi,
                            z.copy(), np.zeros((3, 3) + grid32.spec_shape, complex), z.copy())


class TestEtdStep:
    def test_linear_only_equals_semigroup(self, default_params, pressure, grid32, rng):
        state = smooth_constrained_state(grid32, rng, k_scale=6.0)
        state = 1e-3 * state
        dt = dt_max(default_params, grid32)
        stepper = EtdStepper(default_params, pressure, grid32, dt)
        lv = stepper._aug_flow(state.phi, state.w, state.Psi, state.psi_spec())
        lin = semigroup_apply(default_params, state, dt)
        assert np.abs(lv[0] - lin.phi).max() <= 1e-15 * max(np.abs(lin.phi).max(), 1e-300)
        assert np.abs(lv[1] - lin.w).max() <= 1e-15 * max(np.abs(lin.w).max(), 1e-300)
        assert np.abs(lv[2] - lin.Psi).max() <= 1e-15 * max(np.abs(lin.Psi).max(), 1e-300)

    def test_vanishing_amplitude_reduces_to_linear_flow(self, default_params, pressure, grid32):
        state, psit = converted_state(grid32, amplitude=1e-9)
        dt = dt_max(default_params, grid32)
        stepper = EtdStepper(default_params, pressure, grid32, dt)
        aug = AugmentedState(state, psit, 0.0)
        for _ in range(10):
            aug = stepper.step(aug)
        lin = semigroup_apply(default_params, state, 10 * dt)
        assert (aug.state - lin).l2_norm() <= 1e-8 * lin.l2_norm()

    def test_step_doubling_is_second_order(self, default_params, pressure, grid32):
        state, psit = converted_state(grid32, amplitude=2e-2)
        dt = dt_max(default_params, grid32)
        t_end = 10 * dt

        def evolve(n):
            stepper = EtdStepper(default_params, pressure, grid32, t_end / n)
            aug = AugmentedState(state, psit, 0.0)
            for _ in range(n):
                aug = stepper.step(aug)
            return aug.state

        ref = evolve(40)
        e1 = (evolve(10) - ref).l2_norm()
        e2 = (evolve(20) - ref).l2_norm()
        assert 3.0 <= e1 / e2 <= 7.0

    def test_constraint_drift_over_100_steps(self, default_params, pressure):
        grid = make_grid(16, 4.0 * np.pi)
        data = make_initial_data(grid, "radial_potential", amplitude=1e-2)
        prim = primitive_from_displacement(grid, data.psi_tilde, data.v)
        state, psit = primitive_to_state(grid, prim)
        stepper = EtdStepper(default_params, pressure, grid, dt_max(default_params, grid))
        aug = AugmentedState(state, psit, 0.0)
        for _ in range(100):
            aug = stepper.step(aug)
        assert aug.state.constraint_violation() <= 1e-12 * max(state.l2_norm(), 1e-300)
        assert stepper.last_identity_residual <= 1e-11 * max(state.l2_norm(), 1e-300)

    def test_rejects_oversized_step(self, default_params, pressure, grid32):
        with pytest.raises(ValueError):
            EtdStepper(default_params, pressure, grid32, 10.0 * dt_max(default_params, grid32))


class TestSimulation:
    def test_zero_data_stays_zero(self, default_params, grid32):
        z = np.zeros((3,) + grid32.spec_shape, complex)
        prim = primitive_from_displacement(grid32, z, np.zeros((3,) + grid32.phys_shape))
        res = run_simulation(default_params, grid32, prim, t_end=1.0, n_snapshots=5,
                             with_invariants=False, with_split=False)
        assert max(res.norms[2.0]) == 0.0

    def test_small_run_diagnostics(self, default_params, grid32):
        data = make_initial_data(grid32, "radial_potential", amplitude=1e-2)
        res = run_simulation(default_params, grid32, data, t_end=2.0, n_snapshots=5,
                             compare_linear=True)
        assert max(res.constraint) <= 1e-14
        assert max(res.n_identity) <= 1e-14
        assert max(r.max_l2() for r in res.invariants) <= 1e-6
        # linear and nonlinear L2 agree to O(amplitude)
        nl = np.array(res.norms[2.0])
        ln = np.array(res.linear_norms[2.0])
        assert np.abs(nl - ln).max() <= 5e-2 * ln.max()
        # L2 norm non-increasing (weighted energy with beta = gamma = 1)
        assert np.all(np.diff(nl) <= 1e-9 * nl[0])

    def test_amplitude_limit_matches_linear_series(self, default_params):
        # vanishing-amplitude norm series agree with the linear twin
        grid = make_grid(16, 8.0 * np.pi)
        data = make_initial_data(grid, "radial_potential", amplitude=1e-8)
        res = run_simulation(default_params, grid, data, t_end=1.5, n_snapshots=5,
                             with_invariants=False, compare_linear=True)
        nl = np.array(res.norms[2.0])
        ln = np.array(res.linear_norms[2.0])
        assert np.abs(nl - ln).max() <= 1e-6 * ln.max()

    def test_snapshot_emission(self, default_params, tmp_path):
        grid = make_grid(16, 8.0 * np.pi)
        data = make_initial_data(grid, "radial_potential", amplitude=1e-3)
        run_simulation(default_params, grid, data, t_end=0.5, n_snapshots=5,
                       snapshot_dir=tmp_path / "snaps", keep_final=False)
        from vewaves.snapshots import read_snapshot

        files = sorted((tmp_path / "snaps").glob("state_*.bin"))
        assert len(files) >= 5
        _, t_last, fields = read_snapshot(files[-1])
        assert t_last == 0.5
        assert fields["rho"].min() > 0.9

    def test_horizon_warning(self, default_params, grid32):
        data = make_initial_data(grid32, "radial_potential", amplitude=1e-3)
        with pytest.warns(UserWarning, match="horizon"):
            run_simulation(default_params, grid32, data, t_end=50.0, n_snapshots=5,
                           with_invariants=False, with_split=False, keep_final=False)

    def test_pressure_slope_validated(self, default_params, grid32):
        data = make_initial_data(grid32, "radial_potential", amplitude=1e-3)
        with pytest.raises(ValueError, match="P'"):
            run_simulation(default_params, grid32, data, t_end=1.0,
                           pressure=PressureModel(gamma=2.0))


class TestHighFrequencyEnergy:
    def _hf_state(self, grid, cutoff, rng):
        def vec():
            s = grid.to_spectral(rng.normal(size=(3,) + grid.phys_shape))
            s *= np.exp(-grid.k2 / 6.0)
            s *= grid.kmag >= 1.2 * cutoff.m1 / np.sqrt(2.0)
            s[..., 0, 0, 0] = 0.0
            return s

        return StateU.from_displacement_velocity(grid, vec(), vec())

    def test_zero_state(self, default_params, grid32):
        cut = CutoffSpec(m1=default_params.m1)
        rep = hf_energy(default_params, cut, StateU.zero(grid32))
        assert rep.e == 0.0 and rep.d == 0.0

    def test_energy_monotone_under_linear_flow(self, default_params, grid32, rng):
        cut = CutoffSpec(m1=default_params.m1)
        state = self._hf_state(grid32, cut, rng)
        es = []
        for t in np.linspace(0.0, 5.0, 11):
            rep = hf_energy(default_params, cut, semigroup_apply(default_params, state, float(t)), t=t)
            es.append(rep.e)
        es = np.array(es)
        assert np.all(np.diff(es) <= 1e-12 * es[0])
        slope = np.polyfit(np.linspace(0.0, 5.0, 11), np.log(es), 1)[0]
        assert slope < -0.1

    def test_energy_dominates_h2_norm(self, default_params, grid32, rng):
        cut = CutoffSpec(m1=default_params.m1)
        state = self._hf_state(grid32, cut, rng)
        rep = hf_energy(default_params, cut, state)
        assert rep.e >= 0.5 * hf_state_norm_sq(default_params, cut, state)

    def test_dissipation_positive(self, default_params, grid32, rng):
        cut = CutoffSpec(m1=default_params.m1)
        state = self._hf_state(grid32, cut, rng)
        rep = hf_energy(default_params, cut, state)
        assert rep.d > 0.0
