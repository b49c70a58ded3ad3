"""Eigenvalues, kernel factors, pointwise kernel, projections, grid flow."""

import numpy as np
import pytest
import scipy.linalg

from conftest import constrained_mode, smooth_constrained_state
from vewaves.expm import expm_taylor
from vewaves.params import ModelParams
from vewaves.semigroup import (
    ConfluencyError,
    eigenprojections,
    eigenvalues,
    exact_point_flow,
    generator_matrix,
    kernel_apply_point,
    kernel_factors,
    manifold_basis,
    semigroup_apply,
    wave_system_matrix,
)


def roots_oracle(a, b, k):
    """Independent quadratic-root solver for mu^2 + a k^2 mu + b k^2 = 0.

    Ordered by the +sqrt branch convention: positive imaginary part first
    for complex pairs, the less negative root first for real pairs.
    """
    r = np.roots([1.0, a * k**2, b * k**2])
    return sorted(r, key=lambda z: (-z.imag, -z.real))


class TestEigenvalues:
    def test_unit_parameters_k1(self, default_params):
        ev = eigenvalues(default_params, 1.0)
        assert abs(ev.mu[0] - (-0.5 + 1j * np.sqrt(3) / 2)) <= 1e-14
        assert abs(ev.mu[1] - (-0.5 - 1j * np.sqrt(3) / 2)) <= 1e-14
        r = roots_oracle(1.0, 1.0, 1.0)
        assert abs(ev.mu[0] - r[0]) <= 1e-13 and abs(ev.mu[1] - r[1]) <= 1e-13

    def test_matches_root_oracle_generically(self, rng):
        for _ in range(20):
            prm = ModelParams(
                nu=float(rng.uniform(0.3, 2.5)), nu_prime=float(rng.uniform(0.0, 1.0)),
                beta=float(rng.uniform(0.3, 2.5)), gamma=float(rng.uniform(0.3, 2.5)),
            )
            k = float(rng.uniform(0.05, 8.0))
            ev = eigenvalues(prm, k)
            for got, want in zip(ev.mu[:2], roots_oracle(prm.nu, prm.beta**2, k)):
                assert abs(got - want) <= 1e-11 * max(abs(want), 1.0)
            comp = roots_oracle(prm.nu + prm.nu_tilde, prm.beta**2 + prm.gamma**2, k)
            for got, want in zip(ev.mu[2:], comp):
                assert abs(got - want) <= 1e-11 * max(abs(want), 1.0)

    def test_confluent_shell_flagged(self, default_params):
        ev = eigenvalues(default_params, 2.0)  # discriminant vanishes at k = 2 beta/nu
        assert ev.confluent_shear
        assert abs(ev.mu[0] + 2.0) <= 1e-12 and abs(ev.mu[1] + 2.0) <= 1e-12
        assert not eigenvalues(default_params, 1.9).confluent_shear

    def test_small_k_asymptotics(self, default_params):
        # mu_{1,2} ~ -(nu/2) k^2 +- i beta k for small k
        k = 1e-3
        ev = eigenvalues(default_params, k)
        lead = -0.5 * default_params.nu * k**2 + 1j * default_params.beta * k
        assert abs(ev.mu[0] - lead) <= 5.0 * k**3

    def test_large_k_limit_consistent_with_product_identity(self, default_params):
        # the product/sum identities force mu1 -> -beta^2/nu as k grows
        for k in (1e2, 1e3):
            ev = eigenvalues(default_params, k)
            assert abs(ev.mu[0] + default_params.beta**2 / default_params.nu) <= 5.0 / k**2

    def test_identities_over_decades(self, rng):
        for _ in range(5):
            prm = ModelParams(
                nu=float(rng.uniform(0.2, 3.0)), nu_prime=float(rng.uniform(0.0, 2.0)),
                beta=float(rng.uniform(0.2, 3.0)), gamma=float(rng.uniform(0.2, 3.0)),
            )
            for k in np.geomspace(1e-3, 1e3, 60):
                ev = eigenvalues(prm, float(k))
                m1, m2, m3, m4 = ev.mu
                assert abs(m1 * m2 - prm.beta**2 * k**2) <= 1e-12 * prm.beta**2 * k**2
                assert abs(m1 + m2 + prm.nu * k**2) <= 1e-12 * prm.nu * k**2
                b2g2 = prm.beta**2 + prm.gamma**2
                assert abs(m3 * m4 - b2g2 * k**2) <= 1e-12 * b2g2 * k**2
                assert abs(m3 + m4 + (prm.nu + prm.nu_tilde) * k**2) <= 1e-12 * (prm.nu + prm.nu_tilde) * k**2

    def test_negative_real_parts(self, default_params):
        for k in np.geomspace(1e-2, 1e2, 17):
            ev = eigenvalues(default_params, float(k))
            assert all(m.real < 0 for m in ev.mu)

    def test_rejects_negative_k(self, default_params):
        with pytest.raises(ValueError):
            eigenvalues(default_params, -1.0)


class TestKernelFactors:
    def test_initial_values(self, default_params):
        for k in (0.0, 0.3, 2.0, 17.0):
            f = kernel_factors(default_params, k, 0.0)
            assert (f.s_minus, f.s_plus, f.s_zero) == (0.0, 1.0, 1.0)
            assert (f.c_minus, f.c_plus, f.c_zero) == (0.0, 1.0, 1.0)

    def test_confluent_point_closed_form(self, default_params):
        # k = 2: mu = -2 doubly; limits t e^{mu t}, (1+mu t) e^{mu t}, (1-mu t) e^{mu t}
        f = kernel_factors(default_params, 2.0, 1.0)
        assert abs(f.s_minus - np.exp(-2.0)) <= 1e-14
        assert abs(f.s_plus + np.exp(-2.0)) <= 1e-14
        assert abs(f.s_zero - 3.0 * np.exp(-2.0)) <= 1e-14

    def test_generic_factors_match_root_oracle(self, rng):
        for _ in range(40):
            prm = ModelParams(
                nu=float(rng.uniform(0.3, 2.0)), nu_prime=float(rng.uniform(0.0, 1.0)),
                beta=float(rng.uniform(0.3, 2.0)), gamma=float(rng.uniform(0.3, 2.0)),
            )
            k = float(rng.uniform(0.05, 5.0))
            t = float(rng.uniform(0.0, 4.0))
            ev_sh = roots_oracle(prm.nu, prm.beta**2, k)
            if abs(ev_sh[0] - ev_sh[1]) < 1e-4:
                continue
            m1, m2 = ev_sh
            f = kernel_factors(prm, k, t)
            d = m1 - m2
            assert abs(f.s_minus - ((np.exp(m1 * t) - np.exp(m2 * t)) / d).real) <= 1e-12
            assert abs(f.s_plus - ((m1 * np.exp(m1 * t) - m2 * np.exp(m2 * t)) / d).real) <= 1e-12
            assert abs(f.s_zero - ((m1 * np.exp(m2 * t) - m2 * np.exp(m1 * t)) / d).real) <= 1e-12

    def test_large_k_underflow_is_graceful(self, default_params):
        f = kernel_factors(default_params, 1e3, 10.0)
        assert np.isfinite([f.s_minus, f.s_plus, f.s_zero, f.c_minus, f.c_plus, f.c_zero]).all()


class TestGeneratorMatrix:
    def test_zero_wavevector_gives_zero_matrix(self, default_params):
        assert np.abs(generator_matrix(default_params, [0.0, 0.0, 0.0])).max() == 0.0

    def test_manifold_restriction_equals_wave_block(self, default_params, rng):
        xi = rng.normal(size=3)
        basis = manifold_basis(xi)
        m = generator_matrix(default_params, xi)
        restricted = np.linalg.pinv(basis) @ m @ basis
        assert np.abs(restricted + wave_system_matrix(default_params, xi)).max() <= 1e-12

    def test_manifold_eigenvalues_subset_of_branches(self, default_params, rng):
        xi = rng.normal(size=3) * 1.3
        basis = manifold_basis(xi)
        m = generator_matrix(default_params, xi)
        restricted = np.linalg.pinv(basis) @ m @ basis
        eigs = np.linalg.eigvals(restricted)
        ev = eigenvalues(default_params, float(np.linalg.norm(xi)))
        for lam in eigs:
            assert min(abs(lam - mu) for mu in ev.mu) <= 1e-9 * max(abs(lam), 1.0)

    def test_scaled_coupling_blocks_are_anti_adjoint(self, default_params, rng):
        xi = rng.normal(size=3)
        m = generator_matrix(default_params, xi)
        scale = np.ones(13)
        scale[0] = default_params.gamma
        scale[4:] = default_params.beta
        ms = np.diag(scale) @ m @ np.diag(1.0 / scale)
        # phi <-> w block
        assert np.abs(ms[0, 1:4] + np.conj(ms[1:4, 0])).max() <= 1e-13
        # Psi <-> w block
        assert np.abs(ms[4:, 1:4] + np.conj(ms[1:4, 4:]).T).max() <= 1e-13
        # dissipative w block is real symmetric negative semidefinite
        block = ms[1:4, 1:4]
        assert np.abs(block - block.T.conj()).max() <= 1e-13
        assert np.all(np.linalg.eigvalsh(block.real) <= 1e-12)


class TestKernelPoint:
    def test_time_zero_is_identity(self, default_params, rng):
        xi = rng.normal(size=3)
        u = constrained_mode(rng, xi)
        assert np.abs(kernel_apply_point(default_params, xi, 0.0, u) - u).max() <= 1e-14

    def test_zero_wavevector_is_identity(self, default_params, rng):
        u = rng.normal(size=13) + 1j * rng.normal(size=13)
        out = kernel_apply_point(default_params, np.zeros(3), 2.0, u)
        assert np.abs(out - u).max() == 0.0

    def test_matches_matrix_exponential_oracle(self, default_params, rng):
        worst = 0.0
        for _ in range(60):
            xi = rng.normal(size=3) * rng.choice([0.2, 1.0, 4.0])
            t = float(rng.uniform(0.0, 3.0))
            u = constrained_mode(rng, xi)
            got = kernel_apply_point(default_params, xi, t, u)
            want = exact_point_flow(default_params, xi, t, u)
            worst = max(worst, np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-300))
        assert worst <= 1e-9

    def test_near_confluent_shells(self, default_params, rng):
        for base in default_params.confluent_radii():
            for eps in (-1e-6, 0.0, 1e-6):
                d = rng.normal(size=3)
                xi = d / np.linalg.norm(d) * (base + eps)
                u = constrained_mode(rng, xi)
                got = kernel_apply_point(default_params, xi, 1.3, u)
                want = exact_point_flow(default_params, xi, 1.3, u)
                assert np.linalg.norm(got - want) <= 1e-8 * np.linalg.norm(want)

    def test_solenoidal_velocity_keeps_density_zero(self, default_params, rng):
        xi = rng.normal(size=3)
        w = rng.normal(size=3) + 1j * rng.normal(size=3)
        w -= xi * (xi @ w) / (xi @ xi)  # divergence-free
        u = np.zeros(13, complex)
        u[1:4] = w
        for t in (0.5, 2.0):
            out = kernel_apply_point(default_params, xi, t, u)
            assert abs(out[0]) <= 1e-14 * np.linalg.norm(w)


class TestEigenprojections:
    def test_algebra(self, default_params, rng):
        xi = rng.normal(size=3) * 1.1
        pis = eigenprojections(default_params, xi)
        assert np.abs(sum(pis) - np.eye(6)).max() <= 1e-10
        for i in range(4):
            for j in range(4):
                want = pis[i] if i == j else np.zeros((6, 6))
                assert np.abs(pis[i] @ pis[j] - want).max() <= 1e-10

    def test_eigenrelation_and_exponential_sum(self, default_params, rng):
        xi = rng.normal(size=3) * 0.7
        k = float(np.linalg.norm(xi))
        ev = eigenvalues(default_params, k)
        pis = eigenprojections(default_params, xi)
        asys = wave_system_matrix(default_params, xi)
        for mu, pi in zip(ev.mu, pis):
            assert np.abs((-asys) @ pi - mu * pi).max() <= 1e-10
        t = 1.1
        lhs = sum(np.exp(mu * t) * pi for mu, pi in zip(ev.mu, pis))
        rhs = expm_taylor(-t * asys)
        assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(rhs).max()

    def test_confluent_rejected(self, default_params):
        xi = np.array([2.0, 0.0, 0.0])  # shear-confluent shell
        with pytest.raises(ConfluencyError):
            eigenprojections(default_params, xi)


class TestGridSemigroup:
    def test_time_zero_exact(self, default_params, grid16, rng):
        state = smooth_constrained_state(grid16, rng)
        out = semigroup_apply(default_params, state, 0.0)
        assert (out - state).l2_norm() <= 1e-13 * state.l2_norm()

    def test_semigroup_law(self, default_params, grid16, rng):
        state = smooth_constrained_state(grid16, rng)
        two = semigroup_apply(default_params, semigroup_apply(default_params, state, 0.4), 0.7)
        one = semigroup_apply(default_params, state, 1.1)
        assert (two - one).l2_norm() <= 1e-10 * one.l2_norm()

    def test_constraint_preserved(self, default_params, grid16, rng):
        state = smooth_constrained_state(grid16, rng)
        for t in (0.2, 1.0, 4.0):
            out = semigroup_apply(default_params, state, t)
            assert out.constraint_violation() <= 1e-12 * state.l2_norm()

    def test_result_real_in_physical_space(self, default_params, grid16, rng):
        state = smooth_constrained_state(grid16, rng)
        out = semigroup_apply(default_params, state, 0.8)
        phi_p = grid16.to_physical(out.phi)
        full = np.fft.ifftn(np.fft.fftn(phi_p))
        assert np.abs(full.imag).max() <= 1e-12 * max(np.abs(phi_p).max(), 1e-300)

    def test_zero_mode_passthrough(self, default_params, grid16, rng):
        state = smooth_constrained_state(grid16, rng)
        phi = state.phi.copy()
        phi[0, 0, 0] = 3.3  # constant background offset in phi
        w = state.w.copy()
        w[:, 0, 0, 0] = [0.1, -0.2, 0.5]
        shifted = type(state)(grid16, phi, w, state.Psi.copy())
        out = semigroup_apply(default_params, shifted, 1.7, constraint_warn=np.inf)
        assert out.phi[0, 0, 0] == phi[0, 0, 0]
        assert np.all(out.w[:, 0, 0, 0] == w[:, 0, 0, 0])

    def test_off_manifold_state_rejected(self, default_params, grid16, rng):
        state = smooth_constrained_state(grid16, rng)
        phi = state.phi + 0.5 * np.abs(state.phi).max()
        bad = type(state)(grid16, phi, state.w, state.Psi)
        with pytest.raises(ValueError, match="manifold"):
            semigroup_apply(default_params, bad, 1.0)

    def test_grid_matches_pointwise_kernel(self, default_params, grid16, rng):
        state = smooth_constrained_state(grid16, rng)
        out = semigroup_apply(default_params, state, 1.1)
        ix, iy, iz = 3, 14, 5
        xi = np.array([grid16.k1d[ix], grid16.k1d[iy], grid16.k1d_half[iz]])
        u = np.concatenate([[state.phi[ix, iy, iz]], state.w[:, ix, iy, iz],
                            state.Psi[:, :, ix, iy, iz].reshape(9)])
        want = kernel_apply_point(default_params, xi, 1.1, u)
        got = np.concatenate([[out.phi[ix, iy, iz]], out.w[:, ix, iy, iz],
                              out.Psi[:, :, ix, iy, iz].reshape(9)])
        assert np.abs(got - want).max() <= 1e-13 * max(np.abs(want).max(), 1e-300)


class TestExpmOracle:
    def test_against_scipy(self, rng):
        for n in (6, 13):
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            got = expm_taylor(a)
            want = scipy.linalg.expm(a)
            assert np.abs(got - want).max() <= 1e-12 * np.abs(want).max()

    def test_identity_and_nilpotent(self):
        assert np.abs(expm_taylor(np.zeros((4, 4))) - np.eye(4)).max() == 0.0
        n = np.zeros((3, 3))
        n[0, 1] = 2.0
        want = np.eye(3)
        want[0, 1] = 2.0
        assert np.abs(expm_taylor(n) - want).max() <= 1e-15
