"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one machine-greppable line:
    ACCEPTANCE <n> <PASS|FAIL> <name>: <measured> (budget <seconds>s)
Run with -s (or rely on captured output on failure) to see the lines.
"""

import time

import numpy as np

from conftest import smooth_constrained_state
from vewaves.harness import (
    beta_contrast,
    fit_decay_exponent,
    suite_factor_ode,
    suite_identities,
    suite_oracle,
    suite_projections,
)
from vewaves.kinematics import (
    g_from_grad_psitilde,
    gamma_solve_psitilde,
    grad_psitilde_from_g,
    make_initial_data,
    primitive_from_displacement,
    primitive_to_state,
    psi_from_psitilde,
)
from vewaves.nonlinear import hf_energy, hf_state_norm_sq, run_simulation
from vewaves.params import ModelParams
from vewaves.radial import DensityPulse, RadialInstrument
from vewaves.semigroup import semigroup_apply
from vewaves.spectral import CutoffSpec, make_grid
from vewaves.state import StateU

PARAMS = ModelParams(nu=1.0, nu_prime=0.0, beta=1.0, gamma=1.0)


def report(number, ok, name, detail, elapsed, budget):
    flag = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {number} {flag} {name}: {detail} [{elapsed:.1f}s / budget {budget:.0f}s]")
    assert ok, f"criterion {number} ({name}): {detail}"
    assert elapsed <= budget, f"criterion {number} exceeded runtime budget: {elapsed:.1f}s > {budget}s"


def test_criterion_01_eigenvalue_identities():
    """Branch product/sum identities to 1e-12 relative over six decades."""
    t0 = time.time()
    rng = np.random.default_rng(101)
    res = suite_identities(rng, n_params=5, n_k=60)
    report(1, res.residual <= 1e-12, "eigenvalue identities",
           f"worst relative residual {res.residual:.3e} (tol 1e-12)", time.time() - t0, 1.0)


def test_criterion_02_kernel_vs_oracle():
    """Closed-form kernel equals the 13x13 matrix exponential on the manifold."""
    t0 = time.time()
    rng = np.random.default_rng(202)
    res = suite_oracle(rng, PARAMS, n_trials=200)
    report(2, res.residual <= 1e-8, "kernel vs matrix-exponential oracle",
           f"worst relative error {res.residual:.3e} over 200 draws (tol 1e-8)", time.time() - t0, 10.0)


def test_criterion_03_projection_algebra():
    """Idempotence, annihilation, completeness, eigenrelation, exp sum."""
    t0 = time.time()
    rng = np.random.default_rng(303)
    res = suite_projections(rng, PARAMS, n_trials=100)
    report(3, res.residual <= 1e-9, "eigenprojection algebra",
           f"worst residual {res.residual:.3e} at 100 wavevectors (tol 1e-9/1e-10)", time.time() - t0, 5.0)


def test_criterion_04_factor_ode_residuals():
    """Each time factor satisfies its damped-wave equation."""
    t0 = time.time()
    res = suite_factor_ode(PARAMS, n_shells=20, n_times=20)
    report(4, res.residual <= 1e-6, "kernel-factor ODE residuals",
           f"worst normalized residual {res.residual:.3e} (tol 1e-6)", time.time() - t0, 1.0)


def test_criterion_05_semigroup_law_32cubed():
    """Composition law <= 1e-10 and constraint drift <= 1e-12 on 32^3."""
    t0 = time.time()
    rng = np.random.default_rng(505)
    grid = make_grid(32, 8.0 * np.pi)
    state = smooth_constrained_state(grid, rng)
    scale = state.l2_norm()
    two = semigroup_apply(PARAMS, semigroup_apply(PARAMS, state, 0.6), 1.1)
    one = semigroup_apply(PARAMS, state, 1.7)
    law = (two - one).l2_norm() / scale
    drift = max(semigroup_apply(PARAMS, state, t).constraint_violation() for t in (0.5, 1.7, 4.0)) / scale
    report(5, law <= 1e-10 and drift <= 1e-12, "semigroup law and constraint",
           f"composition {law:.3e} (tol 1e-10), drift {drift:.3e} (tol 1e-12)", time.time() - t0, 30.0)


def test_criterion_06_kinematics_round_trips():
    """Deformation/displacement round trips at 1e-2 amplitude; contraction < 0.2."""
    t0 = time.time()
    rng = np.random.default_rng(606)
    g = rng.normal(size=(3, 3, 12, 12, 12)) * 1e-2
    g_round = np.abs(g_from_grad_psitilde(grad_psitilde_from_g(g)) - g).max() / np.abs(g).max()

    grid = make_grid(32, 8.0 * np.pi)
    ratios = {}
    psi_round = None
    for amp in (1e-2, 1e-3):
        data = make_initial_data(grid, "radial_potential", amplitude=amp)
        prim = primitive_from_displacement(grid, data.psi_tilde, data.v)
        phi = grid.to_spectral(prim.rho - 1.0)
        psi = psi_from_psitilde(grid, phi, data.psi_tilde)
        solved, rep = gamma_solve_psitilde(grid, phi, psi, tol=1e-13)
        ratios[amp] = float(np.median(rep.ratios)) if rep.ratios else 0.0
        if amp == 1e-2:
            psi_round = np.abs(solved - data.psi_tilde).max() / np.abs(data.psi_tilde).max()
    ok = (g_round <= 1e-9 and psi_round <= 1e-9
          and ratios[1e-2] < 0.2 and ratios[1e-3] < ratios[1e-2])
    report(6, ok, "kinematics round trips",
           f"G loop {g_round:.2e}, psi loop {psi_round:.2e} (tol 1e-9); "
           f"contraction ratio {ratios[1e-2]:.3f} @1e-2 -> {ratios[1e-3]:.4f} @1e-3",
           time.time() - t0, 30.0)


def test_criterion_07_linear_radial_rates():
    """Fitted decay exponents inside the stated windows on t in [20, 200]."""
    t0 = time.time()
    inst = RadialInstrument(PARAMS, DensityPulse())
    times = np.geomspace(20.0, 200.0, 13)
    norms, _ = inst.series(times, (2.0, 4.0, np.inf))
    windows = {np.inf: (1.8, 2.2), 2.0: (0.65, 0.85), 4.0: (1.2, 1.55)}
    fits = {p: fit_decay_exponent(times, norms[p]).exponent for p in windows}
    ok = all(windows[p][0] <= fits[p] <= windows[p][1] for p in windows)
    ok = ok and fits[2.0] < fits[4.0] < fits[np.inf]  # exponents monotone in p
    report(7, ok, "linear radial decay rates",
           f"Linf {fits[np.inf]:.3f} in [1.8,2.2], L2 {fits[2.0]:.3f} in [0.65,0.85], "
           f"L4 {fits[4.0]:.3f} in [1.2,1.55]", time.time() - t0, 120.0)


def test_criterion_08_diffusion_wave_signature():
    """Elastic sup-norm exponent exceeds the heat value 3/2 by at least 0.3."""
    t0 = time.time()
    out = beta_contrast(PARAMS, times=np.geomspace(20.0, 200.0, 11))
    elastic = out["elastic"]["fit"].exponent
    heat0 = out["beta0"]["fit"].exponent
    ok = elastic - 1.5 >= 0.3
    report(8, ok, "diffusion-wave signature",
           f"elastic exponent {elastic:.3f} vs heat 1.5 (gap {elastic - 1.5:.3f} >= 0.3; "
           f"beta=0 run fits {heat0:.3f})", time.time() - t0, 120.0)


def test_criterion_09_nonlinear_desk_run():
    """64^3 amplitude-1e-2 run: invariants, trace identity, norm behavior."""
    t0 = time.time()
    grid = make_grid(64, 16.0 * np.pi)
    data = make_initial_data(grid, "radial_potential", amplitude=1e-2)
    horizon = (grid.length / 2.0 - data.support_radius) / PARAMS.sound_speed
    res = run_simulation(PARAMS, grid, data, t_end=float(horizon), n_snapshots=10,
                         compare_linear=True)
    inv = max(r.max_l2() for r in res.invariants)
    ident = max(res.n_identity)
    nl = np.array(res.norms[2.0])
    ln = np.array(res.linear_norms[2.0])
    tail = res.times >= 1.0
    monotone = bool(np.all(np.diff(nl[tail]) <= 1e-9 * nl[0]))
    ratio = nl[-1] / ln[-1]
    ok = inv <= 1e-6 and ident <= 1e-11 and monotone and 0.5 <= ratio <= 2.0
    report(9, ok, "nonlinear desk-scale run",
           f"invariants {inv:.2e} (tol 1e-6), trace identity {ident:.2e} (tol 1e-11), "
           f"L2 monotone after t=1: {monotone}, end ratio to linear {ratio:.4f} in [0.5,2]",
           time.time() - t0, 600.0)


def test_criterion_10_high_frequency_energy():
    """Energy monitor: monotone decay, exponential rate, norm equivalence."""
    t0 = time.time()
    rng = np.random.default_rng(1010)
    grid = make_grid(32, 8.0 * np.pi)
    cutoff = CutoffSpec(m1=PARAMS.m1)

    def hf_vec():
        s = grid.to_spectral(rng.normal(size=(3,) + grid.phys_shape))
        s *= np.exp(-grid.k2 / 6.0)
        s *= grid.kmag >= 1.2 * cutoff.m1 / np.sqrt(2.0)
        s[..., 0, 0, 0] = 0.0
        return s

    state = StateU.from_displacement_velocity(grid, hf_vec(), hf_vec())
    ts = np.linspace(0.0, 5.0, 11)
    es = np.array([
        hf_energy(PARAMS, cutoff, semigroup_apply(PARAMS, state, float(t)), t=t).e for t in ts
    ])
    monotone = bool(np.all(np.diff(es) <= 1e-12 * es[0]))
    slope = float(np.polyfit(ts, np.log(es), 1)[0])
    equiv = es[0] >= 0.5 * hf_state_norm_sq(PARAMS, cutoff, state)
    ok = monotone and slope < -0.05 and equiv
    report(10, ok, "high-frequency energy",
           f"monotone {monotone}, log-slope {slope:.2f} < 0, E >= H2/2: {equiv}",
           time.time() - t0, 60.0)
