"""Closed-form evaluation of the linearized flow in Fourier variables.

At each wavevector the 13-component linear system splits into a shear branch
(eigenvalue pair mu1, mu2 solving mu^2 + nu*k^2*mu + beta^2*k^2 = 0) and a
compressive branch (mu3, mu4 solving mu^2 + (nu+nu_tilde)*k^2*mu +
(beta^2+gamma^2)*k^2 = 0).  Every block of the solution operator is built
from six scalar time factors

    s_minus = (e^{mu1 t} - e^{mu2 t}) / (mu1 - mu2)
    s_plus  = (mu1 e^{mu1 t} - mu2 e^{mu2 t}) / (mu1 - mu2)
    s_zero  = (mu1 e^{mu2 t} - mu2 e^{mu1 t}) / (mu1 - mu2)

and the c-analogues with (mu3, mu4).  Near-confluent pairs are evaluated
through an exact cosh/sinch reformulation, so the te^{mu t} limits come out
of the same expressions.

The closed form is valid on the constraint manifold
{phi_hat = -i xi.psi_hat, Psi_hat = i psi_hat xi^T}; an independent
scaling-and-squaring matrix exponential of the full 13x13 generator serves
as the oracle for that statement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expm import expm_taylor
from .params import ModelParams
from .state import StateU

CONFLUENCY_RTOL = 1e-10
_SMALL_Z = 1e-3


class ConfluencyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Branch eigenvalues
# ---------------------------------------------------------------------------


def _branch_roots(a: float, b: float, k):
    """Stable roots of mu^2 + a k^2 mu + b k^2 = 0 with the +sqrt branch first.

    For positive discriminant the small root is rationalized to avoid the
    cancellation in -a k^2 + sqrt(disc); the square root of a negative
    discriminant is +i sqrt(|disc|).
    """
    k = np.asarray(k, dtype=float)
    k2 = k * k
    disc = (a * k2) ** 2 - 4.0 * b * k2
    sq = np.sqrt(disc.astype(complex))
    pos = disc >= 0.0
    mu1_pos = np.divide(
        -2.0 * b * k2,
        a * k2 + np.real(sq),
        out=np.zeros_like(k2),
        where=(a * k2 + np.real(sq)) > 0,
    )
    mu1 = np.where(pos, mu1_pos.astype(complex), (-a * k2 + sq) / 2.0)
    mu2 = (-a * k2 - sq) / 2.0
    return mu1, mu2


def _branch_confluent(a: float, b: float, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    k2 = k * k
    disc = (a * k2) ** 2 - 4.0 * b * k2
    return np.abs(disc) <= CONFLUENCY_RTOL * (1.0 + (a * k2) ** 2)


@dataclass(frozen=True)
class ModeEigen:
    """The four symbol eigenvalues at wavenumber magnitude k."""

    k: float
    mu: tuple  # (mu1, mu2, mu3, mu4) complex
    confluent_shear: bool
    confluent_comp: bool


def eigenvalues(params: ModelParams, k: float) -> ModeEigen:
    if k < 0:
        raise ValueError("k must be nonnegative")
    m1, m2 = _branch_roots(params.nu, params.beta**2, k)
    m3, m4 = _branch_roots(params.nu + params.nu_tilde, params.beta**2 + params.gamma**2, k)
    return ModeEigen(
        k=float(k),
        mu=(complex(m1), complex(m2), complex(m3), complex(m4)),
        confluent_shear=bool(_branch_confluent(params.nu, params.beta**2, k)),
        confluent_comp=bool(
            _branch_confluent(params.nu + params.nu_tilde, params.beta**2 + params.gamma**2, k)
        ),
    )


# ---------------------------------------------------------------------------
# Time factors
# ---------------------------------------------------------------------------


def _branch_factors(a: float, b: float, k, t: float, integral: bool = False):
    """The three divided-difference factors of one branch, vectorized in k.

    Writing mu_bar = (mu1+mu2)/2 and delta = (mu1-mu2)/2,

        f_minus = t e^{mu_bar t} sinch(delta t)
        f_plus  = e^{mu_bar t} (mu_bar t sinch(delta t) + cosh(delta t))
        f_zero  = e^{mu_bar t} (cosh(delta t) - mu_bar t sinch(delta t))

    which are uniformly accurate through the confluent points.  With
    ``integral`` also returns int_0^t f_minus(s) ds = (1 - f_zero)/(b k^2).
    """
    mu1, mu2 = _branch_roots(a, b, k)
    mu_bar = 0.5 * (mu1 + mu2)
    delta = 0.5 * (mu1 - mu2)
    z = delta * t
    m = mu_bar * t
    small = np.abs(z) <= _SMALL_Z

    z_s = np.where(small, z, 0.0)
    sinch = 1.0 + z_s**2 / 6.0 + z_s**4 / 120.0
    coshz = 1.0 + z_s**2 / 2.0 + z_s**4 / 24.0
    em = np.exp(np.where(small, m, 0.0))
    fm_small = t * em * sinch
    fp_small = em * (m * sinch + coshz)
    f0_small = em * (coshz - m * sinch)

    delta_safe = np.where(small, 1.0, delta)
    e1 = np.exp(np.where(small, 0.0, m + z))
    e2 = np.exp(np.where(small, 0.0, m - z))
    fm_big = (e1 - e2) / (2.0 * delta_safe)
    fp_big = (mu1 * e1 - mu2 * e2) / (2.0 * delta_safe)
    f0_big = (mu1 * e2 - mu2 * e1) / (2.0 * delta_safe)

    f_minus = np.where(small, fm_small, fm_big).real
    f_plus = np.where(small, fp_small, fp_big).real
    f_zero = np.where(small, f0_small, f0_big).real
    if not integral:
        return f_minus, f_plus, f_zero

    both_small = small & (np.abs(m) <= _SMALL_Z)
    f_int_small = t**2 * (0.5 + m / 3.0 + (3.0 * m**2 + z_s**2) / 24.0)
    bk2 = b * np.asarray(k, dtype=float) ** 2
    denom = np.where(both_small, 1.0, bk2)
    f_int_big = (1.0 - f_zero) / np.where(denom == 0.0, 1.0, denom)
    f_int = np.where(both_small, f_int_small, f_int_big).real
    return f_minus, f_plus, f_zero, f_int


@dataclass(frozen=True)
class KernelFactors:
    """Six scalar time factors at fixed (k, t)."""

    k: float
    t: float
    s_minus: float
    s_plus: float
    s_zero: float
    c_minus: float
    c_plus: float
    c_zero: float

    def shear(self):
        return self.s_minus, self.s_plus, self.s_zero

    def compressive(self):
        return self.c_minus, self.c_plus, self.c_zero


def kernel_factors(params: ModelParams, k: float, t: float) -> KernelFactors:
    if t < 0:
        raise ValueError("t must be nonnegative")
    sm, sp, s0 = _branch_factors(params.nu, params.beta**2, k, t)
    cm, cp, c0 = _branch_factors(
        params.nu + params.nu_tilde, params.beta**2 + params.gamma**2, k, t
    )
    return KernelFactors(
        k=float(k), t=float(t),
        s_minus=float(sm), s_plus=float(sp), s_zero=float(s0),
        c_minus=float(cm), c_plus=float(cp), c_zero=float(c0),
    )


def factor_arrays(params: ModelParams, kmag: np.ndarray, t: float, integrals: bool = False) -> dict:
    """All six factors (and optionally their s_minus/c_minus antiderivatives)
    evaluated on an array of wavenumber magnitudes."""
    out = {}
    if integrals:
        out["s_minus"], out["s_plus"], out["s_zero"], out["s_minus_int"] = _branch_factors(
            params.nu, params.beta**2, kmag, t, integral=True
        )
        out["c_minus"], out["c_plus"], out["c_zero"], out["c_minus_int"] = _branch_factors(
            params.nu + params.nu_tilde, params.beta**2 + params.gamma**2, kmag, t, integral=True
        )
    else:
        out["s_minus"], out["s_plus"], out["s_zero"] = _branch_factors(
            params.nu, params.beta**2, kmag, t
        )
        out["c_minus"], out["c_plus"], out["c_zero"] = _branch_factors(
            params.nu + params.nu_tilde, params.beta**2 + params.gamma**2, kmag, t
        )
    return out


# ---------------------------------------------------------------------------
# Generator matrices
# ---------------------------------------------------------------------------


def generator_matrix(params: ModelParams, xi) -> np.ndarray:
    """13x13 matrix M with dU/dt = M U, ordering (phi, w1..w3, Psi row-major)."""
    xi = np.asarray(xi, dtype=float)
    nu, nut, b2, g2 = params.nu, params.nu_tilde, params.beta**2, params.gamma**2
    k2 = float(xi @ xi)
    m = np.zeros((13, 13), dtype=complex)
    for j in range(3):
        m[0, 1 + j] = -1j * xi[j]
    for j in range(3):
        m[1 + j, 0] = -1j * g2 * xi[j]
        for l in range(3):
            m[1 + j, 1 + l] = -(nu * k2 * (j == l) + nut * xi[j] * xi[l])
            m[1 + j, 4 + 3 * j + l] = 1j * b2 * xi[l]
    for j in range(3):
        for l in range(3):
            m[4 + 3 * j + l, 1 + j] = 1j * xi[l]
    return m


def wave_system_matrix(params: ModelParams, xi) -> np.ndarray:
    """6x6 block matrix A(xi) of the second-order (w, w_t) system."""
    xi = np.asarray(xi, dtype=float)
    k2 = float(xi @ xi)
    outer = np.outer(xi, xi)
    eye = np.eye(3)
    a = np.zeros((6, 6))
    a[:3, 3:] = -eye
    a[3:, :3] = params.beta**2 * k2 * eye + params.gamma**2 * outer
    a[3:, 3:] = params.nu * k2 * eye + params.nu_tilde * outer
    return a


def manifold_basis(xi) -> np.ndarray:
    """13x6 embedding of the constraint manifold, columns = (psi dirs, w dirs).

    Column j (j<3): psi_hat = e_j, so phi_hat = -i xi_j, Psi_hat = i e_j xi^T.
    Column 3+j: w_hat = e_j.
    """
    xi = np.asarray(xi, dtype=float)
    basis = np.zeros((13, 6), dtype=complex)
    for j in range(3):
        basis[0, j] = -1j * xi[j]
        for l in range(3):
            basis[4 + 3 * j + l, j] = 1j * xi[l]
        basis[1 + j, 3 + j] = 1.0
    return basis


def eigenprojections(params: ModelParams, xi):
    """The four spectral projectors of -A(xi) on the (w, w_t) system.

    Rejects wavevectors at which either branch is confluent (the divided
    differences in the projectors degenerate there).
    """
    xi = np.asarray(xi, dtype=float)
    k = float(np.sqrt(xi @ xi))
    if k == 0.0:
        raise ValueError("eigenprojections need xi != 0")
    ev = eigenvalues(params, k)
    if ev.confluent_shear or ev.confluent_comp:
        raise ConfluencyError(f"confluent eigenvalues at |xi| = {k:g}")
    mu1, mu2, mu3, mu4 = ev.mu
    q = np.outer(xi, xi) / (k * k)
    s = np.eye(3) - q

    def pair(mua, mub, proj):
        d = mua - mub
        top = np.block([[-mub * proj, proj], [-mua * mub * proj, mua * proj]]) / d
        bot = np.block([[mua * proj, -proj], [mua * mub * proj, -mub * proj]]) / d
        return top, bot

    p1, p2 = pair(mu1, mu2, s)
    p3, p4 = pair(mu3, mu4, q)
    return p1, p2, p3, p4


# ---------------------------------------------------------------------------
# Kernel application
# ---------------------------------------------------------------------------


def kernel_apply_point(params: ModelParams, xi, t: float, u: np.ndarray) -> np.ndarray:
    """Apply the closed-form solution operator at one wavevector.

    ``u`` is the 13-vector (phi, w, Psi row-major); it must lie on the
    constraint manifold for the result to equal the true exponential.
    xi = 0 is the identity (the generator vanishes there).
    """
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=complex)
    if u.shape != (13,):
        raise ValueError("u must be a 13-vector")
    k = float(np.sqrt(xi @ xi))
    if k == 0.0:
        return u.copy()
    f = kernel_factors(params, k, t)
    khat = xi / k
    phi = u[0]
    w = u[1:4]
    psi_mat = u[4:13].reshape(3, 3)

    w_c = khat * (khat @ w)
    w_s = w - w_c
    psi_xi = psi_mat @ xi
    pxi_c = khat * (khat @ psi_xi)
    pxi_s = psi_xi - pxi_c
    row = khat @ psi_mat  # xi_hat^T Psi

    new_phi = f.c_zero * phi - 1j * f.c_minus * (xi @ w)
    new_w = (
        -1j * params.gamma**2 * f.c_minus * xi * phi
        + f.s_plus * w_s
        + f.c_plus * w_c
        + 1j * params.beta**2 * (f.s_minus * pxi_s + f.c_minus * pxi_c)
    )
    new_psi = (
        f.s_zero * psi_mat
        + (f.c_zero - f.s_zero) * np.outer(khat, row)
        + 1j * np.outer(f.s_minus * w_s + f.c_minus * w_c, xi)
    )
    out = np.empty(13, dtype=complex)
    out[0] = new_phi
    out[1:4] = new_w
    out[4:13] = new_psi.reshape(9)
    return out


def exact_point_flow(params: ModelParams, xi, t: float, u: np.ndarray) -> np.ndarray:
    """Oracle: e^{t M(xi)} u via the independent matrix exponential."""
    return expm_taylor(t * generator_matrix(params, xi)) @ np.asarray(u, dtype=complex)


def apply_factor_flow(params: ModelParams, g, f: dict, phi, w, psi):
    """Core of the grid solution operator given precomputed factor arrays.

    Returns (phi', w', Psi') with the zero mode passed through unchanged.
    """
    kx, ky, kz = g.kvec
    inv_k = np.sqrt(g.inv_k2)
    khx, khy, khz = kx * inv_k, ky * inv_k, kz * inv_k
    kd_w = khx * w[0] + khy * w[1] + khz * w[2]
    w_c = np.stack([khx * kd_w, khy * kd_w, khz * kd_w])
    w_s = w - w_c

    psi_xi = np.stack([
        kx * psi[0, 0] + ky * psi[0, 1] + kz * psi[0, 2],
        kx * psi[1, 0] + ky * psi[1, 1] + kz * psi[1, 2],
        kx * psi[2, 0] + ky * psi[2, 1] + kz * psi[2, 2],
    ])
    kd_pxi = khx * psi_xi[0] + khy * psi_xi[1] + khz * psi_xi[2]
    pxi_c = np.stack([khx * kd_pxi, khy * kd_pxi, khz * kd_pxi])
    pxi_s = psi_xi - pxi_c

    row = np.stack([
        khx * psi[0, 0] + khy * psi[1, 0] + khz * psi[2, 0],
        khx * psi[0, 1] + khy * psi[1, 1] + khz * psi[2, 1],
        khx * psi[0, 2] + khy * psi[1, 2] + khz * psi[2, 2],
    ])

    b2, g2 = params.beta**2, params.gamma**2
    new_phi = f["c_zero"] * phi - 1j * f["c_minus"] * (kx * w[0] + ky * w[1] + kz * w[2])
    mixed = f["s_minus"] * pxi_s + f["c_minus"] * pxi_c
    new_w = np.empty_like(w)
    for j, kj in enumerate((kx, ky, kz)):
        new_w[j] = (
            -1j * g2 * f["c_minus"] * kj * phi
            + f["s_plus"] * w_s[j]
            + f["c_plus"] * w_c[j]
            + 1j * b2 * mixed[j]
        )
    wmix = f["s_minus"] * w_s + f["c_minus"] * w_c
    kh = (khx, khy, khz)
    kfull = (kx, ky, kz)
    new_psi = np.empty_like(psi)
    dc = f["c_zero"] - f["s_zero"]
    for j in range(3):
        for l in range(3):
            new_psi[j, l] = f["s_zero"] * psi[j, l] + dc * kh[j] * row[l] + 1j * wmix[j] * kfull[l]

    # zero mode passes through untouched
    new_phi[0, 0, 0] = phi[0, 0, 0]
    new_w[:, 0, 0, 0] = w[:, 0, 0, 0]
    new_psi[:, :, 0, 0, 0] = psi[:, :, 0, 0, 0]
    return new_phi, new_w, new_psi


def integrated_velocity(params: ModelParams, g, f: dict, phi, w, psi):
    """int_0^t w(s) ds under the linear flow, from factor antiderivatives.

    Uses int s_plus = s_minus(t), int s_minus = (1 - s_zero)/(beta^2 k^2)
    (supplied as "s_minus_int" / "c_minus_int" in the factor dict).  At the
    zero mode this reduces to t*w, the exact value there.
    """
    kx, ky, kz = g.kvec
    inv_k = np.sqrt(g.inv_k2)
    khx, khy, khz = kx * inv_k, ky * inv_k, kz * inv_k
    kd_w = khx * w[0] + khy * w[1] + khz * w[2]
    w_c = np.stack([khx * kd_w, khy * kd_w, khz * kd_w])
    w_s = w - w_c
    psi_xi = np.stack([
        kx * psi[0, 0] + ky * psi[0, 1] + kz * psi[0, 2],
        kx * psi[1, 0] + ky * psi[1, 1] + kz * psi[1, 2],
        kx * psi[2, 0] + ky * psi[2, 1] + kz * psi[2, 2],
    ])
    kd_pxi = khx * psi_xi[0] + khy * psi_xi[1] + khz * psi_xi[2]
    pxi_c = np.stack([khx * kd_pxi, khy * kd_pxi, khz * kd_pxi])
    pxi_s = psi_xi - pxi_c
    b2, g2 = params.beta**2, params.gamma**2
    mixed = f["s_minus_int"] * pxi_s + f["c_minus_int"] * pxi_c
    out = np.empty_like(w)
    for j, kj in enumerate((kx, ky, kz)):
        out[j] = (
            -1j * g2 * f["c_minus_int"] * kj * phi
            + f["s_minus"] * w_s[j]
            + f["c_minus"] * w_c[j]
            + 1j * b2 * mixed[j]
        )
    return out


def semigroup_apply(params: ModelParams, state: StateU, t: float, constraint_warn: float = 1e-8) -> StateU:
    """Evolve a grid state by time t under the exact linearized flow.

    The zero mode passes through unchanged.  A constraint violation
    phi + tr(Psi) above ``constraint_warn`` (relative to the state size)
    raises, since the closed form is only the true flow on the manifold.
    """
    g = state.grid
    size = state.l2_norm()
    if size > 0 and state.constraint_violation() > constraint_warn * max(size, 1e-300):
        raise ValueError(
            "state violates phi + tr(Psi) = 0 beyond tolerance; "
            "the closed-form kernel does not apply off the constraint manifold"
        )
    f = factor_arrays(params, g.kmag, t)
    new_phi, new_w, new_psi = apply_factor_flow(params, g, f, state.phi, state.w, state.Psi)
    return StateU(g, new_phi, new_w, new_psi)
