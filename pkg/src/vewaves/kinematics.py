"""Coordinate and variable transforms between deformation and displacement.

The deformation perturbation G = F - I and the displacement gradient are
exchanged through pointwise 3x3 algebra:

    grad(psi_tilde) = I - (I + G)^{-1},
    G = grad(psi_tilde) + h(grad(psi_tilde)),
    h(A) = (I - A)^{-1} - I - A  (quadratic for small A).

The transformed displacement psi linearizes the mass-deformation constraint
to phi + div(psi) = 0:

    psi = psi_tilde - (-Delta)^{-1} div^T (phi grad(psi_tilde)
                                           + (1 + phi) h(grad(psi_tilde)))

and is inverted by Picard iteration of the contraction map in the other
direction.  Initial data generators produce states satisfying the intrinsic
constraints (unit mass-deformation product, divergence-free stress rows via
the Piola identity, curl compatibility) to spectral accuracy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .spectral import (
    Field,
    SpectralGrid,
    div_spec,
    div_tensor_spec,
    grad_spec,
    grad_vector_spec,
    invlap_div_transpose_spec,
    l2_norm_spec,
    sobolev_weight,
)
from .state import StateU


class KinematicsError(ValueError):
    pass


class ContractionDiverged(KinematicsError):
    def __init__(self, ratio, iterations):
        super().__init__(f"fixed-point iteration diverged (ratio {ratio:.3g} after {iterations} iterations)")
        self.ratio = ratio
        self.iterations = iterations


# ---------------------------------------------------------------------------
# Pointwise 3x3 algebra on (3, 3, ...) arrays
# ---------------------------------------------------------------------------


def det3(m: np.ndarray) -> np.ndarray:
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def inv3(m: np.ndarray, min_det: float = 1e-8) -> np.ndarray:
    """Pointwise inverse by the closed-form adjugate (branch-free)."""
    d = det3(m)
    if np.abs(d).min() < min_det:
        raise KinematicsError(f"pointwise matrix nearly singular: min |det| = {np.abs(d).min():.3g}")
    adj = np.empty_like(m)
    adj[0, 0] = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    adj[0, 1] = m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]
    adj[0, 2] = m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]
    adj[1, 0] = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    adj[1, 1] = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    adj[1, 2] = m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]
    adj[2, 0] = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    adj[2, 1] = m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]
    adj[2, 2] = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return adj / d


def matmul3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,jk...->ik...", a, b)


def add_eye(m: np.ndarray, c: float = 1.0) -> np.ndarray:
    out = m.copy()
    for j in range(3):
        out[j, j] = out[j, j] + c
    return out


def frobenius_max(m: np.ndarray) -> float:
    return float(np.sqrt(np.sum(m**2, axis=(0, 1))).max())


# ---------------------------------------------------------------------------
# Deformation <-> displacement gradient
# ---------------------------------------------------------------------------


def h_map(a: np.ndarray) -> np.ndarray:
    """h(A) = (I - A)^{-1} - I - A, pointwise; O(|A|^2) for small A."""
    return add_eye(inv3(add_eye(-a)) - a, -1.0)


def grad_psitilde_from_g(g: np.ndarray) -> np.ndarray:
    """grad(psi_tilde) = I - (I + G)^{-1}, pointwise on physical samples."""
    return add_eye(-inv3(add_eye(g)), 1.0)


def g_from_grad_psitilde(a: np.ndarray) -> np.ndarray:
    """G = A + h(A) = (I - A)^{-1} - I."""
    return add_eye(inv3(add_eye(-a)), -1.0)


def vector_from_gradient(grid: SpectralGrid, grad_spec_arr: np.ndarray) -> np.ndarray:
    """Recover the (mean-zero) vector whose Jacobian is the given tensor.

    Valid when each row is a gradient field (curl-free), which the
    admissibility constraints guarantee: v_j = -i T[j,:].xi / |xi|^2.
    """
    kx, ky, kz = grid.kvec
    out = np.empty((3,) + grid.spec_shape, dtype=complex)
    for j in range(3):
        out[j] = -1j * (kx * grad_spec_arr[j, 0] + ky * grad_spec_arr[j, 1] + kz * grad_spec_arr[j, 2]) * grid.inv_k2
    return out


# ---------------------------------------------------------------------------
# psi <-> psi_tilde
# ---------------------------------------------------------------------------


def _transform_source(grid: SpectralGrid, phi_p: np.ndarray, grad_pt_p: np.ndarray) -> np.ndarray:
    """Spectral tensor phi*grad(psi_tilde) + (1 + phi)*h(grad(psi_tilde))."""
    h = h_map(grad_pt_p)
    src = phi_p * grad_pt_p + (1.0 + phi_p) * h
    return grid.to_spectral(src)


def psi_from_psitilde(grid: SpectralGrid, phi_spec: np.ndarray, psit_spec: np.ndarray) -> np.ndarray:
    """Direct evaluation of the constraint-linearizing displacement."""
    phi_p = grid.to_physical(phi_spec)
    grad_pt = grid.to_physical(grad_vector_spec(grid, psit_spec))
    if frobenius_max(grad_pt) >= 1.0:
        raise KinematicsError("displacement gradient reaches 1; transform series diverges")
    src = _transform_source(grid, phi_p, grad_pt)
    return psit_spec - invlap_div_transpose_spec(grid, src)


@dataclass(frozen=True)
class ContractionReport:
    iterations: int
    ratios: list
    final_update: float

    @property
    def ratio(self) -> float:
        return self.ratios[-1] if self.ratios else 0.0


def gamma_solve_psitilde(
    grid: SpectralGrid,
    phi_spec: np.ndarray,
    psi_spec: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 60,
    initial: np.ndarray | None = None,
):
    """Solve psi_tilde = psi + (-Delta)^{-1} div^T(...) by Picard iteration.

    Returns (psi_tilde_spec, ContractionReport).  Raises ContractionDiverged
    when the observed update ratio reaches 1.
    """
    phi_p = grid.to_physical(phi_spec)
    psit = initial.copy() if initial is not None else psi_spec.copy()
    h1 = sobolev_weight(grid, 1) * grid.parseval_weight
    vol = grid.volume / grid.n**6

    def h1_norm(v):
        return float(np.sqrt(np.sum(h1 * np.abs(v) ** 2) * vol))

    prev_update = None
    ratios = []
    bad = 0
    for it in range(1, max_iter + 1):
        grad_pt = grid.to_physical(grad_vector_spec(grid, psit))
        if frobenius_max(grad_pt) >= 1.0:
            raise KinematicsError("displacement gradient reaches 1 during iteration")
        nxt = psi_spec + invlap_div_transpose_spec(grid, _transform_source(grid, phi_p, grad_pt))
        upd = h1_norm(nxt - psit)
        psit = nxt
        if prev_update is not None and prev_update > 0:
            ratios.append(upd / prev_update)
            if ratios[-1] >= 1.0:
                bad += 1
                if bad >= 2:
                    raise ContractionDiverged(ratios[-1], it)
            else:
                bad = 0
        prev_update = upd
        if upd <= tol:
            return psit, ContractionReport(it, ratios, upd)
    raise KinematicsError(f"fixed point not reached in {max_iter} iterations (last update {prev_update:.3g})")


# ---------------------------------------------------------------------------
# Primitive state and constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrimitiveState:
    """(rho, v, F) on a grid, physical samples."""

    grid: SpectralGrid
    rho: np.ndarray
    v: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        s = self.grid.phys_shape
        if self.rho.shape != s or self.v.shape != (3,) + s or self.F.shape != (3, 3) + s:
            raise ValueError("component shapes do not match grid")
        if self.rho.min() <= 0:
            raise KinematicsError("density must stay positive")


def primitive_from_displacement(grid: SpectralGrid, psit_spec: np.ndarray, v_phys: np.ndarray) -> PrimitiveState:
    """Build (rho, v, F) from a displacement: F^{-1} = I - grad(psi_tilde).

    rho * det F = 1 holds exactly by construction; div(rho F^T) = 0 to
    spectral accuracy by the Piola identity; curl compatibility holds because
    F^{-1} is a gradient.  The mean of rho - 1 vanishes analytically (the
    elementary symmetric functions of a gradient are null Lagrangians).
    """
    grad_pt = grid.to_physical(grad_vector_spec(grid, psit_spec))
    if frobenius_max(grad_pt) >= 1.0:
        raise KinematicsError("displacement gradient reaches 1; deformation not invertible")
    f_inv = add_eye(-grad_pt)
    rho = det3(f_inv)
    f = inv3(f_inv)
    mean_phi = float(np.mean(rho - 1.0))
    if abs(mean_phi) > 1e-12:
        warnings.warn(f"generated density perturbation has mean {mean_phi:.3g}", stacklevel=2)
    return PrimitiveState(grid, rho, np.asarray(v_phys, dtype=float), f)


@dataclass(frozen=True)
class ResidualReport:
    """L^2 and L^inf norms of the intrinsic constraint residuals."""

    stress_div_l2: float
    stress_div_linf: float
    unit_product_l2: float
    unit_product_linf: float
    curl_compat_l2: float
    curl_compat_linf: float

    def max_l2(self) -> float:
        return max(self.stress_div_l2, self.unit_product_l2, self.curl_compat_l2)


def constraint_residuals(state: PrimitiveState) -> ResidualReport:
    grid = state.grid
    cell = grid.cell_volume

    def norms(arr):
        flat = arr.reshape(-1, *grid.phys_shape)
        mag = np.sqrt(np.sum(flat**2, axis=0))
        return float(np.sqrt(np.sum(mag**2) * cell)), float(mag.max())

    # div(rho F^T): rows are sum_k d_k (rho F[k, j])
    rft = np.einsum("jk...->kj...", state.F) * state.rho
    sdiv = grid.to_physical(div_tensor_spec(grid, grid.to_spectral(rft)))
    l2_s, li_s = norms(sdiv)

    prod = state.rho * det3(state.F) - 1.0
    l2_p, li_p = norms(prod[None])

    f_spec = grid.to_spectral(state.F)
    df = np.empty((3, 3, 3) + grid.phys_shape)  # df[m, j, k] = d_m F[j, k]
    kx, ky, kz = grid.kvec
    for m, km in enumerate((kx, ky, kz)):
        df[m] = grid.to_physical(1j * km * f_spec)
    curl = np.einsum("ml...,mjk...->jkl...", state.F, df) - np.einsum(
        "mk...,mjl...->jkl...", state.F, df
    )
    l2_c, li_c = norms(curl)
    return ResidualReport(l2_s, li_s, l2_p, li_p, l2_c, li_c)


# ---------------------------------------------------------------------------
# State conversions
# ---------------------------------------------------------------------------


def primitive_to_state(grid: SpectralGrid, prim: PrimitiveState, report: bool = False):
    """(rho, v, F) -> U = (phi, w, grad psi) through the displacement chain.

    The returned state is exactly on the constraint manifold: phi is taken as
    -div(psi), which coincides with rho - 1 up to the residual of the
    intrinsic constraints in the data (reported as a diagnostic).
    """
    g = prim.F.copy()
    for j in range(3):
        g[j, j] -= 1.0
    grad_pt_p = grad_psitilde_from_g(g)
    psit = vector_from_gradient(grid, grid.to_spectral(grad_pt_p))
    phi_spec = grid.to_spectral(prim.rho - 1.0)
    psi = psi_from_psitilde(grid, phi_spec, psit)
    state = StateU.from_displacement_velocity(grid, psi, grid.to_spectral(prim.v))
    if not report:
        return state, psit
    diag = {
        "phi_vs_divpsi": l2_norm_spec(grid, phi_spec - state.phi),
        "equiv_g_gradpt_l2": _ratio_l2(grid, g, grad_pt_p),
    }
    return state, psit, diag


def _ratio_l2(grid, a, b):
    na = np.sqrt(np.sum(a**2) * grid.cell_volume)
    nb = np.sqrt(np.sum(b**2) * grid.cell_volume)
    return float(na / nb) if nb > 0 else float("nan")


def state_to_primitive(grid: SpectralGrid, state: StateU, tol: float = 1e-12, psit_guess=None):
    """U = (phi, w, grad psi) -> (rho, v, F) by solving the contraction map."""
    psi = state.psi_spec()
    psit, report = gamma_solve_psitilde(grid, state.phi, psi, tol=tol, initial=psit_guess)
    grad_pt = grid.to_physical(grad_vector_spec(grid, psit))
    g = g_from_grad_psitilde(grad_pt)
    rho = 1.0 + grid.to_physical(state.phi)
    f = g.copy()
    for j in range(3):
        f[j, j] += 1.0
    v = grid.to_physical(state.w)
    return PrimitiveState(grid, rho, v, f), psit, report


# ---------------------------------------------------------------------------
# Initial data generation
# ---------------------------------------------------------------------------


_SUPPORT_DECADES = 6.07  # radius = this many sigmas: Gaussian there is ~1e-8


def _data_width(grid: SpectralGrid, support_radius: float | None) -> float:
    """Gaussian width: balanced physical/spectral tails unless overridden.

    The balanced choice sigma = L/sqrt(2 pi n) puts both the value at the
    half-box and the spectrum at the grid Nyquist near e^{-pi n / 4}, the
    best a localized profile can do at this resolution.
    """
    if support_radius is None:
        sigma = grid.length / np.sqrt(2.0 * np.pi * grid.n)
    else:
        if support_radius >= grid.length / 2.0:
            raise KinematicsError("support radius must fit inside half the box")
        sigma = support_radius / _SUPPORT_DECADES
    if sigma * grid.kmax < 5.0:
        raise KinematicsError(
            f"grid cannot resolve data of width {sigma:g}: sigma*kmax = {sigma * grid.kmax:.2f} < 5"
        )
    return sigma


def _gaussian_center(grid: SpectralGrid, sigma: float) -> np.ndarray:
    x, y, z = grid.mesh()
    c = grid.length / 2.0
    r2 = (x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2
    return np.exp(-r2 / (2.0 * sigma**2))


@dataclass(frozen=True)
class InitialData:
    """Displacement/velocity pair defining a primitive state."""

    psi_tilde: np.ndarray  # spectral (3, ...)
    v: np.ndarray  # physical (3, ...)
    mode: str
    amplitude: float
    support_radius: float


def make_initial_data(
    grid: SpectralGrid,
    mode: str = "rank_one_shear",
    amplitude: float = 1e-2,
    support_radius: float | None = None,
    velocity_amplitude: float | None = None,
    seed: int = 0,
) -> InitialData:
    """Constraint-respecting localized initial data.

    rank_one_shear: psi_tilde = amplitude*sigma*p(x1) e2, velocity along e2;
    the gradient is trace-free rank-one, so rho = 1 exactly and
    psi = psi_tilde.
    radial_potential: psi_tilde = grad(eta), v = grad(chi) for centered
    radial profiles.
    random_smooth: seeded band-limited random fields under a localizing
    envelope (residuals limited by the envelope's spectral tail).

    Profiles are Gaussians whose width balances the physical tail at the
    half-box against the spectral tail at the grid Nyquist; hard compact
    bumps are not resolvable at these grid sizes.
    """
    sigma = _data_width(grid, support_radius)
    radius = _SUPPORT_DECADES * sigma
    vamp = velocity_amplitude if velocity_amplitude is not None else amplitude

    if mode == "rank_one_shear":
        x = grid.x1d - grid.length / 2.0
        prof1d = np.exp(-(x**2) / (2.0 * sigma**2))
        prof = np.broadcast_to(prof1d[:, None, None], grid.phys_shape)
        psit_p = np.zeros((3,) + grid.phys_shape)
        psit_p[1] = amplitude * sigma * prof
        v = np.zeros((3,) + grid.phys_shape)
        v[1] = vamp * prof
        psit = grid.to_spectral(psit_p)
    elif mode == "radial_potential":
        shape = _gaussian_center(grid, sigma)
        psit = grad_spec(grid, grid.to_spectral(amplitude * sigma * shape))
        v = grid.to_physical(grad_spec(grid, grid.to_spectral(vamp * sigma * shape)))
    elif mode == "random_smooth":
        rng = np.random.default_rng(seed)
        env = _gaussian_center(grid, sigma)
        k0 = grid.kmax / 4.0
        shape = (3,) + grid.phys_shape

        def band_limited():
            raw = grid.to_spectral(rng.standard_normal(shape))
            raw *= np.exp(-grid.k2 / k0**2)
            field = grid.to_physical(raw)
            field *= env
            scale = np.sqrt(np.sum(field**2, axis=0)).max()
            return field / max(scale, 1e-300)

        psit_p = amplitude * band_limited()
        v = vamp * band_limited()
        psit = grid.to_spectral(psit_p)
    else:
        raise KinematicsError(f"unknown data mode {mode!r}")
    return InitialData(psi_tilde=psit, v=v, mode=mode, amplitude=amplitude, support_radius=radius)
