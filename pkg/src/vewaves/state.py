"""The 13-component perturbation state (phi, w, Psi) on a periodic grid.

phi is the density perturbation, w the velocity, Psi the displacement
gradient; the linear constraint phi + tr(Psi) = 0 characterizes admissible
states.  Components are stored as half-complex spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Field, SpectralGrid, l2_norm_spec, lp_norm


@dataclass(frozen=True)
class StateU:
    grid: SpectralGrid
    phi: np.ndarray  # (n, n, n//2+1) complex
    w: np.ndarray  # (3, ...) complex
    Psi: np.ndarray  # (3, 3, ...) complex

    def __post_init__(self):
        s = self.grid.spec_shape
        if self.phi.shape != s or self.w.shape != (3,) + s or self.Psi.shape != (3, 3) + s:
            raise ValueError("component shapes do not match grid")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, grid: SpectralGrid) -> "StateU":
        s = grid.spec_shape
        return cls(grid, np.zeros(s, complex), np.zeros((3,) + s, complex), np.zeros((3, 3) + s, complex))

    @classmethod
    def from_displacement_velocity(cls, grid: SpectralGrid, psi_spec: np.ndarray, w_spec: np.ndarray) -> "StateU":
        """Constraint-satisfying state from a displacement and a velocity.

        phi = -div(psi) and Psi = grad(psi), so phi + tr(Psi) = 0 identically.
        """
        kx, ky, kz = grid.kvec
        phi = -1j * (kx * psi_spec[0] + ky * psi_spec[1] + kz * psi_spec[2])
        Psi = np.empty((3, 3) + grid.spec_shape, dtype=complex)
        for j in range(3):
            Psi[j, 0] = 1j * kx * psi_spec[j]
            Psi[j, 1] = 1j * ky * psi_spec[j]
            Psi[j, 2] = 1j * kz * psi_spec[j]
        return cls(grid, phi, w_spec.astype(complex), Psi)

    @classmethod
    def from_physical(cls, grid: SpectralGrid, phi_p: np.ndarray, w_p: np.ndarray, psi_grad_p: np.ndarray) -> "StateU":
        return cls(
            grid,
            grid.to_spectral(phi_p),
            grid.to_spectral(w_p),
            grid.to_spectral(psi_grad_p),
        )

    # -- accessors ----------------------------------------------------------

    def psi_spec(self) -> np.ndarray:
        """Displacement recovered from its gradient: psi_j = -i Psi[j,:].xi/|xi|^2."""
        g = self.grid
        kx, ky, kz = g.kvec
        out = np.empty((3,) + g.spec_shape, dtype=complex)
        for j in range(3):
            out[j] = -1j * (kx * self.Psi[j, 0] + ky * self.Psi[j, 1] + kz * self.Psi[j, 2]) * g.inv_k2
        return out

    def phi_field(self) -> Field:
        return Field(self.grid, self.phi.copy(), True)

    def w_field(self) -> Field:
        return Field(self.grid, self.w.copy(), True)

    def psi_grad_field(self) -> Field:
        return Field(self.grid, self.Psi.copy(), True)

    def physical_components(self):
        g = self.grid
        return g.to_physical(self.phi), g.to_physical(self.w), g.to_physical(self.Psi)

    # -- diagnostics ---------------------------------------------------------

    def constraint_violation(self) -> float:
        """L^2 norm of phi + tr(Psi)."""
        tr = self.Psi[0, 0] + self.Psi[1, 1] + self.Psi[2, 2]
        return l2_norm_spec(self.grid, self.phi + tr)

    def magnitude_phys(self) -> np.ndarray:
        phi_p, w_p, psi_p = self.physical_components()
        return np.sqrt(phi_p**2 + np.sum(w_p**2, axis=0) + np.sum(psi_p**2, axis=(0, 1)))

    def lp_norm(self, p: float) -> float:
        if not p > 1:
            raise ValueError(f"p must lie in (1, inf], got {p}")
        mag = self.magnitude_phys()
        if np.isinf(p):
            return float(mag.max())
        return float((np.sum(mag**p) * self.grid.cell_volume) ** (1.0 / p))

    def l2_norm(self) -> float:
        g = self.grid
        total = (
            np.sum(g.parseval_weight * np.abs(self.phi) ** 2)
            + np.sum(g.parseval_weight * np.abs(self.w) ** 2)
            + np.sum(g.parseval_weight * np.abs(self.Psi) ** 2)
        )
        return float(np.sqrt(total * g.volume)) / g.n**3

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: "StateU") -> "StateU":
        return StateU(self.grid, self.phi + other.phi, self.w + other.w, self.Psi + other.Psi)

    def __sub__(self, other: "StateU") -> "StateU":
        return StateU(self.grid, self.phi - other.phi, self.w - other.w, self.Psi - other.Psi)

    def __mul__(self, a: float) -> "StateU":
        return StateU(self.grid, a * self.phi, a * self.w, a * self.Psi)

    __rmul__ = __mul__


def lp_norm_components(grid: SpectralGrid, phys_mag: np.ndarray, p: float) -> float:
    if np.isinf(p):
        return float(phys_mag.max())
    return float((np.sum(phys_mag**p) * grid.cell_volume) ** (1.0 / p))
