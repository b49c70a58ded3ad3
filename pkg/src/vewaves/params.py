"""Physical coefficients of the viscoelastic model and the pressure law.

Admissibility: nu > 0, 2*nu + 3*nu_prime >= 0, beta > 0, gamma > 0.
beta = 0 is additionally accepted as the Navier-Stokes comparison limit;
operations that need the frequency-split scale m1 reject it.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelParams:
    """Coefficients (nu, nu_prime, beta, gamma) of the momentum equation.

    nu_tilde = nu + nu_prime is the second-viscosity combination; the
    compressible branch of the symbol is governed by nu + nu_tilde and
    beta^2 + gamma^2.
    """

    nu: float = 1.0
    nu_prime: float = 0.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if 2 * self.nu + 3 * self.nu_prime < 0:
            raise ValueError(
                f"2*nu + 3*nu_prime must be nonnegative, got {2 * self.nu + 3 * self.nu_prime}"
            )
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def nu_tilde(self) -> float:
        return self.nu + self.nu_prime

    @property
    def shear_speed(self) -> float:
        """Propagation speed of the transverse (shear) wave branch."""
        return self.beta

    @property
    def sound_speed(self) -> float:
        """Propagation speed of the compressive wave branch."""
        return (self.beta**2 + self.gamma**2) ** 0.5

    @property
    def m1(self) -> float:
        """Low/high frequency split scale min{beta/nu, sqrt(beta^2+gamma^2)/(nu+nu_tilde)}."""
        if self.beta == 0.0:
            raise ValueError("frequency split scale m1 is undefined at beta = 0")
        return min(self.beta / self.nu, self.sound_speed / (self.nu + self.nu_tilde))

    def c1_energy(self) -> float:
        """Coupling constant for the high-frequency energy functional.

        Chosen as 0.9 * min of the dissipation budget 1/(2*(nu/beta^2 +
        nu_tilde/gamma^2 + 2/nu)) and the positivity guard beta^2*m1^2/8
        coming from the high-frequency Poincare bound.
        """
        budget = 1.0 / (2.0 * (self.nu / self.beta**2 + self.nu_tilde / self.gamma**2 + 2.0 / self.nu))
        guard = self.beta**2 * self.m1**2 / 8.0
        return 0.9 * min(budget, guard)

    def confluent_radii(self) -> tuple[float, float]:
        """Wavenumbers where the shear / compressive eigenvalue pairs coincide.

        These are 2*beta/nu and 2*sqrt(beta^2+gamma^2)/(nu+nu_tilde).  The
        closed-form kernel is stated away from half these values, but the
        discriminants vanish at the values returned here; the factor of two
        is treated as a typo upstream and the true radii are guarded.
        """
        return (
            2.0 * self.beta / self.nu,
            2.0 * self.sound_speed / (self.nu + self.nu_tilde),
        )


@dataclass(frozen=True)
class PressureModel:
    """Pressure law P(rho) = gamma^2*(rho-1) + kappa/2*(rho-1)^2.

    Only P'(1) = gamma^2 and the second derivative enter the dynamics; the
    quadratic default is the minimal model exposing the nonlinear pressure
    remainder.  Arbitrary laws can be modelled by subclassing and overriding
    p, dp and d2p consistently.
    """

    gamma: float = 1.0
    kappa: float = 1.0

    def p(self, rho):
        return self.gamma**2 * (rho - 1.0) + 0.5 * self.kappa * (rho - 1.0) ** 2

    def dp(self, rho):
        return self.gamma**2 + self.kappa * (rho - 1.0)

    def d2p(self, rho):
        import numpy as np

        return self.kappa * np.ones_like(rho)

    def q_quadratic(self, phi):
        """phi^2 * integral_0^1 P''(1 + s*phi) ds (finite for |phi| <= 1/2)."""
        return phi**2 * self.kappa

    def remainder_gradient_factor(self, phi):
        """(P'(1+phi) - gamma^2), the coefficient of grad(phi) in the
        nonlinear pressure term."""
        return self.dp(1.0 + phi) - self.gamma**2
