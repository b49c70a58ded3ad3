"""Periodic-box spectral infrastructure.

Grids, transforms, Fourier multipliers, low/high frequency cutoffs,
projections and norms.  All fields live on a cubic torus of side ``length``
sampled ``n`` times per axis; real fields are carried in the half-complex
(rfft) layout in spectral form.

Conventions:
    scalar  physical (n, n, n)        spectral (n, n, n//2+1)
    vector  physical (3, n, n, n)     spectral (3, n, n, n//2+1)
    tensor  physical (3, 3, n, n, n)  spectral (3, 3, n, n, n//2+1)

The tensor entry [j, k] stores d_k v_j for gradients, and the row divergence
(div T)_j = sum_k d_k T[j, k] follows that convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

_WORKERS = 1


def set_fft_workers(n: int):
    """Set the worker count used by the FFT backend (1 = deterministic serial)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def get_fft_workers() -> int:
    return _WORKERS


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralGrid:
    """Cubic periodic grid: n samples per axis on a box of side length L.

    Wavenumbers are xi = (2*pi/L) * m for integer triples m with components
    in [-n/2, n/2).
    """

    n: int
    length: float
    dealias: bool = True

    def __post_init__(self):
        if self.n % 2 != 0 or self.n < 8:
            raise GridError(f"n must be even and >= 8, got {self.n}")
        if not self.length > 0:
            raise GridError(f"length must be positive, got {self.length}")

    # -- lattice geometry -------------------------------------------------

    @cached_property
    def x1d(self) -> np.ndarray:
        return np.arange(self.n) * (self.length / self.n)

    def mesh(self):
        """Physical coordinate arrays X, Y, Z of shape (n, n, n)."""
        x = self.x1d
        return np.meshgrid(x, x, x, indexing="ij")

    @cached_property
    def modes1d(self) -> np.ndarray:
        """Integer mode numbers along a full axis, fftfreq ordering."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)

    @cached_property
    def k1d(self) -> np.ndarray:
        return (2.0 * np.pi / self.length) * self.modes1d

    @cached_property
    def k1d_half(self) -> np.ndarray:
        return (2.0 * np.pi / self.length) * np.arange(self.n // 2 + 1)

    @cached_property
    def kvec(self):
        """Broadcastable (KX, KY, KZ) on the half-complex layout."""
        kx = self.k1d[:, None, None]
        ky = self.k1d[None, :, None]
        kz = self.k1d_half[None, None, :]
        return kx, ky, kz

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.kvec
        return kx**2 + ky**2 + kz**2

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        """1/|xi|^2 with the zero mode mapped to 0."""
        out = np.zeros_like(self.k2)
        np.divide(1.0, self.k2, out=out, where=self.k2 > 0)
        return out

    @property
    def kmax(self) -> float:
        return (2.0 * np.pi / self.length) * (self.n // 2)

    @property
    def spec_shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def phys_shape(self):
        return (self.n, self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return (self.length / self.n) ** 3

    @property
    def volume(self) -> float:
        return self.length**3

    @cached_property
    def parseval_weight(self) -> np.ndarray:
        """Multiplicity of each half-complex entry in the full spectrum."""
        w = np.full(self.spec_shape, 2.0)
        w[:, :, 0] = 1.0
        if self.n % 2 == 0:
            w[:, :, -1] = 1.0
        return w

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule mask on the half-complex layout."""
        cut = self.n // 3
        mx = np.abs(self.modes1d)[:, None, None] <= cut
        my = np.abs(self.modes1d)[None, :, None] <= cut
        mz = np.arange(self.n // 2 + 1)[None, None, :] <= cut
        return mx & my & mz

    # -- transforms --------------------------------------------------------

    def to_spectral(self, phys: np.ndarray) -> np.ndarray:
        return scipy.fft.rfftn(phys, axes=(-3, -2, -1), workers=_WORKERS)

    def to_physical(self, spec: np.ndarray) -> np.ndarray:
        return scipy.fft.irfftn(spec, s=self.phys_shape, axes=(-3, -2, -1), workers=_WORKERS)


def make_grid(n: int, length: float, dealias: bool = True) -> SpectralGrid:
    """Validate and build a SpectralGrid."""
    return SpectralGrid(n=n, length=float(length), dealias=dealias)


# ---------------------------------------------------------------------------
# Field container
# ---------------------------------------------------------------------------

_RANK_FROM_COMPONENTS = {(): "scalar", (3,): "vector", (3, 3): "tensor"}


@dataclass(frozen=True)
class Field:
    """A scalar, vector or tensor field on a grid, physical or spectral.

    Instances are treated as immutable values; operations return new Fields.
    """

    grid: SpectralGrid
    data: np.ndarray
    spectral: bool

    def __post_init__(self):
        tail = self.data.shape[-3:]
        expect = self.grid.spec_shape if self.spectral else self.grid.phys_shape
        if tail != expect:
            raise ValueError(f"field shape {self.data.shape} does not match grid {expect}")
        if self.data.shape[:-3] not in _RANK_FROM_COMPONENTS:
            raise ValueError(f"unsupported component shape {self.data.shape[:-3]}")
        self.data.flags.writeable = False

    @property
    def rank(self) -> str:
        return _RANK_FROM_COMPONENTS[self.data.shape[:-3]]

    @property
    def ncomp(self) -> int:
        return int(np.prod(self.data.shape[:-3], dtype=int))

    def in_spectral(self) -> "Field":
        if self.spectral:
            return self
        return Field(self.grid, self.grid.to_spectral(self.data), True)

    def in_physical(self) -> "Field":
        if not self.spectral:
            return self
        return Field(self.grid, self.grid.to_physical(self.data), False)

    def __add__(self, other: "Field") -> "Field":
        a, b = _align(self, other)
        return Field(a.grid, a.data + b.data, a.spectral)

    def __sub__(self, other: "Field") -> "Field":
        a, b = _align(self, other)
        return Field(a.grid, a.data - b.data, a.spectral)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.data * scalar, self.spectral)

    __rmul__ = __mul__


def _align(a: Field, b: Field):
    if a.grid is not b.grid and a.grid != b.grid:
        raise ValueError("fields live on different grids")
    if a.spectral != b.spectral:
        b = b.in_spectral() if a.spectral else b.in_physical()
    return a, b


def field_from_physical(grid: SpectralGrid, data: np.ndarray) -> Field:
    return Field(grid, np.asarray(data, dtype=float).copy(), False)


def field_from_spectral(grid: SpectralGrid, data: np.ndarray) -> Field:
    return Field(grid, np.asarray(data, dtype=complex).copy(), True)


# ---------------------------------------------------------------------------
# Multipliers and differential operators (array level)
# ---------------------------------------------------------------------------


def apply_multiplier(f: Field, symbol, zero_mode=None) -> Field:
    """Multiply the spectrum of f pointwise by symbol(kx, ky, kz).

    The symbol may return an array broadcastable against the spectral layout
    (componentwise action) or one with leading shape (m, m) matching the
    component count of f (pointwise matrix action).  A symbol that is not
    finite at some lattice point is rejected unless the offending point is
    the zero mode and ``zero_mode`` supplies a replacement value.
    """
    g = f.grid
    spec = f.in_spectral().data
    kx, ky, kz = g.kvec
    with np.errstate(divide="ignore", invalid="ignore"):
        sym = np.asarray(symbol(kx, ky, kz))
    if zero_mode is not None:
        sym = sym.copy() if sym.shape[-3:] == g.spec_shape else np.broadcast_to(sym, sym.shape[:-3] + g.spec_shape).copy()
        sym[..., 0, 0, 0] = zero_mode
    if not np.all(np.isfinite(sym)):
        raise ValueError("symbol is not finite at some lattice point (supply zero_mode?)")
    m = f.ncomp
    if sym.ndim >= 5 and sym.shape[:2] == (m, m) and f.rank == "vector":
        out = np.einsum("ab...,b...->a...", sym, spec)
    elif sym.ndim >= 5 and f.rank == "tensor" and sym.shape[:2] == (3, 3):
        out = np.einsum("ab...,bk...->ak...", sym, spec)
    else:
        out = sym * spec
    return Field(g, out, True)


def grad_spec(grid: SpectralGrid, spec_scalar: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.kvec
    return np.stack([1j * kx * spec_scalar, 1j * ky * spec_scalar, 1j * kz * spec_scalar])


def div_spec(grid: SpectralGrid, spec_vector: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.kvec
    return 1j * (kx * spec_vector[0] + ky * spec_vector[1] + kz * spec_vector[2])


def grad_vector_spec(grid: SpectralGrid, spec_vector: np.ndarray) -> np.ndarray:
    """Jacobian: out[j, k] = d_k v_j."""
    kx, ky, kz = grid.kvec
    out = np.empty((3, 3) + grid.spec_shape, dtype=complex)
    for j in range(3):
        out[j, 0] = 1j * kx * spec_vector[j]
        out[j, 1] = 1j * ky * spec_vector[j]
        out[j, 2] = 1j * kz * spec_vector[j]
    return out


def div_tensor_spec(grid: SpectralGrid, spec_tensor: np.ndarray) -> np.ndarray:
    """Row divergence: out[j] = sum_k d_k T[j, k]."""
    kx, ky, kz = grid.kvec
    return 1j * (kx * spec_tensor[:, 0] + ky * spec_tensor[:, 1] + kz * spec_tensor[:, 2])


def laplacian_spec(grid: SpectralGrid, spec: np.ndarray) -> np.ndarray:
    return -grid.k2 * spec


def inverse_laplacian_spec(grid: SpectralGrid, spec: np.ndarray) -> np.ndarray:
    """(-Delta)^{-1}: multiply by 1/|xi|^2, zero mode mapped to 0."""
    return grid.inv_k2 * spec


def leray_project_spec(grid: SpectralGrid, spec_vector: np.ndarray) -> np.ndarray:
    """Solenoidal projection; the zero mode passes through unchanged."""
    kx, ky, kz = grid.kvec
    kdotv = kx * spec_vector[0] + ky * spec_vector[1] + kz * spec_vector[2]
    scale = kdotv * grid.inv_k2
    out = np.empty_like(spec_vector)
    out[0] = spec_vector[0] - kx * scale
    out[1] = spec_vector[1] - ky * scale
    out[2] = spec_vector[2] - kz * scale
    return out


def grad_invlap_div_spec(grid: SpectralGrid, spec_tensor: np.ndarray) -> np.ndarray:
    """Left action of the symbol xi xi^T/|xi|^2 on a tensor, zero mode 0."""
    kx, ky, kz = grid.kvec
    out = np.empty_like(spec_tensor)
    for col in range(3):
        s = (kx * spec_tensor[0, col] + ky * spec_tensor[1, col] + kz * spec_tensor[2, col]) * grid.inv_k2
        out[0, col] = kx * s
        out[1, col] = ky * s
        out[2, col] = kz * s
    return out


def invlap_div_transpose_spec(grid: SpectralGrid, spec_tensor: np.ndarray) -> np.ndarray:
    """(-Delta)^{-1} div of the transposed tensor: v_j = i xi_k M[k, j] / |xi|^2."""
    kx, ky, kz = grid.kvec
    out = np.empty((3,) + grid.spec_shape, dtype=complex)
    for j in range(3):
        out[j] = 1j * (kx * spec_tensor[0, j] + ky * spec_tensor[1, j] + kz * spec_tensor[2, j]) * grid.inv_k2
    return out


# Field-level wrappers ------------------------------------------------------


def gradient(f: Field) -> Field:
    return Field(f.grid, grad_spec(f.grid, f.in_spectral().data), True)


def divergence(f: Field) -> Field:
    data = f.in_spectral().data
    if f.rank == "vector":
        return Field(f.grid, div_spec(f.grid, data), True)
    if f.rank == "tensor":
        return Field(f.grid, div_tensor_spec(f.grid, data), True)
    raise ValueError("divergence needs a vector or tensor field")


def jacobian(f: Field) -> Field:
    return Field(f.grid, grad_vector_spec(f.grid, f.in_spectral().data), True)


def inverse_laplacian(f: Field) -> Field:
    return Field(f.grid, inverse_laplacian_spec(f.grid, f.in_spectral().data), True)


def leray_project(f: Field) -> Field:
    if f.rank != "vector":
        raise ValueError("Leray projection acts on vector fields")
    return Field(f.grid, leray_project_spec(f.grid, f.in_spectral().data), True)


def grad_invlap_div(f: Field) -> Field:
    if f.rank != "tensor":
        raise ValueError("grad_invlap_div acts on tensor fields")
    return Field(f.grid, grad_invlap_div_spec(f.grid, f.in_spectral().data), True)


# ---------------------------------------------------------------------------
# Frequency splitting
# ---------------------------------------------------------------------------


def _bump_transition(s: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - s^2)) on (0, 1), glued to 1 below and 0 above."""
    out = np.ones_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si**2))
    out[s >= 1.0] = 0.0
    return out


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth radial cutoff: 1 for |xi| <= m1/2, 0 for |xi| >= m1/sqrt(2)."""

    m1: float
    profile: object = None  # callable s in [0,1] -> [1,0]; default smooth bump

    def __post_init__(self):
        if not self.m1 > 0:
            raise ValueError("m1 must be positive")

    def low_pass(self, kmag: np.ndarray) -> np.ndarray:
        lo = 0.5 * self.m1
        hi = self.m1 / np.sqrt(2.0)
        s = (kmag - lo) / (hi - lo)
        prof = self.profile if self.profile is not None else _bump_transition
        return prof(np.clip(s, 0.0, 1.0))


def frequency_split(f: Field, cutoff: CutoffSpec):
    """Split into (low, high) parts; parts sum to f exactly."""
    g = f.grid
    if cutoff.m1 <= 2.0 * (2.0 * np.pi / g.length):
        raise GridError(
            f"cutoff scale m1={cutoff.m1:g} is unresolvable: need m1 > 4*pi/L = {4 * np.pi / g.length:g}"
        )
    spec = f.in_spectral().data
    phat1 = cutoff.low_pass(g.kmag)
    low = phat1 * spec
    return Field(g, low, True), Field(g, spec - low, True)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def _pointwise_magnitude(phys: np.ndarray) -> np.ndarray:
    if phys.ndim == 3:
        return np.abs(phys)
    comps = phys.reshape(-1, *phys.shape[-3:])
    return np.sqrt(np.sum(comps**2, axis=0))


def lp_norm(f: Field, p: float) -> float:
    """L^p norm by uniform-grid quadrature; p = inf is the sample maximum.

    Multi-component fields use the pointwise Euclidean magnitude.
    """
    if not p > 1:
        raise ValueError(f"p must lie in (1, inf], got {p}")
    mag = _pointwise_magnitude(f.in_physical().data)
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * f.grid.cell_volume) ** (1.0 / p))


def sobolev_weight(grid: SpectralGrid, m: int) -> np.ndarray:
    """sum_{|alpha| <= m} |xi^alpha|^2 on the half-complex layout."""
    kx, ky, kz = grid.kvec
    w = np.zeros(grid.spec_shape)
    for ax in range(m + 1):
        for ay in range(m + 1 - ax):
            for az in range(m + 1 - ax - ay):
                w = w + (kx ** (2 * ax)) * (ky ** (2 * ay)) * (kz ** (2 * az))
    return w


def sobolev_norm(f: Field, m: int) -> float:
    """H^m norm via the spectral multiplier sum_{|alpha|<=m} |xi^alpha|^2."""
    if m < 0:
        raise ValueError("m must be >= 0")
    g = f.grid
    spec = f.in_spectral().data
    w = sobolev_weight(g, m) * g.parseval_weight
    total = float(np.sum(w * np.abs(spec) ** 2))
    return float(np.sqrt(total * g.volume)) / g.n**3


def l2_norm_spec(grid: SpectralGrid, spec: np.ndarray) -> float:
    """Plancherel L^2 norm straight from half-complex coefficients."""
    total = float(np.sum(grid.parseval_weight * np.abs(spec) ** 2))
    return float(np.sqrt(total * grid.volume)) / grid.n**3


def dealias(grid: SpectralGrid, spec: np.ndarray) -> np.ndarray:
    return spec * grid.dealias_mask


def mean_value(f: Field):
    """Zero-mode value(s) of the field (its average over the box)."""
    spec = f.in_spectral().data
    return np.real(spec[..., 0, 0, 0]) / f.grid.n**3
