"""Space-only mollification at scale delta.

A kernel is a smooth nonnegative profile supported in the unit ball, rescaled
to delta and sampled on the periodic displacement lattice of the grid (the
lattice of cell-to-cell offsets, which is symmetric about 0, so an even
profile yields exactly even discrete weights). The sampled weights are
renormalized to unit discrete integral, which makes the convolution preserve
means exactly and keeps the discrete L^q contraction sharp.

Mollification acts slice by slice in time and is computed as a circular
convolution through the FFT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import currents
from .grid import PeriodicGrid, ScalarField, VectorField


def bump_profile(z: np.ndarray) -> np.ndarray:
    """The standard even bump exp(-1/(1-|z|^2)) on the unit ball, 0 outside."""
    z = np.asarray(z, dtype=np.float64)
    r2 = np.sum(z * z, axis=-1)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def bump_profile_gradient(z: np.ndarray) -> np.ndarray:
    """Analytic gradient of the bump profile, shape (..., d)."""
    z = np.asarray(z, dtype=np.float64)
    r2 = np.sum(z * z, axis=-1)
    inside = r2 < 1.0
    fac = np.zeros_like(r2)
    fac[inside] = np.exp(-1.0 / (1.0 - r2[inside])) * (-2.0 / (1.0 - r2[inside]) ** 2)
    return fac[..., None] * z


PROFILES = {"bump": bump_profile}


def displacement_lattice(grid: PeriodicGrid) -> np.ndarray:
    """Signed periodic offsets of every lattice point from 0, shape (*spatial, d)."""
    idx = np.arange(grid.n)
    centered = ((idx + grid.n // 2) % grid.n - grid.n // 2) * grid.h
    meshes = np.meshgrid(*([centered] * grid.d), indexing="ij")
    return np.stack(meshes, axis=-1)


@dataclass(frozen=True)
class MollifierKernel:
    """Discrete mollifier weights on a grid's displacement lattice."""

    grid: PeriodicGrid
    delta: float
    weights: np.ndarray  # spatial shape; h^d * sum(weights) == 1
    profile_name: str = "bump"
    even: bool = True

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != self.grid.spatial_shape:
            raise ValueError("weights do not match the grid")
        if w is not self.weights or w.flags.writeable:
            w = w.copy()
            w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def moment(self, order: int):
        return kernel_moment(self, order)


def _is_even_exact(w: np.ndarray) -> bool:
    mirrored = w
    for ax in range(w.ndim):
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    return bool(np.array_equal(w, mirrored))


def kernel_from_profile(
    grid: PeriodicGrid,
    delta: float,
    profile,
    name: str = "custom",
    require_even: bool = True,
) -> MollifierKernel:
    """Sample ``delta^-d profile(x/delta)`` on the displacement lattice and normalize.

    ``profile`` maps offset vectors of shape (..., d) to values; it must be
    supported in the unit ball. Scales with delta >= 1/2 would self-overlap on
    the torus and are rejected.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError(f"mollification scale must lie in (0, 1/2), got {delta}")
    lattice = displacement_lattice(grid)
    raw = np.asarray(profile(lattice / delta), dtype=np.float64) / delta**grid.d
    if np.any(raw < 0.0):
        raise ValueError("profile must be nonnegative")
    total = raw.sum() * grid.cell_volume
    if total <= 0.0:
        raise ValueError("profile has no support on the lattice; delta too small")
    weights = raw / total
    even = _is_even_exact(weights)
    if require_even and not even:
        raise ValueError("profile samples are not even on the lattice")
    return MollifierKernel(grid, float(delta), weights, name, even)


def bump_kernel(grid: PeriodicGrid, delta: float) -> MollifierKernel:
    return kernel_from_profile(grid, delta, bump_profile, name="bump")


def kernel_from_csv(grid: PeriodicGrid, delta: float, path, name: str = "tabulated") -> MollifierKernel:
    """Radial profile tabulated as CSV rows (radius, value); linear in radius."""
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    radii, vals = table[:, 0], table[:, 1]
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    if radii[-1] > 1.0 + 1e-12:
        raise ValueError("tabulated support exceeds the unit ball")

    def profile(z):
        r = np.sqrt(np.sum(np.asarray(z) ** 2, axis=-1))
        return np.interp(r, radii, vals, left=vals[0], right=0.0)

    return kernel_from_profile(grid, delta, profile, name=name)


def kernel_moment(k: MollifierKernel, order: int):
    """Discrete moments with periodic-aware coordinates centered at 0.

    Order 0 returns the total discrete mass (1 after normalization); order 1
    returns the vector of first moments, which vanishes exactly for even
    kernels.
    """
    if order == 0:
        return float(k.weights.sum() * k.grid.cell_volume)
    if order == 1:
        lattice = displacement_lattice(k.grid)
        return np.tensordot(k.weights, lattice, axes=(tuple(range(k.grid.d)), tuple(range(k.grid.d)))) * k.grid.cell_volume
    raise ValueError(f"moment order must be 0 or 1, got {order}")


def _check_resolved(f_grid: PeriodicGrid, k: MollifierKernel) -> None:
    if k.grid.d != f_grid.d or k.grid.n != f_grid.n:
        raise ValueError("kernel was sampled on a different spatial lattice")
    if k.delta < 2.0 * f_grid.h:
        raise ValueError(f"kernel under-resolved: delta={k.delta} < 2h={2.0 * f_grid.h}")


def mollify(f: ScalarField, k: MollifierKernel) -> ScalarField:
    """Circular convolution with the kernel, applied slice-wise in time."""
    _check_resolved(f.grid, k)
    g = f.grid
    spatial_axes = tuple(range(1, g.d + 1))
    what = np.fft.rfftn(k.weights * g.cell_volume, s=g.spatial_shape, axes=tuple(range(g.d)))
    fhat = np.fft.rfftn(f.values, s=g.spatial_shape, axes=spatial_axes)
    out = np.fft.irfftn(fhat * what[np.newaxis], s=g.spatial_shape, axes=spatial_axes)
    return f.with_values(out)


def mollify_vector(u: VectorField, k: MollifierKernel) -> VectorField:
    return VectorField(tuple(mollify(c, k) for c in u.components))


def regularized_current(rho: ScalarField, u: VectorField, k: MollifierKernel) -> "currents.Current1Diffuse":
    """Current with time coefficient rho_delta and space coefficients rho_delta u_delta^i."""
    if u.grid != rho.grid:
        raise ValueError("velocity and density live on different grids")
    rho_d = mollify(rho, k)
    u_d = mollify_vector(u, k)
    return currents.Current1Diffuse(
        f_t=rho_d, f_vec=VectorField(tuple(rho_d * c for c in u_d.components))
    )
