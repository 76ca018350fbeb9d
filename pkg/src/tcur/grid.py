"""Uniform periodic space-time grids and the field calculus built on them.

The computational domain is the slab (0,1) x T^d, with T^d the unit torus and
d in {1, 2}. Space is split into n cells per axis with samples at cell centers
x_i = (i + 1/2) h, h = 1/n. Time carries n_t slices t_k = k dt, dt = 1/n_t,
so the sample times cover [0, 1 - dt]. The time axis is not periodic: time
stencils are one-sided at the ends while every spatial operator wraps around.

Quadrature is the midpoint rule (weight h^d per cell and dt per slice), which
integrates cell-center samples of smooth periodic functions with spectral
accuracy in space. Spatial derivatives default to the Fourier multiplier
operator; a second-order centered difference is selectable for robustness
studies. Both are exact on constants and antisymmetric for the discrete inner
product.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

SPECTRAL = "spectral"
CENTRAL = "central"
_METHODS = (SPECTRAL, CENTRAL)


class TimeClampWarning(UserWarning):
    """Raised when an interpolation query lies outside the sampled time range."""


def _require_method(method: str) -> None:
    if method not in _METHODS:
        raise ValueError(f"unknown derivative method {method!r}, expected one of {_METHODS}")


@dataclass(frozen=True)
class PeriodicGrid:
    """Discretization of (0,1) x T^d.

    d    spatial dimension (1 or 2)
    n    cells per spatial axis; must be a power of two with n >= 8
    n_t  time slices on [0,1); n_t >= 8
    """

    d: int
    n: int
    n_t: int

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"spatial dimension must be 1 or 2, got {self.d}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two with n >= 8, got {self.n}")
        if self.n_t < 8:
            raise ValueError(f"n_t must be at least 8, got {self.n_t}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def dt(self) -> float:
        return 1.0 / self.n_t

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_t,) + self.spatial_shape

    @property
    def num_spatial(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def times(self) -> np.ndarray:
        return np.arange(self.n_t) * self.dt

    def axis_centers(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return (np.arange(self.n) + 0.5) * self.h

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays of shape ``spatial_shape``, one per axis."""
        axes = [self.axis_centers() for _ in range(self.d)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def nodes(self) -> np.ndarray:
        """All cell centers as a flat (n^d, d) array, C-ordered."""
        return np.stack([m.ravel() for m in self.meshes()], axis=-1)


@dataclass(frozen=True)
class ScalarField:
    """Time-indexed scalar samples at cell centers; immutable after construction."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite samples")
        if v is not self.values or v.flags.writeable:
            v = v.copy()
            v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn) -> "ScalarField":
        """Sample ``fn(t, x1[, x2])`` with broadcasting over the full lattice."""
        t = grid.times().reshape((grid.n_t,) + (1,) * grid.d)
        meshes = [m[np.newaxis] for m in grid.meshes()]
        out = np.broadcast_to(fn(t, *meshes), grid.shape).astype(np.float64)
        return cls(grid, out.copy())

    @classmethod
    def from_spatial(cls, grid: PeriodicGrid, spatial) -> "ScalarField":
        """Tile a spatial array (or spatial function of the meshes) over all slices."""
        if callable(spatial):
            spatial = spatial(*grid.meshes())
        arr = np.asarray(spatial, dtype=np.float64)
        if arr.shape != grid.spatial_shape:
            raise ValueError(f"spatial shape {arr.shape} does not match {grid.spatial_shape}")
        return cls(grid, np.broadcast_to(arr, grid.shape).copy())

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def _check_same_grid(self, other: "ScalarField") -> None:
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self._check_same_grid(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self._check_same_grid(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self._check_same_grid(other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return self.with_values(-self.values)


@dataclass(frozen=True)
class VectorField:
    """d scalar components sharing one grid."""

    components: tuple[ScalarField, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if not comps:
            raise ValueError("vector field needs at least one component")
        grid = comps[0].grid
        if len(comps) != grid.d:
            raise ValueError(f"expected {grid.d} components, got {len(comps)}")
        for c in comps[1:]:
            if c.grid != grid:
                raise ValueError("vector components live on different grids")
        object.__setattr__(self, "components", comps)

    @property
    def grid(self) -> PeriodicGrid:
        return self.components[0].grid

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "VectorField":
        return cls(tuple(ScalarField.zeros(grid) for _ in range(grid.d)))

    @classmethod
    def constant(cls, grid: PeriodicGrid, values) -> "VectorField":
        vals = np.broadcast_to(np.asarray(values, dtype=np.float64), (grid.d,))
        return cls(tuple(ScalarField.constant(grid, v) for v in vals))

    @classmethod
    def from_functions(cls, grid: PeriodicGrid, fns) -> "VectorField":
        return cls(tuple(ScalarField.from_function(grid, fn) for fn in fns))

    @classmethod
    def from_spatial(cls, grid: PeriodicGrid, arrays) -> "VectorField":
        return cls(tuple(ScalarField.from_spatial(grid, a) for a in arrays))

    def __getitem__(self, i: int) -> ScalarField:
        return self.components[i]

    def __len__(self) -> int:
        return len(self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(tuple(a - b for a, b in zip(self.components, other.components)))

    def __mul__(self, other) -> "VectorField":
        return VectorField(tuple(c * other for c in self.components))

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(c.values))) for c in self.components)


def is_time_independent(u: VectorField | ScalarField) -> bool:
    fields = u.components if isinstance(u, VectorField) else (u,)
    return all(np.all(f.values == f.values[0]) for f in fields)


@dataclass(frozen=True)
class NormExponents:
    """Conjugate exponent pair: p for the velocity gradient, q for the density."""

    p: float
    q: float

    def __post_init__(self) -> None:
        p, q = float(self.p), float(self.q)
        if p < 1 or q < 1:
            raise ValueError("exponents must lie in [1, inf]")
        inv = (0.0 if math.isinf(p) else 1.0 / p) + (0.0 if math.isinf(q) else 1.0 / q)
        if abs(inv - 1.0) > 1e-12:
            raise ValueError(f"exponents are not conjugate: 1/{p} + 1/{q} != 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


# ---------------------------------------------------------------------------
# quadrature and norms
# ---------------------------------------------------------------------------


def space_time_integral(f: ScalarField) -> float:
    """Midpoint-rule integral over the whole slab."""
    g = f.grid
    return float(f.values.sum()) * g.dt * g.cell_volume


def slice_integrals(f: ScalarField) -> np.ndarray:
    """Midpoint-rule spatial integral of every time slice."""
    g = f.grid
    axes = tuple(range(1, g.d + 1))
    return f.values.sum(axis=axes) * g.cell_volume


def inner(f: ScalarField, g: ScalarField) -> float:
    """Space-time L^2 pairing of two fields."""
    return space_time_integral(f * g)


def lp_norm(f: ScalarField, p: float, mode: str = "space-time"):
    """L^p norm by midpoint quadrature.

    mode="space-time" integrates over the slab and returns a float;
    mode="per-slice" returns one spatial-norm value per time index. The
    L^inf(0,1; L^q) norms used downstream are the max of the per-slice values.
    """
    p = float(p)
    if not (p >= 1.0):
        raise ValueError(f"exponent must satisfy p >= 1, got {p}")
    if mode not in ("space-time", "per-slice"):
        raise ValueError(f"unknown mode {mode!r}")
    g = f.grid
    a = np.abs(f.values)
    spatial_axes = tuple(range(1, g.d + 1))
    if math.isinf(p):
        return float(a.max()) if mode == "space-time" else a.max(axis=spatial_axes)
    if mode == "per-slice":
        return ((a**p).sum(axis=spatial_axes) * g.cell_volume) ** (1.0 / p)
    return float(((a**p).sum() * g.dt * g.cell_volume) ** (1.0 / p))


def linf_lq_norm(f: ScalarField, q: float) -> float:
    """sup over time of the spatial L^q norm."""
    per_slice = lp_norm(f, q, mode="per-slice")
    return float(np.max(per_slice))


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def _spectral_axis_derivative(values: np.ndarray, axis: int, n: int) -> np.ndarray:
    fh = np.fft.rfft(values, axis=axis)
    k = np.arange(fh.shape[axis])
    if n % 2 == 0:
        k = k.copy()
        k[-1] = 0  # zero the Nyquist mode to keep the operator antisymmetric
    shape = [1] * values.ndim
    shape[axis] = fh.shape[axis]
    mult = (2j * np.pi) * k.reshape(shape)
    return np.fft.irfft(fh * mult, n=n, axis=axis)


def _central_axis_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)


def derivative(f: ScalarField, axis: int, method: str = SPECTRAL) -> ScalarField:
    """Periodic spatial derivative along one axis."""
    _require_method(method)
    g = f.grid
    if not 0 <= axis < g.d:
        raise ValueError(f"axis {axis} out of range for d={g.d}")
    arr_axis = axis + 1  # axis 0 is time
    if method == SPECTRAL:
        out = _spectral_axis_derivative(f.values, arr_axis, g.n)
    else:
        out = _central_axis_derivative(f.values, arr_axis, g.h)
    return f.with_values(out)


def gradient(f: ScalarField, method: str = SPECTRAL) -> VectorField:
    return VectorField(tuple(derivative(f, j, method) for j in range(f.grid.d)))


def divergence(v: VectorField, method: str = SPECTRAL) -> ScalarField:
    """Sum of the component derivatives along their own axes."""
    out = derivative(v[0], 0, method)
    for j in range(1, v.grid.d):
        out = out + derivative(v[j], j, method)
    return out


def time_derivative(f: ScalarField) -> ScalarField:
    """Second-order time derivative: central inside, one-sided at t=0 and t=1-dt."""
    g = f.grid
    if g.n_t < 3:
        raise ValueError("time derivative needs at least 3 slices")
    v = f.values
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * g.dt)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * g.dt)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * g.dt)
    return f.with_values(out)


def cumulative_time_integral(f: ScalarField) -> ScalarField:
    """Trapezoidal cumulative integral from t=0; the first slice is zero."""
    g = f.grid
    v = f.values
    out = np.zeros_like(v)
    np.cumsum((v[:-1] + v[1:]) * (0.5 * g.dt), axis=0, out=out[1:])
    return f.with_values(out)


# ---------------------------------------------------------------------------
# interpolation (cubic in space, linear in time)
# ---------------------------------------------------------------------------


def _catmull_rom_weights(frac: np.ndarray) -> np.ndarray:
    """Weights of the four-point cubic convolution kernel, shape (m, 4)."""
    f1 = frac
    f2 = f1 * f1
    f3 = f2 * f1
    w = np.empty(frac.shape + (4,))
    w[..., 0] = -0.5 * f3 + f2 - 0.5 * f1
    w[..., 1] = 1.5 * f3 - 2.5 * f2 + 1.0
    w[..., 2] = -1.5 * f3 + 2.0 * f2 + 0.5 * f1
    w[..., 3] = 0.5 * f3 - 0.5 * f2
    return w


_STENCIL = np.arange(-1, 3)


def spatial_interpolate(slice_values: np.ndarray, points: np.ndarray, h: float) -> np.ndarray:
    """Periodic Catmull-Rom interpolation of one spatial slice.

    points has shape (m, d); coordinates may lie anywhere in R^d (wrapped
    internally), matching the unwrapped positions produced by flow maps.
    """
    pts = np.asarray(points, dtype=np.float64)
    d = slice_values.ndim
    n = slice_values.shape[0]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"points must have shape (m, {d})")
    s = pts / h - 0.5
    base = np.floor(s).astype(np.int64)
    frac = s - base
    if d == 1:
        idx = (base[:, 0:1] + _STENCIL) % n
        w = _catmull_rom_weights(frac[:, 0])
        return np.einsum("mk,mk->m", slice_values[idx], w)
    ix = (base[:, 0:1] + _STENCIL) % n
    iy = (base[:, 1:2] + _STENCIL) % n
    wx = _catmull_rom_weights(frac[:, 0])
    wy = _catmull_rom_weights(frac[:, 1])
    vals = slice_values[ix[:, :, None], iy[:, None, :]]
    return np.einsum("mab,ma,mb->m", vals, wx, wy)


def _time_blend(f: ScalarField, t: float) -> tuple[np.ndarray, bool]:
    """Linear-in-time blend of neighbouring slices; flags out-of-range queries."""
    g = f.grid
    t_max = (g.n_t - 1) * g.dt
    clamped = t < -1e-14 or t > t_max + 1e-14
    tc = min(max(float(t), 0.0), t_max)
    pos = tc / g.dt
    k = min(int(math.floor(pos)), g.n_t - 1)
    theta = pos - k
    if k >= g.n_t - 1 or theta <= 0.0:
        return f.values[k], clamped
    return (1.0 - theta) * f.values[k] + theta * f.values[k + 1], clamped


def sample_at(f: ScalarField, t: float, points: np.ndarray) -> np.ndarray:
    """Interpolate ``f`` at one time and a batch of spatial points."""
    blended, clamped = _time_blend(f, t)
    if clamped:
        warnings.warn(f"time {t} outside [0, 1-dt]; clamped", TimeClampWarning, stacklevel=2)
    return spatial_interpolate(blended, points, f.grid.h)


def sample_vector_at(u: VectorField, t: float, points: np.ndarray) -> np.ndarray:
    return np.stack([sample_at(c, t, points) for c in u.components], axis=-1)


def interpolate(f: ScalarField, t: float, x) -> float | np.ndarray:
    """Point evaluation of a field: periodic cubic in space, linear in time.

    ``x`` is a point in [0,1)^d or an (m, d) batch. Queries at grid nodes
    reproduce the stored samples exactly; times outside [0, 1-dt] are clamped
    and flagged with a TimeClampWarning.
    """
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim <= 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != f.grid.d:
        raise ValueError(f"point dimension {pts.shape[1]} does not match d={f.grid.d}")
    out = sample_at(f, t, pts)
    return float(out[0]) if single else out


def spatial_interpolate_array(spatial_values: np.ndarray, points: np.ndarray, h: float) -> np.ndarray:
    """Interpolate a bare spatial array (no time axis) at the given points."""
    return spatial_interpolate(spatial_values, points, h)


def spectral_point_values(slice_values: np.ndarray, points: np.ndarray, h: float) -> np.ndarray:
    """Evaluate the trigonometric interpolant of one spatial slice at points.

    Spectrally accurate for smooth periodic data and exact at the nodes; used
    for diagnostics where the cubic interpolant's O(h^3) error would mask the
    quantity being measured. Cost grows like points x modes, so keep batches
    moderate.
    """
    pts = np.asarray(points, dtype=np.float64)
    d = slice_values.ndim
    n = slice_values.shape[0]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"points must have shape (m, {d})")
    shifted = pts - 0.5 * h  # samples sit at cell centers
    if d == 1:
        fhat = np.fft.rfft(slice_values) / n
        k = np.arange(fhat.shape[0])
        phases = np.exp(2j * np.pi * np.outer(shifted[:, 0], k))
        weights = np.full(fhat.shape[0], 2.0)
        weights[0] = 1.0
        if n % 2 == 0:
            weights[-1] = 1.0
        return (phases @ (weights * fhat)).real
    fhat = np.fft.fft2(slice_values) / n**2
    k = np.fft.fftfreq(n, d=1.0 / n)
    e1 = np.exp(2j * np.pi * np.outer(shifted[:, 0], k))
    e2 = np.exp(2j * np.pi * np.outer(shifted[:, 1], k))
    return np.einsum("pk,kl,pl->p", e1, fhat, e2).real
