"""Diffuse 1- and 2-currents on the space-time slab and their calculus.

A diffuse 1-current T = f_t e_t + f_j e_j acts on one-forms by integrating the
coefficient-wise product over the slab. Its boundary splits into an interior
density -(dt f_t + div f) and a surface density -f_t(0, .) on the initial
torus. A 2-current S = F_j e_t /\ e_j has boundary with time coefficient
sum_j d_j F_j and space coefficients -dt F_j, provided every F_j vanishes on
the initial slice.

Mass uses the componentwise comass convention (each test component bounded by
one), so the mass of a diffuse current is the sum of the coefficient L^1
norms. This differs from the Euclidean comass by at most sqrt(d+1).

The flat norm inf { M(S) + M(L) : T = boundary(S) + L } is computed two ways:
as a linear program over grid-supported decompositions (with the matching
dual program and its duality gap), and as a constructive evaluation of a
caller-supplied decomposition. The discrete LP ranges over grid-supported
diffuse decompositions only, so it is reported as a one-sided upper
approximation of the continuum value; no convergence claim is attached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .grid import (
    SPECTRAL,
    PeriodicGrid,
    ScalarField,
    VectorField,
    cumulative_time_integral,
    derivative,
    divergence,
    lp_norm,
    space_time_integral,
    time_derivative,
)


class NullBoundaryError(ValueError):
    """A current required to have (numerically) null boundary does not."""

    def __init__(self, measured: float, tolerance: float):
        super().__init__(
            f"boundary mass {measured:.3e} exceeds tolerance {tolerance:.3e}"
        )
        self.measured = measured
        self.tolerance = tolerance


@dataclass(frozen=True)
class Current1Diffuse:
    """T = f_t e_t + sum_j f_j e_j with L^1 coefficient fields."""

    f_t: ScalarField
    f_vec: VectorField

    def __post_init__(self) -> None:
        if self.f_vec.grid != self.f_t.grid:
            raise ValueError("coefficients live on different grids")

    @property
    def grid(self) -> PeriodicGrid:
        return self.f_t.grid

    @classmethod
    def zero(cls, grid: PeriodicGrid) -> "Current1Diffuse":
        return cls(ScalarField.zeros(grid), VectorField.zeros(grid))

    @classmethod
    def horizontal(cls, f_t: ScalarField) -> "Current1Diffuse":
        return cls(f_t, VectorField.zeros(f_t.grid))

    def __add__(self, other: "Current1Diffuse") -> "Current1Diffuse":
        return Current1Diffuse(self.f_t + other.f_t, self.f_vec + other.f_vec)

    def __sub__(self, other: "Current1Diffuse") -> "Current1Diffuse":
        return Current1Diffuse(self.f_t - other.f_t, self.f_vec - other.f_vec)

    def __mul__(self, a: float) -> "Current1Diffuse":
        return Current1Diffuse(self.f_t * a, self.f_vec * a)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Current2Diffuse:
    """S = sum_j F_j e_t /\\ e_j."""

    F_vec: VectorField

    @property
    def grid(self) -> PeriodicGrid:
        return self.F_vec.grid

    @classmethod
    def zero(cls, grid: PeriodicGrid) -> "Current2Diffuse":
        return cls(VectorField.zeros(grid))


@dataclass(frozen=True)
class BoundaryDistribution:
    """Boundary of a 1-current: interior density plus an initial-surface density."""

    interior: ScalarField
    initial_surface: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.initial_surface, dtype=np.float64)
        if arr.shape != self.interior.grid.spatial_shape:
            raise ValueError("surface density does not match the spatial lattice")
        if not np.all(np.isfinite(arr)):
            raise ValueError("surface density contains non-finite samples")
        object.__setattr__(self, "initial_surface", arr)

    @property
    def grid(self) -> PeriodicGrid:
        return self.interior.grid


@dataclass(frozen=True)
class OneForm:
    """omega = tau dt + xi^j dx_j, sampled on the lattice."""

    tau: ScalarField
    xi_vec: VectorField

    def __post_init__(self) -> None:
        if self.xi_vec.grid != self.tau.grid:
            raise ValueError("components live on different grids")

    @property
    def grid(self) -> PeriodicGrid:
        return self.tau.grid


# ---------------------------------------------------------------------------
# pairing, boundaries, mass
# ---------------------------------------------------------------------------


def pair(T: Current1Diffuse, w: OneForm) -> float:
    """T(omega): quadrature of f_t tau + sum_j f_j xi^j over the slab."""
    if w.grid != T.grid:
        raise ValueError("current and form live on different grids")
    acc = T.f_t * w.tau
    for fj, xij in zip(T.f_vec.components, w.xi_vec.components):
        acc = acc + fj * xij
    return space_time_integral(acc)


def boundary_pair(b: BoundaryDistribution, xi: ScalarField) -> float:
    """Boundary distribution applied to a test function sampled on the lattice."""
    g = b.grid
    interior = space_time_integral(b.interior * xi)
    surface = float(np.sum(b.initial_surface * xi.values[0])) * g.cell_volume
    return interior + surface


def differential(xi: ScalarField, method: str = SPECTRAL) -> OneForm:
    """d xi = dt(xi) dt + d_j(xi) dx_j with the discrete operators."""
    grads = VectorField(tuple(derivative(xi, j, method) for j in range(xi.grid.d)))
    return OneForm(time_derivative(xi), grads)


def boundary1(T: Current1Diffuse, method: str = SPECTRAL) -> BoundaryDistribution:
    """Boundary of a 1-current on the slab with initial surface at t=0.

    interior = -(dt f_t + sum_j d_j f_j), surface = -f_t(0, .). For test
    functions vanishing near t=1 this satisfies the duality
    ``boundary_pair(boundary1(T), xi) = pair(T, differential(xi))`` up to
    discretization error (exactly when xi vanishes on the three slices at
    each end of the time axis).
    """
    interior = -(time_derivative(T.f_t) + divergence(T.f_vec, method))
    surface = -T.f_t.values[0]
    return BoundaryDistribution(interior, surface)


def boundary_mass(b: BoundaryDistribution) -> float:
    g = b.grid
    return lp_norm(b.interior, 1) + float(np.sum(np.abs(b.initial_surface))) * g.cell_volume


def boundary2(S: Current2Diffuse, method: str = SPECTRAL) -> Current1Diffuse:
    """Boundary of a 2-current: f_t = sum_j d_j F_j and f_j = -dt F_j.

    Every F_j must vanish on the initial slice, otherwise the boundary picks
    up a surface term this representation cannot hold.
    """
    for F in S.F_vec.components:
        scale = 1.0 + float(np.max(np.abs(F.values)))
        if float(np.max(np.abs(F.values[0]))) > 1e-12 * scale:
            raise ValueError("surface term: a coefficient of S is nonzero at t=0")
    f_t = ScalarField.zeros(S.grid)
    for j, F in enumerate(S.F_vec.components):
        f_t = f_t + derivative(F, j, method)
    f_vec = VectorField(tuple(-time_derivative(F) for F in S.F_vec.components))
    return Current1Diffuse(f_t, f_vec)


def mass(T: Current1Diffuse) -> float:
    """Componentwise-comass mass: sum of the coefficient L^1 norms."""
    return lp_norm(T.f_t, 1) + vertical_mass(T)


def mass2(S: Current2Diffuse) -> float:
    return float(sum(lp_norm(F, 1) for F in S.F_vec.components))


def vertical_mass(T: Current1Diffuse) -> float:
    return float(sum(lp_norm(f, 1) for f in T.f_vec.components))


def split(T: Current1Diffuse) -> tuple[Current1Diffuse, Current1Diffuse]:
    """Horizontal (f_t e_t) and vertical (sum_j f_j e_j) parts, in that order."""
    horizontal = Current1Diffuse.horizontal(T.f_t)
    vertical = Current1Diffuse(ScalarField.zeros(T.grid), T.f_vec)
    return horizontal, vertical


# ---------------------------------------------------------------------------
# primitives and the horizontal filler
# ---------------------------------------------------------------------------


def primitive_two_current(
    T: Current1Diffuse,
    boundary_tol: float | None = None,
    method: str = SPECTRAL,
) -> Current2Diffuse:
    """Primitive 2-current of a null-boundary current: F_j = -int_0^t f_j.

    Requires the measured boundary mass of T to stay below the tolerance
    (default 1e-8 * mass(T)); boundary2 of the result reproduces T up to
    discretization error, exactly for coefficients affine in time.
    """
    measured = boundary_mass(boundary1(T, method))
    tol = 1e-8 * max(mass(T), 1e-30) if boundary_tol is None else boundary_tol
    if measured > tol:
        raise NullBoundaryError(measured, tol)
    F = VectorField(tuple(-cumulative_time_integral(f) for f in T.f_vec.components))
    return Current2Diffuse(F)


def horizontal_from_boundary(g: BoundaryDistribution, surface_tol: float = 1e-12) -> Current1Diffuse:
    """Horizontal current M = -G e_t with G the cumulative time integral of g.

    The boundary of M reproduces the interior density of g, its mass never
    exceeds the L^1 norm of g (the cumulative trapezoid of |g| dominates the
    absolute cumulative trapezoid), and the spatial support of g is preserved
    column by column. The surface part of g must vanish.
    """
    scale = 1.0 + float(np.max(np.abs(g.interior.values)))
    if float(np.max(np.abs(g.initial_surface))) > surface_tol * scale:
        raise ValueError("boundary has a nonzero surface part")
    G = cumulative_time_integral(g.interior)
    return Current1Diffuse.horizontal(-G)


# ---------------------------------------------------------------------------
# flat norm: linear program and constructive bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatNormCertificate:
    value: float
    primal_value: float
    dual_value: float
    duality_gap: float
    relative_gap: float
    S: Current2Diffuse
    L: Current1Diffuse
    omega: OneForm
    n_variables: int
    n_constraints: int
    iterations: int

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "duality_gap": self.duality_gap,
            "relative_gap": self.relative_gap,
            "n_variables": self.n_variables,
            "n_constraints": self.n_constraints,
            "iterations": self.iterations,
        }


def _operator_matrix(apply_op, n: int) -> np.ndarray:
    """Materialize a linear operator on R^n by applying it to identity columns."""
    return apply_op(np.eye(n))


def _time_derivative_matrix(grid: PeriodicGrid) -> np.ndarray:
    def apply_op(eye):
        out = np.empty_like(eye)
        dt = grid.dt
        out[1:-1] = (eye[2:] - eye[:-2]) / (2.0 * dt)
        out[0] = (-3.0 * eye[0] + 4.0 * eye[1] - eye[2]) / (2.0 * dt)
        out[-1] = (3.0 * eye[-1] - 4.0 * eye[-2] + eye[-3]) / (2.0 * dt)
        return out

    eye = np.eye(grid.n_t)
    return apply_op(eye)


def _axis_derivative_matrix(grid: PeriodicGrid, method: str) -> np.ndarray:
    from .grid import _central_axis_derivative, _spectral_axis_derivative

    eye = np.eye(grid.n)
    if method == SPECTRAL:
        return _spectral_axis_derivative(eye, 0, grid.n)
    return _central_axis_derivative(eye, 0, grid.h)


def _spatial_operator(grid: PeriodicGrid, axis: int, method: str) -> sp.csr_matrix:
    """Derivative along one spatial axis on C-flattened spatial indices."""
    D = sp.csr_matrix(_axis_derivative_matrix(grid, method))
    eye = sp.identity(grid.n, format="csr")
    if grid.d == 1:
        return D
    return sp.kron(D, eye, format="csr") if axis == 0 else sp.kron(eye, D, format="csr")


def flat_norm_lp(
    T: Current1Diffuse,
    method: str = SPECTRAL,
    variable_cap: int = 8192,
) -> FlatNormCertificate:
    """Discrete flat norm of T by linear programming, with a dual certificate.

    Primal variables are the coefficients of a 2-current S (initial slice
    pinned to zero) and of a residual current L, sign-split to linearize the
    L^1 objective; the equality constraints enforce T = boundary2(S) + L
    sample by sample with the same discrete operators used everywhere else.
    The dual program (maximize T(omega) over forms with componentwise bound 1
    and unit comass of d omega) is solved separately from the transposed
    constraint matrix and the gap between the two optima is reported.
    """
    grid = T.grid
    if grid.n**grid.d * grid.n_t * grid.d > variable_cap:
        raise ValueError(
            f"grid too large for the LP: {grid.n**grid.d * grid.n_t * grid.d} > cap {variable_cap}"
        )
    n_x = grid.num_spatial
    n_samples = grid.n_t * n_x
    weight = grid.dt * grid.cell_volume

    Dt = sp.csr_matrix(_time_derivative_matrix(grid))
    selector = sp.csr_matrix(np.eye(grid.n_t)[:, 1:])  # pins F_j(0,.) = 0
    eye_x = sp.identity(n_x, format="csr")
    eye_s = sp.identity(n_samples, format="csr")

    horiz_blocks = []
    vert_blocks = []
    for j in range(grid.d):
        Dx = _spatial_operator(grid, j, method)
        horiz_blocks.append(sp.kron(selector, Dx, format="csr"))
        vert_blocks.append(-sp.kron(Dt @ selector, eye_x, format="csr"))

    n_red = (grid.n_t - 1) * n_x
    zero_red = sp.csr_matrix((n_samples, n_red))
    zero_full = sp.csr_matrix((n_samples, n_samples))

    # rows: horizontal constraint then one vertical constraint per axis
    # cols: F_1..F_d, L_t, L_1..L_d (sign-splitting applied afterwards)
    rows = []
    rows.append(horiz_blocks + [eye_s] + [zero_full] * grid.d)
    for j in range(grid.d):
        row = [vert_blocks[j] if jj == j else zero_red for jj in range(grid.d)]
        row.append(zero_full)
        row.extend(eye_s if jj == j else zero_full for jj in range(grid.d))
        rows.append(row)
    A = sp.bmat(rows, format="csr")
    A_signed = sp.hstack([A, -A], format="csc")

    b = np.concatenate(
        [T.f_t.values.ravel()] + [f.values.ravel() for f in T.f_vec.components]
    )
    n_cols = A.shape[1]
    c = np.full(2 * n_cols, weight)

    res = linprog(c, A_eq=A_signed, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"flat-norm primal LP failed: {res.message}")
    x = res.x[:n_cols] - res.x[n_cols:]
    primal_value = float(res.fun)

    # unpack the primal certificate
    F_fields = []
    offset = 0
    for _ in range(grid.d):
        reduced = x[offset : offset + n_red].reshape((grid.n_t - 1,) + grid.spatial_shape)
        full = np.concatenate([np.zeros((1,) + grid.spatial_shape), reduced], axis=0)
        F_fields.append(ScalarField(grid, full))
        offset += n_red
    L_t = ScalarField(grid, x[offset : offset + n_samples].reshape(grid.shape))
    offset += n_samples
    L_comps = []
    for _ in range(grid.d):
        L_comps.append(ScalarField(grid, x[offset : offset + n_samples].reshape(grid.shape)))
        offset += n_samples
    S = Current2Diffuse(VectorField(tuple(F_fields)))
    L = Current1Diffuse(L_t, VectorField(tuple(L_comps)))

    # dual: max b.y subject to A_signed^T y <= c (free y)
    res_d = linprog(
        -b,
        A_ub=A_signed.T.tocsr(),
        b_ub=c,
        bounds=(None, None),
        method="highs",
    )
    if res_d.status != 0:
        raise RuntimeError(f"flat-norm dual LP failed: {res_d.message}")
    y = res_d.x
    dual_value = float(-res_d.fun)
    tau = ScalarField(grid, (y[:n_samples] / weight).reshape(grid.shape))
    xi_comps = []
    for j in range(grid.d):
        yj = y[(j + 1) * n_samples : (j + 2) * n_samples]
        xi_comps.append(ScalarField(grid, (yj / weight).reshape(grid.shape)))
    omega = OneForm(tau, VectorField(tuple(xi_comps)))

    gap = primal_value - dual_value
    rel = abs(gap) / max(abs(primal_value), 1e-30)
    iters = int(getattr(res, "nit", -1))
    return FlatNormCertificate(
        value=primal_value,
        primal_value=primal_value,
        dual_value=dual_value,
        duality_gap=float(gap),
        relative_gap=float(rel),
        S=S,
        L=L,
        omega=omega,
        n_variables=2 * n_cols,
        n_constraints=A.shape[0],
        iterations=iters,
    )


@dataclass(frozen=True)
class ConstructiveFlatBound:
    value: float
    mass_s: float
    mass_l: float
    defect_mass: float


def flat_bound_constructive(
    T: Current1Diffuse,
    S: Current2Diffuse | None,
    L: Current1Diffuse | None,
    method: str = SPECTRAL,
) -> ConstructiveFlatBound:
    """Upper flat-norm bound from a caller-supplied decomposition.

    Evaluates M(S) + M(L) and adds the mass of the reconstruction defect
    T - boundary2(S) - L, so the returned value is a valid upper bound even
    when the supplied decomposition closes only approximately.
    """
    grid = T.grid
    m_s = 0.0
    bS = Current1Diffuse.zero(grid)
    if S is not None:
        m_s = mass2(S)
        bS = boundary2(S, method)
    if L is None:
        L = Current1Diffuse.zero(grid)
    m_l = mass(L)
    defect = mass(T - bS - L)
    return ConstructiveFlatBound(value=m_s + m_l + defect, mass_s=m_s, mass_l=m_l, defect_mass=defect)
