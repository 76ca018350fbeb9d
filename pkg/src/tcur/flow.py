"""Flow maps of smooth velocity fields and push-forward of fields and currents.

Trajectories start at every cell center and are integrated with classic RK4,
evaluating the velocity by periodic cubic interpolation (linear between time
slices). Spatial Jacobians ride along through the variational equation
dM/dt = Du(t, X) M rather than by differencing positions, and determinants
come from those Jacobians. Positions are kept unwrapped (winding tracked), so
Jacobians live on the universal cover and wrap artifacts cannot appear.

The inverse map is obtained by integrating the velocity backward in time from
every node. For time-independent velocities the backward trajectories of all
slices lie on one orbit family, so a single reversed-field march produces the
whole inverse map; time-dependent velocities fall back to a batched per-slice
backward integration.

The space-time diffeomorphism psi(t,x) = (t, Phi(t,x)) pushes densities and
diffuse 1-currents forward through the Jacobian representation formula
F_# T = (DF . f / det DF) o F^{-1}; for psi the space-time Jacobian has block
structure (time row (1,0), velocity column, spatial block D_x Phi), which is
what the component formulas below implement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .currents import Current1Diffuse, OneForm, vertical_mass
from .grid import (
    SPECTRAL,
    PeriodicGrid,
    ScalarField,
    VectorField,
    derivative,
    is_time_independent,
    sample_at,
    sample_vector_at,
    spatial_interpolate,
)


class FlowInversionError(RuntimeError):
    """A Jacobian determinant left the positive cone; the step size is too large."""


@dataclass(frozen=True)
class FlowMap:
    """Sampled flow of a velocity field with Jacobian and inverse channels.

    positions[k]             Phi(t_k, x) for every node, unwrapped, (n_t, N, d)
    jacobians[k]             D_x Phi(t_k, x), (n_t, N, d, d)
    determinants[k]          det D_x Phi, (n_t, N)
    inverse_positions[k]     Phi^{-1}(t_k, y) at every node y
    inverse_jacobians[k]     D_y Phi^{-1}(t_k, y)
    inverse_determinants[k]  det D_y Phi^{-1}
    """

    grid: PeriodicGrid
    velocity: VectorField
    substeps: int
    positions: np.ndarray
    jacobians: np.ndarray
    determinants: np.ndarray
    inverse_positions: np.ndarray
    inverse_jacobians: np.ndarray
    inverse_determinants: np.ndarray

    def displacement_slices(self, inverse: bool = False) -> np.ndarray:
        """Periodic displacement fields Phi - id per slice, shape (n_t, *spatial, d)."""
        pos = self.inverse_positions if inverse else self.positions
        nodes = self.grid.nodes()
        disp = pos - nodes[np.newaxis]
        return disp.reshape((self.grid.n_t,) + self.grid.spatial_shape + (self.grid.d,))


@dataclass(frozen=True)
class SpaceTimeDiffeo:
    """psi(t,x) = (t, Phi(t,x)) or its inverse; the time component is the identity."""

    flow: FlowMap
    orientation: str = "forward"

    def __post_init__(self) -> None:
        if self.orientation not in ("forward", "inverse"):
            raise ValueError(f"orientation must be 'forward' or 'inverse', got {self.orientation!r}")

    @property
    def grid(self) -> PeriodicGrid:
        return self.flow.grid


class _VelocitySampler:
    """Velocity and velocity-gradient evaluation along trajectories."""

    def __init__(self, u: VectorField, method: str = SPECTRAL):
        self.u = u
        self.d = u.grid.d
        self.grads = [
            [derivative(c, j, method) for j in range(self.d)] for c in u.components
        ]

    def velocity(self, t: float, pts: np.ndarray) -> np.ndarray:
        return sample_vector_at(self.u, t, pts)

    def jacobian(self, t: float, pts: np.ndarray) -> np.ndarray:
        out = np.empty((pts.shape[0], self.d, self.d))
        for i in range(self.d):
            for j in range(self.d):
                out[:, i, j] = sample_at(self.grads[i][j], t, pts)
        return out


def _rk4_step(sampler: _VelocitySampler, t: float, tau: float, X: np.ndarray, M: np.ndarray):
    """One RK4 step of the coupled position/variational system."""

    def rhs(tt, Xc, Mc):
        U = sampler.velocity(tt, Xc)
        G = sampler.jacobian(tt, Xc)
        return U, np.einsum("nij,njk->nik", G, Mc)

    k1x, k1m = rhs(t, X, M)
    k2x, k2m = rhs(t + 0.5 * tau, X + 0.5 * tau * k1x, M + 0.5 * tau * k1m)
    k3x, k3m = rhs(t + 0.5 * tau, X + 0.5 * tau * k2x, M + 0.5 * tau * k2m)
    k4x, k4m = rhs(t + tau, X + tau * k3x, M + tau * k3m)
    Xn = X + (tau / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    Mn = M + (tau / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
    return Xn, Mn


def _determinants(M: np.ndarray) -> np.ndarray:
    d = M.shape[-1]
    if d == 1:
        return M[..., 0, 0]
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def _march(sampler: _VelocitySampler, grid: PeriodicGrid, substeps: int, reverse_field: bool):
    """March all nodes through every slice; returns positions and Jacobians."""
    n_t, N, d = grid.n_t, grid.num_spatial, grid.d
    X = grid.nodes().copy()
    M = np.tile(np.eye(d), (N, 1, 1))
    positions = np.empty((n_t, N, d))
    jacobians = np.empty((n_t, N, d, d))
    positions[0] = X
    jacobians[0] = M
    tau = grid.dt / substeps
    for k in range(n_t - 1):
        for s in range(substeps):
            t = k * grid.dt + s * tau
            # a reversed autonomous field is integrated at frozen time 0
            t_eval = 0.0 if reverse_field else t
            X, M = _rk4_step(sampler, t_eval, tau, X, M)
        positions[k + 1] = X
        jacobians[k + 1] = M
    return positions, jacobians


def _march_inverse_general(sampler: _VelocitySampler, grid: PeriodicGrid, substeps: int):
    """Backward integration from every slice to t=0, batched over slices."""
    n_t, N, d = grid.n_t, grid.num_spatial, grid.d
    nodes = grid.nodes()
    X = np.tile(nodes, (n_t, 1, 1))
    M = np.tile(np.eye(d), (n_t, N, 1, 1))
    tau = grid.dt / substeps
    for m in range(n_t - 1, 0, -1):
        Xa = X[m:].reshape(-1, d)
        Ma = M[m:].reshape(-1, d, d)
        for s in range(substeps):
            t = m * grid.dt - s * tau
            Xa, Ma = _rk4_step(sampler, t, -tau, Xa, Ma)
        X[m:] = Xa.reshape(X[m:].shape)
        M[m:] = Ma.reshape(M[m:].shape)
    return X, M


def compute_flow(u: VectorField, substeps: int = 4, method: str = SPECTRAL) -> FlowMap:
    """Flow map of u with Jacobians, determinants and the inverse map.

    The velocity must be smooth at the grid scale (mollify rough fields
    first). Raises FlowInversionError if any determinant drops to zero or
    below.
    """
    if substeps < 1:
        raise ValueError("substeps must be positive")
    grid = u.grid
    sampler = _VelocitySampler(u, method)
    positions, jacobians = _march(sampler, grid, substeps, reverse_field=False)
    dets = _determinants(jacobians)
    if float(dets.min()) <= 0.0:
        raise FlowInversionError("flow inversion lost: nonpositive determinant (reduce the step size)")

    if is_time_independent(u):
        reversed_sampler = _VelocitySampler(-1.0 * u, method)
        inv_pos, inv_jac = _march(reversed_sampler, grid, substeps, reverse_field=True)
    else:
        inv_pos, inv_jac = _march_inverse_general(sampler, grid, substeps)
    inv_dets = _determinants(inv_jac)
    if float(inv_dets.min()) <= 0.0:
        raise FlowInversionError("flow inversion lost on the backward march")

    return FlowMap(
        grid=grid,
        velocity=u,
        substeps=substeps,
        positions=positions,
        jacobians=jacobians,
        determinants=dets,
        inverse_positions=inv_pos,
        inverse_jacobians=inv_jac,
        inverse_determinants=inv_dets,
    )


def evaluate_flow(flow: FlowMap, k: int, points: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Evaluate Phi(t_k, .) (or its inverse) at arbitrary points.

    The periodic displacement field is interpolated and added to the query
    points, which keeps the composition exact for the identity map.
    """
    disp = flow.displacement_slices(inverse=inverse)[k]
    pts = np.asarray(points, dtype=np.float64)
    out = pts.copy()
    for j in range(flow.grid.d):
        out[:, j] += spatial_interpolate(disp[..., j], pts, flow.grid.h)
    return out


def _interp_field_slices(f: ScalarField, pts_per_slice: np.ndarray) -> np.ndarray:
    """Interpolate every time slice of f at its own batch of points."""
    g = f.grid
    out = np.empty((g.n_t, pts_per_slice.shape[1]))
    for k in range(g.n_t):
        out[k] = spatial_interpolate(f.values[k], pts_per_slice[k], g.h)
    return out


def _check_det(dets: np.ndarray) -> None:
    if float(np.min(np.abs(dets))) < 1e-12:
        raise FlowInversionError("determinant too close to zero for push-forward")


def pushforward_density(F: SpaceTimeDiffeo, rho: ScalarField) -> ScalarField:
    """Push a density forward: F_#(rho L^n) = (rho / det DF) o F^{-1}, per slice."""
    flow = F.flow
    g = flow.grid
    if rho.grid != g:
        raise ValueError("density lives on a different grid")
    if F.orientation == "forward":
        _check_det(flow.inverse_determinants)
        vals = _interp_field_slices(rho, flow.inverse_positions) * flow.inverse_determinants
    else:
        _check_det(flow.determinants)
        vals = _interp_field_slices(rho, flow.positions) * flow.determinants
    return ScalarField(g, vals.reshape(g.shape))


def pushforward_current(F: SpaceTimeDiffeo, T: Current1Diffuse) -> Current1Diffuse:
    """Push a diffuse 1-current forward through psi or psi^{-1}.

    Componentwise, with M = D_x Phi and u the flowed velocity:
      forward:  out_t(y) = f_t(P) / det M(P),  P = Phi^{-1}(y)
                out_s(y) = [M f_s / det M](P) + out_t(y) u(t, y)
      inverse:  out_t(x) = det M(x) f_t(Q),    Q = Phi(x)
                out_s(x) = det M(x) M(x)^{-1} [f_s(Q) - f_t(Q) u(t, Q)]
    Satisfies pair(F_# T, w) = pair(T, F^# w) up to interpolation error.
    """
    flow = F.flow
    g = flow.grid
    if T.grid != g:
        raise ValueError("current lives on a different grid")
    d = g.d
    if F.orientation == "forward":
        _check_det(flow.inverse_determinants)
        pts = flow.inverse_positions
        ft = _interp_field_slices(T.f_t, pts)
        fs = np.stack([_interp_field_slices(c, pts) for c in T.f_vec.components], axis=-1)
        inv_jac = flow.inverse_jacobians
        inv_det = flow.inverse_determinants
        out_t = ft * inv_det
        # D_x Phi evaluated at Phi^{-1}(y) is the inverse of the inverse-map Jacobian at y
        pushed = np.linalg.solve(inv_jac, fs[..., None])[..., 0] * inv_det[..., None]
        u_nodes = np.stack(
            [c.values.reshape(g.n_t, -1) for c in flow.velocity.components], axis=-1
        )
        out_s = pushed + out_t[..., None] * u_nodes
    else:
        _check_det(flow.determinants)
        pts = flow.positions
        ft = _interp_field_slices(T.f_t, pts)
        fs = np.stack([_interp_field_slices(c, pts) for c in T.f_vec.components], axis=-1)
        u_pts = np.empty_like(fs)
        for k in range(g.n_t):
            u_pts[k] = sample_vector_at(flow.velocity, k * g.dt, pts[k])
        det = flow.determinants
        out_t = det * ft
        out_s = det[..., None] * np.linalg.solve(flow.jacobians, (fs - ft[..., None] * u_pts)[..., None])[..., 0]
    f_t = ScalarField(g, out_t.reshape(g.shape))
    comps = tuple(ScalarField(g, out_s[..., j].reshape(g.shape)) for j in range(d))
    return Current1Diffuse(f_t, VectorField(comps))


def pullback_form(F: SpaceTimeDiffeo, w: OneForm) -> OneForm:
    """Pull a sampled one-form back: components composed with F, contracted with DF."""
    flow = F.flow
    g = flow.grid
    if w.grid != g:
        raise ValueError("form lives on a different grid")
    d = g.d
    if F.orientation == "forward":
        pts = flow.positions
        tau_c = _interp_field_slices(w.tau, pts)
        xi_c = np.stack([_interp_field_slices(c, pts) for c in w.xi_vec.components], axis=-1)
        u_pts = np.empty_like(xi_c)
        for k in range(g.n_t):
            u_pts[k] = sample_vector_at(flow.velocity, k * g.dt, pts[k])
        tau_out = tau_c + np.einsum("knj,knj->kn", xi_c, u_pts)
        xi_out = np.einsum("knji,knj->kni", flow.jacobians, xi_c)
    else:
        pts = flow.inverse_positions
        tau_c = _interp_field_slices(w.tau, pts)
        xi_c = np.stack([_interp_field_slices(c, pts) for c in w.xi_vec.components], axis=-1)
        u_nodes = np.stack(
            [c.values.reshape(g.n_t, -1) for c in flow.velocity.components], axis=-1
        )
        dt_inv = -np.einsum("knij,knj->kni", flow.inverse_jacobians, u_nodes)
        tau_out = tau_c + np.einsum("knj,knj->kn", xi_c, dt_inv)
        xi_out = np.einsum("knji,knj->kni", flow.inverse_jacobians, xi_c)
    tau_f = ScalarField(g, tau_out.reshape(g.shape))
    comps = tuple(ScalarField(g, xi_out[..., i].reshape(g.shape)) for i in range(d))
    return OneForm(tau_f, VectorField(comps))


def jacobian_identity_error(flow: FlowMap) -> float:
    """Largest deviation of det(D Phi^{-1} o Phi) det(D Phi) from one.

    The forward and backward Jacobians are integrated independently, so this
    measures their mutual consistency. The inverse determinant field is
    evaluated at the forward positions through its trigonometric interpolant;
    the cubic interpolant's own error would otherwise dominate the measurement.
    """
    from .grid import spectral_point_values

    g = flow.grid
    inv_det = flow.inverse_determinants.reshape((g.n_t,) + g.spatial_shape)
    worst = 0.0
    for k in range(g.n_t):
        composed = spectral_point_values(inv_det[k], flow.positions[k], g.h)
        worst = max(worst, float(np.max(np.abs(composed * flow.determinants[k] - 1.0))))
    return worst


def straighten(T_delta: Current1Diffuse, flow: FlowMap) -> tuple[Current1Diffuse, float]:
    """Push T through psi^{-1}; the vertical mass of the result is the defect.

    For a current whose space coefficients are f_t times the flowed velocity
    the result is purely horizontal; the reported defect measures how far the
    discretization is from that cancellation.
    """
    pushed = pushforward_current(SpaceTimeDiffeo(flow, "inverse"), T_delta)
    return pushed, vertical_mass(pushed)
