import numpy as np
import pytest

import tcur
from tcur.currents import boundary_pair, differential
from tcur.flow import evaluate_flow, jacobian_identity_error
from tcur.forms import TimeWindow, random_one_form, random_test_function
from tcur.grid import sample_vector_at


def sine_velocity(grid, mean=0.5, amp=0.25):
    return tcur.VectorField.from_spatial(grid, [lambda x: mean + amp * np.sin(2 * np.pi * x)])


def smooth_problem(n=128, n_t=None):
    g = tcur.PeriodicGrid(1, n, n_t or n)
    u = sine_velocity(g)
    rho0 = 1 + 0.5 * np.cos(2 * np.pi * g.axis_centers())
    return g, u, rho0


def sample_form(form, grid):
    return tcur.OneForm(
        form.tau.sample(grid),
        tcur.VectorField(tuple(x.sample(grid) for x in form.xis)),
    )


class TestComputeFlow:
    def test_zero_velocity_identity(self):
        g = tcur.PeriodicGrid(1, 16, 16)
        flow = tcur.compute_flow(tcur.VectorField.zeros(g))
        nodes = g.nodes()
        assert np.max(np.abs(flow.positions - nodes[np.newaxis])) == 0.0
        assert np.max(np.abs(flow.determinants - 1.0)) == 0.0
        assert np.max(np.abs(flow.inverse_positions - nodes[np.newaxis])) == 0.0

    def test_constant_velocity_translation(self):
        g = tcur.PeriodicGrid(1, 32, 32)
        c = 0.3
        flow = tcur.compute_flow(tcur.VectorField.constant(g, [c]))
        nodes = g.nodes()
        times = g.times()
        expected = nodes[np.newaxis] + c * times[:, None, None]
        assert np.max(np.abs(flow.positions - expected)) < 1e-12
        assert np.max(np.abs(flow.determinants - 1.0)) < 1e-12
        expected_inv = nodes[np.newaxis] - c * times[:, None, None]
        assert np.max(np.abs(flow.inverse_positions - expected_inv)) < 1e-12

    def test_sine_flow_matches_fine_integration(self):
        # oracle: same integrator with 10x finer substepping
        g, u, _ = smooth_problem(128)
        flow = tcur.compute_flow(u, substeps=4)
        fine = tcur.compute_flow(u, substeps=40)
        assert np.max(np.abs(flow.positions - fine.positions)) < 1e-8

    def test_liouville_determinant(self):
        # det D Phi(t,x) = exp(int_0^t u'(Phi(s,x)) ds); the oracle integrates
        # the augmented system (x, log J) with a high-accuracy adaptive solver
        from scipy.integrate import solve_ivp

        g, u, _ = smooth_problem(128)
        flow = tcur.compute_flow(u, substeps=8)
        mean, amp = 0.5, 0.25
        k = g.n_t - 1
        t_end = k * g.dt

        def rhs(t, y):
            x, _ = y
            return [mean + amp * np.sin(2 * np.pi * x), amp * 2 * np.pi * np.cos(2 * np.pi * x)]

        nodes = g.nodes()[:, 0]
        for idx in range(0, g.n, 16):
            sol = solve_ivp(rhs, [0.0, t_end], [nodes[idx], 0.0], rtol=1e-12, atol=1e-13)
            x_ref, logj_ref = sol.y[0, -1], sol.y[1, -1]
            assert flow.positions[k, idx, 0] == pytest.approx(x_ref, abs=1e-7)
            assert flow.determinants[k, idx] == pytest.approx(np.exp(logj_ref), rel=5e-7)

    def test_group_property(self):
        g, u, _ = smooth_problem(256)
        flow = tcur.compute_flow(u, substeps=4)
        i, j = 80, 60
        one_pass = flow.positions[i + j]
        composed = evaluate_flow(flow, i, np.mod(flow.positions[j], 1.0))
        # compare modulo the unwrapped winding difference
        diff = np.abs(np.mod(one_pass - composed + 0.5, 1.0) - 0.5)
        assert np.max(diff) < 1e-7

    def test_inverse_consistency(self):
        g, u, _ = smooth_problem(256)
        flow = tcur.compute_flow(u, substeps=4)
        for k in (20, 128, 255):
            comp = evaluate_flow(flow, k, np.mod(flow.positions[k], 1.0), inverse=True)
            err = np.abs(np.mod(comp - g.nodes() + 0.5, 1.0) - 0.5)
            assert np.max(err) < 1e-6

    def test_jacobian_identity(self):
        g, u, _ = smooth_problem(128)
        flow = tcur.compute_flow(u, substeps=4)
        assert jacobian_identity_error(flow) < 1e-6

    def test_divergence_free_determinant(self):
        g = tcur.PeriodicGrid(2, 32, 32)
        amp, m = 0.1, 1
        u0 = tcur.ScalarField.from_function(
            g, lambda t, x, y: amp * 2 * np.pi * m * np.sin(2 * np.pi * m * x) * np.cos(2 * np.pi * m * y)
        )
        u1 = tcur.ScalarField.from_function(
            g, lambda t, x, y: -amp * 2 * np.pi * m * np.cos(2 * np.pi * m * x) * np.sin(2 * np.pi * m * y)
        )
        flow = tcur.compute_flow(tcur.VectorField((u0, u1)), substeps=8)
        assert np.max(np.abs(flow.determinants - 1.0)) < 1e-8

    def test_time_dependent_inverse_march(self):
        # the batched backward march against a per-node adaptive ODE oracle
        from scipy.integrate import solve_ivp

        g = tcur.PeriodicGrid(1, 64, 64)
        u = tcur.VectorField(
            (tcur.ScalarField.from_function(g, lambda t, x: 0.3 + 0.1 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * t)),)
        )
        flow = tcur.compute_flow(u, substeps=4)

        def rhs(t, y):
            return [0.3 + 0.1 * np.sin(2 * np.pi * y[0]) * np.cos(2 * np.pi * t)]

        nodes = g.nodes()[:, 0]
        for k in (16, 63):
            for idx in (0, 20, 45):
                sol = solve_ivp(rhs, [k * g.dt, 0.0], [nodes[idx]], rtol=1e-12, atol=1e-13)
                assert flow.inverse_positions[k, idx, 0] == pytest.approx(sol.y[0, -1], abs=1e-6)

    def test_inversion_loss_raises(self):
        g = tcur.PeriodicGrid(1, 32, 8)
        u = tcur.VectorField.from_spatial(g, [lambda x: 8.0 * np.sin(2 * np.pi * x)])
        with pytest.raises(tcur.FlowInversionError):
            tcur.compute_flow(u, substeps=1)


class TestPushforwardDensity:
    def test_identity_map(self):
        g = tcur.PeriodicGrid(1, 32, 16)
        flow = tcur.compute_flow(tcur.VectorField.zeros(g))
        rho = tcur.ScalarField.from_function(g, lambda t, x: 1 + 0.3 * np.sin(2 * np.pi * x))
        out = tcur.pushforward_density(tcur.SpaceTimeDiffeo(flow, "forward"), rho)
        assert np.max(np.abs(out.values - rho.values)) < 1e-13

    def test_translation_shifts_and_preserves_mass(self):
        # speed chosen so every slice shifts by a whole number of cells, making
        # the circular shift, and hence the slice L^1 norms, exact
        g = tcur.PeriodicGrid(1, 64, 32)
        c = 0.5
        flow = tcur.compute_flow(tcur.VectorField.constant(g, [c]))
        rho = tcur.ScalarField.from_function(g, lambda t, x: 1 + np.cos(2 * np.pi * x))
        out = tcur.pushforward_density(tcur.SpaceTimeDiffeo(flow, "forward"), rho)
        x = g.axis_centers()
        for k in (0, 7, 31):
            expected = 1 + np.cos(2 * np.pi * (x - c * g.times()[k]))
            assert np.max(np.abs(out.values[k] - expected)) < 1e-10
        n_in = tcur.lp_norm(rho, 1, mode="per-slice")
        n_out = tcur.lp_norm(out, 1, mode="per-slice")
        assert np.max(np.abs(n_in - n_out) / n_in) < 1e-12

    def test_sine_flow_mass_preservation(self):
        g, u, rho0 = smooth_problem(256)
        flow = tcur.compute_flow(u)
        rho = tcur.ScalarField.from_spatial(g, rho0)
        out = tcur.pushforward_density(tcur.SpaceTimeDiffeo(flow, "forward"), rho)
        n_in = tcur.lp_norm(rho, 1, mode="per-slice")
        n_out = tcur.lp_norm(out, 1, mode="per-slice")
        assert np.max(np.abs(n_in - n_out) / n_in) < 1e-3


class TestPushforwardCurrent:
    def test_identity_map(self):
        g = tcur.PeriodicGrid(1, 32, 16)
        flow = tcur.compute_flow(tcur.VectorField.zeros(g))
        rng = np.random.default_rng(0)
        T = tcur.Current1Diffuse(
            tcur.ScalarField(g, rng.normal(size=g.shape)),
            tcur.VectorField((tcur.ScalarField(g, rng.normal(size=g.shape)),)),
        )
        for orientation in ("forward", "inverse"):
            out = tcur.pushforward_current(tcur.SpaceTimeDiffeo(flow, orientation), T)
            assert np.max(np.abs(out.f_t.values - T.f_t.values)) < 1e-12
            assert np.max(np.abs(out.f_vec[0].values - T.f_vec[0].values)) < 1e-12

    def test_inverse_push_straightens_carried_current(self):
        # a current whose space part is f_t u becomes purely horizontal with
        # time coefficient [rho / det D Phi^{-1}] o psi
        g, u, rho0 = smooth_problem(128)
        k = tcur.bump_kernel(g, 0.1)
        prob = tcur.ContinuityProblem(u, rho0, tcur.NormExponents(2, 2))
        rho = tcur.solve_continuity(prob, "semi-lagrangian")
        T = tcur.regularized_current(rho, u, k)
        u_delta = tcur.mollify_vector(u, k)
        flow = tcur.compute_flow(u_delta)
        out = tcur.pushforward_current(tcur.SpaceTimeDiffeo(flow, "inverse"), T)
        assert tcur.vertical_mass(out) < 1e-4 * tcur.mass(T)
        # horizontal coefficient equals det(D Phi) rho_delta(Phi)
        rho_d = tcur.mollify(rho, k)
        from tcur.flow import _interp_field_slices

        expected = _interp_field_slices(rho_d, flow.positions) * flow.determinants
        assert np.max(np.abs(out.f_t.values.reshape(g.n_t, -1) - expected)) < 1e-10

    def test_duality_against_pullback(self):
        g, u, _ = smooth_problem(128)
        k = tcur.bump_kernel(g, 0.1)
        u_delta = tcur.mollify_vector(u, k)
        flow = tcur.compute_flow(u_delta)
        rng = np.random.default_rng(1)
        T = tcur.Current1Diffuse(
            tcur.ScalarField.from_function(g, lambda t, x: (1 - t) * (1 + 0.4 * np.sin(2 * np.pi * x))),
            tcur.VectorField(
                (tcur.ScalarField.from_function(g, lambda t, x: 0.5 * np.cos(2 * np.pi * x) * (1 + t)),)
            ),
        )
        scale = tcur.mass(T)
        for orientation in ("forward", "inverse"):
            F = tcur.SpaceTimeDiffeo(flow, orientation)
            pushed = tcur.pushforward_current(F, T)
            for _ in range(10):
                w = sample_form(random_one_form(rng, 1).normalized(), g)
                lhs = tcur.pair(pushed, w)
                rhs = tcur.pair(T, tcur.pullback_form(F, w))
                assert abs(lhs - rhs) < 1e-4 * scale

    def test_boundary_commutes_with_pushforward(self):
        g, u, rho0 = smooth_problem(128)
        k = tcur.bump_kernel(g, 0.1)
        prob = tcur.ContinuityProblem(u, rho0, tcur.NormExponents(2, 2))
        rho = tcur.solve_continuity(prob, "semi-lagrangian")
        T = tcur.regularized_current(rho, u, k)
        u_delta = tcur.mollify_vector(u, k)
        flow = tcur.compute_flow(u_delta)
        F = tcur.SpaceTimeDiffeo(flow, "inverse")
        pushed = tcur.pushforward_current(F, T)
        bT = tcur.boundary1(T)
        b_pushed = tcur.boundary1(pushed)
        rng = np.random.default_rng(2)
        scale = tcur.mass(T)
        for _ in range(5):
            xi = random_test_function(rng, 1, window=TimeWindow("interior", 0.15, 0.85))
            lhs = boundary_pair(b_pushed, xi.sample(g))
            comp_vals = np.empty(g.shape)
            for kk in range(g.n_t):
                comp_vals[kk] = xi.value_at_points(
                    kk * g.dt, np.mod(flow.inverse_positions[kk], 1.0)
                ).reshape(g.spatial_shape)
            rhs = boundary_pair(bT, tcur.ScalarField(g, comp_vals))
            assert abs(lhs - rhs) < 1e-4 * scale

    def test_mass_bound_under_forward_push(self):
        g, u, _ = smooth_problem(128)
        k = tcur.bump_kernel(g, 0.1)
        u_delta = tcur.mollify_vector(u, k)
        flow = tcur.compute_flow(u_delta)
        P = tcur.Current1Diffuse.horizontal(
            tcur.ScalarField.from_function(g, lambda t, x: t * (1 - t) * np.cos(2 * np.pi * x))
        )
        pushed = tcur.pushforward_current(tcur.SpaceTimeDiffeo(flow, "forward"), P)
        bound = (1 + u_delta.sup_norm() * g.d) * tcur.mass(P)
        assert tcur.mass(pushed) <= bound + 1e-3 * tcur.mass(P)


class TestPullback:
    def test_identity_map(self):
        g = tcur.PeriodicGrid(1, 32, 16)
        flow = tcur.compute_flow(tcur.VectorField.zeros(g))
        rng = np.random.default_rng(3)
        w = sample_form(random_one_form(rng, 1), g)
        back = tcur.pullback_form(tcur.SpaceTimeDiffeo(flow, "forward"), w)
        assert np.max(np.abs(back.tau.values - w.tau.values)) < 1e-12
        assert np.max(np.abs(back.xi_vec[0].values - w.xi_vec[0].values)) < 1e-12

    def test_constant_form_under_translation(self):
        g = tcur.PeriodicGrid(1, 32, 32)
        c = 0.3
        flow = tcur.compute_flow(tcur.VectorField.constant(g, [c]))
        w = tcur.OneForm(
            tcur.ScalarField.constant(g, 0.7), tcur.VectorField((tcur.ScalarField.constant(g, -0.2),))
        )
        back = tcur.pullback_form(tcur.SpaceTimeDiffeo(flow, "forward"), w)
        # tau picks up xi . u for the space-time map
        assert np.max(np.abs(back.tau.values - (0.7 + c * -0.2))) < 1e-12
        assert np.max(np.abs(back.xi_vec[0].values + 0.2)) < 1e-12

    def test_differential_commutes_with_composition(self):
        # discrete d of the analytically composed function against the chain
        # rule through the flow channels
        g = tcur.PeriodicGrid(1, 128, 2048)
        u = sine_velocity(g)
        flow = tcur.compute_flow(u, substeps=2)
        rng = np.random.default_rng(4)
        xi = random_test_function(rng, 1, window=TimeWindow("interior", 0.2, 0.8))
        composed = np.empty(g.shape)
        for k in range(g.n_t):
            composed[k] = xi.value_at_points(k * g.dt, np.mod(flow.positions[k], 1.0)).reshape(
                g.spatial_shape
            )
        lhs = differential(tcur.ScalarField(g, composed))
        mean, amp = 0.5, 0.25
        u_exact = lambda pts: mean + amp * np.sin(2 * np.pi * pts[:, 0])
        tau_vals = np.empty(g.shape)
        xi_vals = np.empty(g.shape)
        for k in range(g.n_t):
            pts = flow.positions[k]
            wrapped = np.mod(pts, 1.0)
            dt_part = xi.dt(k * g.dt, wrapped[:, 0])
            grad_part = xi.partial(0, k * g.dt, wrapped[:, 0])
            tau_vals[k] = (dt_part + grad_part * u_exact(pts)).reshape(g.spatial_shape)
            xi_vals[k] = (grad_part * flow.jacobians[k, :, 0, 0]).reshape(g.spatial_shape)
        scale = max(np.max(np.abs(tau_vals)), np.max(np.abs(xi_vals)), 1.0)
        assert np.max(np.abs(lhs.tau.values - tau_vals)) < 1e-6 * scale
        assert np.max(np.abs(lhs.xi_vec[0].values - xi_vals)) < 1e-6 * scale


class TestStraighten:
    def test_zero_velocity(self):
        g = tcur.PeriodicGrid(1, 64, 16)
        u = tcur.VectorField.zeros(g)
        k = tcur.bump_kernel(g, 0.1)
        rho = tcur.ScalarField.from_function(g, lambda t, x: 1 + 0.5 * np.cos(2 * np.pi * x))
        T = tcur.regularized_current(rho, u, k)
        flow = tcur.compute_flow(tcur.mollify_vector(u, k))
        out, defect = tcur.straighten(T, flow)
        assert defect < 1e-12
        assert np.max(np.abs(out.f_t.values - T.f_t.values)) < 1e-12

    def test_constant_velocity(self):
        g = tcur.PeriodicGrid(1, 64, 64)
        u = tcur.VectorField.constant(g, [0.4])
        k = tcur.bump_kernel(g, 0.1)
        rho = tcur.ScalarField.from_function(g, lambda t, x: 1 + 0.5 * np.cos(2 * np.pi * x))
        T = tcur.regularized_current(rho, u, k)
        flow = tcur.compute_flow(tcur.mollify_vector(u, k))
        _, defect = tcur.straighten(T, flow)
        assert defect < 1e-10

    def test_smooth_defect_small_and_refining(self):
        defects = []
        masses = []
        for n in (128, 256):
            g, u, rho0 = smooth_problem(n)
            k = tcur.bump_kernel(g, 0.1)
            prob = tcur.ContinuityProblem(u, rho0, tcur.NormExponents(2, 2))
            rho = tcur.solve_continuity(prob, "semi-lagrangian")
            T = tcur.regularized_current(rho, u, k)
            flow = tcur.compute_flow(tcur.mollify_vector(u, k))
            _, defect = tcur.straighten(T, flow)
            defects.append(defect)
            masses.append(tcur.mass(T))
        assert defects[1] < 1e-3 * masses[1]
        assert defects[1] <= 0.65 * defects[0]
