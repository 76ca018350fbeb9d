import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tcur
from tcur.currents import (
    BoundaryDistribution,
    NullBoundaryError,
    boundary_mass,
    boundary_pair,
    differential,
)
from tcur.forms import TimeWindow, random_one_form, random_test_function
from tcur.grid import cumulative_time_integral, space_time_integral


def grid1(n=16, n_t=16):
    return tcur.PeriodicGrid(1, n, n_t)


def random_field(grid, rng, max_mode=3):
    vals = np.zeros(grid.shape)
    t = grid.times().reshape((grid.n_t,) + (1,) * grid.d)
    for _ in range(3):
        k = rng.integers(1, max_mode + 1, size=grid.d)
        arg = sum(2 * np.pi * k[j] * m for j, m in enumerate(grid.meshes()))
        vals += rng.normal() * (1 + 0.5 * np.sin(2 * np.pi * t)) * np.cos(arg + rng.uniform(0, 7))[np.newaxis]
    return tcur.ScalarField(grid, vals)


def random_current(grid, rng, max_mode=3):
    return tcur.Current1Diffuse(
        random_field(grid, rng, max_mode),
        tcur.VectorField(tuple(random_field(grid, rng, max_mode) for _ in range(grid.d))),
    )


def sample_form(form, grid):
    return tcur.OneForm(
        form.tau.sample(grid),
        tcur.VectorField(tuple(x.sample(grid) for x in form.xis)),
    )


class TestPairing:
    def test_zero_current(self):
        g = grid1()
        rng = np.random.default_rng(0)
        w = sample_form(random_one_form(rng, 1), g)
        assert tcur.pair(tcur.Current1Diffuse.zero(g), w) == 0.0

    def test_zero_form(self):
        g = grid1()
        rng = np.random.default_rng(0)
        T = random_current(g, rng)
        w = tcur.OneForm(tcur.ScalarField.zeros(g), tcur.VectorField.zeros(g))
        assert tcur.pair(T, w) == 0.0

    def test_matches_naive_double_loop(self):
        g = tcur.PeriodicGrid(1, 8, 8)
        rng = np.random.default_rng(1)
        T = random_current(g, rng)
        w = sample_form(random_one_form(rng, 1), g)
        acc = 0.0
        for k in range(g.n_t):
            for i in range(g.n):
                acc += T.f_t.values[k, i] * w.tau.values[k, i]
                acc += T.f_vec[0].values[k, i] * w.xi_vec[0].values[k, i]
        acc *= g.dt * g.h
        assert tcur.pair(T, w) == pytest.approx(acc, rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_pairing_bounded_by_mass(self, seed):
        g = grid1()
        rng = np.random.default_rng(seed)
        T = random_current(g, rng)
        w = sample_form(random_one_form(rng, 1).normalized(), g)
        assert abs(tcur.pair(T, w)) <= tcur.mass(T) + 1e-10


class TestMassSplit:
    def test_zero(self):
        assert tcur.mass(tcur.Current1Diffuse.zero(grid1())) == 0.0

    def test_horizontal_unit(self):
        g = grid1()
        T = tcur.Current1Diffuse.horizontal(tcur.ScalarField.constant(g, 1.0))
        assert tcur.mass(T) == pytest.approx(1.0, abs=1e-14)
        assert tcur.vertical_mass(T) == 0.0

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_split_additivity(self, seed):
        g = grid1()
        T = random_current(g, np.random.default_rng(seed))
        Th, Tv = tcur.split(T)
        assert tcur.vertical_mass(Th) == 0.0
        assert np.max(np.abs(Tv.f_t.values)) == 0.0
        assert tcur.mass(Th) + tcur.mass(Tv) == pytest.approx(tcur.mass(T), rel=1e-14)

    def test_mass_matches_naive_sum(self):
        g = tcur.PeriodicGrid(1, 8, 8)
        T = random_current(g, np.random.default_rng(3))
        naive = (np.abs(T.f_t.values).sum() + np.abs(T.f_vec[0].values).sum()) * g.dt * g.h
        assert tcur.mass(T) == pytest.approx(naive, rel=1e-13)


class TestBoundary1:
    def test_constant_horizontal(self):
        g = grid1()
        T = tcur.Current1Diffuse.horizontal(tcur.ScalarField.constant(g, 1.0))
        b = tcur.boundary1(T)
        assert np.max(np.abs(b.interior.values)) < 1e-12
        assert np.max(np.abs(b.initial_surface + 1.0)) == 0.0

    def test_linear_time_coefficient(self):
        g = grid1(32, 32)
        phi = np.cos(2 * np.pi * g.axis_centers())
        T = tcur.Current1Diffuse.horizontal(
            tcur.ScalarField.from_function(g, lambda t, x: t * np.cos(2 * np.pi * x))
        )
        b = tcur.boundary1(T)
        assert np.max(np.abs(b.interior.values + phi)) < 1e-12
        assert np.max(np.abs(b.initial_surface)) == 0.0

    def test_duality_interior_forms_exact(self):
        g = grid1(32, 32)
        rng = np.random.default_rng(4)
        T = random_current(g, rng)
        scale = tcur.mass(T)
        for _ in range(10):
            xi = random_test_function(rng, 1, window=TimeWindow("interior", 0.15, 0.85))
            lhs = boundary_pair(tcur.boundary1(T), xi.sample(g))
            rhs = tcur.pair(T, differential(xi.sample(g)))
            assert abs(lhs - rhs) <= 1e-11 * max(scale, 1.0)

    def test_duality_initial_forms(self):
        # forms alive at t=0 pick up the surface term; the identity then holds
        # to first order in dt through the uniform time quadrature
        g = grid1(32, 256)
        rng = np.random.default_rng(5)
        T = random_current(g, rng)
        xi = random_test_function(rng, 1, window=TimeWindow("initial", 0.3, 0.8))
        lhs = boundary_pair(tcur.boundary1(T), xi.sample(g))
        rhs = tcur.pair(T, differential(xi.sample(g)))
        assert abs(lhs - rhs) <= 0.05 * max(tcur.mass(T), 1.0)


class TestBoundary2:
    def test_zero(self):
        S = tcur.Current2Diffuse.zero(grid1())
        T = tcur.boundary2(S)
        assert tcur.mass(T) == 0.0

    def test_linear_envelope_formula(self):
        g = grid1(32, 32)
        T = tcur.boundary2(
            tcur.Current2Diffuse(
                tcur.VectorField(
                    (tcur.ScalarField.from_function(g, lambda t, x: t * np.sin(2 * np.pi * x)),)
                )
            )
        )
        t = g.times().reshape(-1, 1)
        x = g.axis_centers()
        expected_ft = t * 2 * np.pi * np.cos(2 * np.pi * x)
        assert np.max(np.abs(T.f_t.values - expected_ft)) < 1e-11
        assert np.max(np.abs(T.f_vec[0].values + np.sin(2 * np.pi * x))) < 1e-11

    def test_nonzero_initial_slice_rejected(self):
        g = grid1()
        S = tcur.Current2Diffuse(tcur.VectorField((tcur.ScalarField.constant(g, 1.0),)))
        with pytest.raises(ValueError, match="surface term"):
            tcur.boundary2(S)

    def test_duality_identity(self):
        # pairing both sides against 20 random interior forms on a 32x32 grid
        g = grid1(32, 32)
        rng = np.random.default_rng(6)
        env = TimeWindow("interior", 0.12, 0.88)
        t = g.times().reshape(-1, 1)
        F = tcur.ScalarField(g, env(t) * random_field(g, rng).values)
        S = tcur.Current2Diffuse(tcur.VectorField((F,)))
        T = tcur.boundary2(S)
        for _ in range(20):
            w = sample_form(random_one_form(rng, 1, window=TimeWindow("interior", 0.15, 0.85)), g)
            lhs = tcur.pair(T, w)
            dw = tcur.time_derivative(w.xi_vec[0]) - tcur.derivative(w.tau, 0)
            rhs = space_time_integral(F * dw)
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, tcur.mass2(S))


class TestPrimitive:
    def test_zero(self):
        S = tcur.primitive_two_current(tcur.Current1Diffuse.zero(grid1()))
        assert tcur.mass2(S) == 0.0

    def test_roundtrip_exact_on_quadratic_envelopes(self):
        g = grid1(16, 16)
        rng = np.random.default_rng(7)
        t = g.times().reshape(-1, 1)
        F0 = tcur.ScalarField(g, (t - t * t) * random_field(g, rng).values[0][np.newaxis])
        S0 = tcur.Current2Diffuse(tcur.VectorField((F0,)))
        T = tcur.boundary2(S0)
        S = tcur.primitive_two_current(T)
        T_back = tcur.boundary2(S)
        assert tcur.mass(T - T_back) <= 1e-12 * max(tcur.mass(T), 1.0)

    def test_roundtrip_second_order_on_generic_data(self):
        errs = []
        for n_t in (32, 64, 128):
            g = grid1(16, n_t)
            rng = np.random.default_rng(8)
            env = TimeWindow("interior", 0.1, 0.9)
            t = g.times().reshape(-1, 1)
            F0 = tcur.ScalarField(g, env(t) * random_field(g, rng).values[0][np.newaxis])
            T = tcur.boundary2(tcur.Current2Diffuse(tcur.VectorField((F0,))))
            T_back = tcur.boundary2(tcur.primitive_two_current(T))
            errs.append(tcur.mass(T - T_back))
        assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.4)
        assert np.log2(errs[1] / errs[2]) == pytest.approx(2.0, abs=0.4)

    def test_nonnull_boundary_rejected(self):
        g = grid1()
        T = tcur.Current1Diffuse.horizontal(tcur.ScalarField.constant(g, 1.0))
        with pytest.raises(NullBoundaryError) as exc:
            tcur.primitive_two_current(T)
        assert exc.value.measured > 0.9


class TestHorizontalFromBoundary:
    def test_zero(self):
        g = grid1()
        b = BoundaryDistribution(tcur.ScalarField.zeros(g), np.zeros(g.spatial_shape))
        M = tcur.horizontal_from_boundary(b)
        assert tcur.mass(M) == 0.0

    def test_unit_boundary(self):
        g = grid1(16, 256)
        b = BoundaryDistribution(tcur.ScalarField.constant(g, 1.0), np.zeros(g.spatial_shape))
        M = tcur.horizontal_from_boundary(b)
        assert tcur.vertical_mass(M) == 0.0
        # G = t so the mass is the integral of t over [0,1]
        assert tcur.mass(M) == pytest.approx(0.5, abs=2e-3)
        assert tcur.mass(M) <= 1.0

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_mass_bound_exact(self, seed):
        g = grid1()
        interior = random_field(g, np.random.default_rng(seed))
        b = BoundaryDistribution(interior, np.zeros(g.spatial_shape))
        M = tcur.horizontal_from_boundary(b)
        assert tcur.mass(M) <= tcur.lp_norm(interior, 1)

    def test_roundtrip_exact_on_time_affine_data(self):
        g = grid1(32, 32)
        rng = np.random.default_rng(9)
        a = random_field(g, rng).values[0]
        c = random_field(g, rng).values[0]
        t = g.times().reshape(-1, 1)
        interior = tcur.ScalarField(g, a[np.newaxis] + t * c[np.newaxis])
        b = BoundaryDistribution(interior, np.zeros(g.spatial_shape))
        M = tcur.horizontal_from_boundary(b)
        back = tcur.boundary1(M)
        err = tcur.lp_norm(back.interior - interior, 1)
        assert err <= 1e-8 * max(1.0, tcur.lp_norm(interior, 1))
        assert np.max(np.abs(back.initial_surface)) == 0.0

    def test_roundtrip_second_order_on_generic_data(self):
        errs = []
        for n_t in (32, 64, 128):
            g = grid1(16, n_t)
            interior = tcur.ScalarField.from_function(
                g, lambda t, x: np.sin(2 * np.pi * t) * np.cos(2 * np.pi * x)
            )
            b = BoundaryDistribution(interior, np.zeros(g.spatial_shape))
            back = tcur.boundary1(tcur.horizontal_from_boundary(b))
            errs.append(tcur.lp_norm(back.interior - interior, 1))
        assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.4)

    def test_support_preserved(self):
        g = grid1(64, 16)
        x = g.axis_centers()
        bumpcol = np.where(np.abs(x - 0.5) < 0.1, 1.0, 0.0)
        interior = tcur.ScalarField.from_function(g, lambda t, x_: (1 + t) * 0) + tcur.ScalarField(
            g, np.broadcast_to(bumpcol, g.shape).copy()
        )
        b = BoundaryDistribution(interior, np.zeros(g.spatial_shape))
        M = tcur.horizontal_from_boundary(b)
        outside = np.abs(x - 0.5) >= 0.1
        assert np.max(np.abs(M.f_t.values[:, outside])) == 0.0
        assert np.max(np.abs(M.f_t.values[:, ~outside])) > 0.0

    def test_surface_part_rejected(self):
        g = grid1()
        b = BoundaryDistribution(tcur.ScalarField.zeros(g), np.ones(g.spatial_shape))
        with pytest.raises(ValueError, match="surface"):
            tcur.horizontal_from_boundary(b)


class TestBoundaryConsistencyWithCommutator:
    def test_regularized_current_boundary_is_commutator(self):
        # interior of boundary1(T_delta) equals the commutator field when the
        # density solves the transport equation at the discrete level
        g = tcur.PeriodicGrid(1, 128, 128)
        u = tcur.VectorField.from_spatial(g, [lambda x: 0.5 + 0.25 * np.sin(2 * np.pi * x)])
        rho0 = 1 + 0.5 * np.cos(2 * np.pi * g.axis_centers())
        prob = tcur.ContinuityProblem(u, rho0, tcur.NormExponents(2, 2))
        rho = tcur.solve_continuity(prob, "semi-lagrangian")
        k = tcur.bump_kernel(g, 0.1)
        T = tcur.regularized_current(rho, u, k)
        b = tcur.boundary1(T)
        r = tcur.commutator(u, rho, k)
        # residual of the solved density, mollified, accounts for the gap
        mismatch = tcur.lp_norm(b.interior - r, 1)
        assert mismatch <= 0.05 * max(tcur.lp_norm(r, 1), 1e-12)
