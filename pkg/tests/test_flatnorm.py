import numpy as np
import pytest

import tcur
from tcur.currents import boundary_mass, flat_bound_constructive
from tcur.experiments import _random_two_current


def grid1(n=16, n_t=16):
    return tcur.PeriodicGrid(1, n, n_t)


def null_boundary_current(seed, envelope="quadratic", grid=None):
    rng = np.random.default_rng(seed)
    g = grid or grid1()
    return tcur.boundary2(_random_two_current(rng, g, envelope)), g


class TestFlatNormLP:
    def test_zero_current(self):
        cert = tcur.flat_norm_lp(tcur.Current1Diffuse.zero(grid1()))
        assert cert.value == pytest.approx(0.0, abs=1e-12)
        assert cert.dual_value == pytest.approx(0.0, abs=1e-12)

    def test_generated_currents_have_null_boundary(self):
        T, _ = null_boundary_current(0)
        assert boundary_mass(tcur.boundary1(T)) <= 1e-10 * tcur.mass(T)

    @pytest.mark.parametrize("seed,envelope", [(0, "quadratic"), (1, "smooth"), (2, "quadratic")])
    def test_bounded_by_vertical_mass(self, seed, envelope):
        T, _ = null_boundary_current(seed, envelope)
        cert = tcur.flat_norm_lp(T)
        assert cert.value <= tcur.vertical_mass(T) * (1 + 1e-6)

    def test_duality_gap_small(self):
        T, _ = null_boundary_current(3)
        cert = tcur.flat_norm_lp(T)
        assert cert.relative_gap <= 1e-6
        assert cert.dual_value <= cert.primal_value + 1e-10

    def test_dual_certificate_is_feasible_and_attains(self):
        T, _ = null_boundary_current(4)
        cert = tcur.flat_norm_lp(T)
        # componentwise comass bound on omega
        assert np.max(np.abs(cert.omega.tau.values)) <= 1 + 1e-7
        assert np.max(np.abs(cert.omega.xi_vec[0].values)) <= 1 + 1e-7
        # re-evaluating the pairing reproduces the dual optimum
        assert tcur.pair(T, cert.omega) == pytest.approx(cert.dual_value, rel=1e-7, abs=1e-10)

    def test_primal_certificate_reconstructs(self):
        T, _ = null_boundary_current(5)
        cert = tcur.flat_norm_lp(T)
        recon = tcur.boundary2(cert.S) + cert.L
        assert tcur.mass(T - recon) <= 1e-7 * max(1.0, tcur.mass(T))
        assert tcur.mass2(cert.S) + tcur.mass(cert.L) == pytest.approx(cert.value, rel=1e-6, abs=1e-9)

    def test_norm_definiteness(self):
        T, g = null_boundary_current(6)
        cert = tcur.flat_norm_lp(T)
        assert cert.value > 1e-4  # a visible current has visible flat norm
        assert tcur.flat_norm_lp(tcur.Current1Diffuse.zero(g)).value <= 1e-12

    def test_variable_cap_guard(self):
        g = tcur.PeriodicGrid(1, 128, 128)
        with pytest.raises(ValueError, match="cap"):
            tcur.flat_norm_lp(tcur.Current1Diffuse.zero(g), variable_cap=1024)

    def test_pure_l_decomposition_when_boundary_blocks(self):
        # a horizontal constant current: S cannot help, optimum is <= mass
        g = grid1()
        T = tcur.Current1Diffuse.horizontal(tcur.ScalarField.constant(g, 1.0))
        cert = tcur.flat_norm_lp(T)
        assert cert.value <= tcur.mass(T) * (1 + 1e-9)


class TestConstructiveBound:
    def test_trivial_decomposition(self):
        T, _ = null_boundary_current(7)
        res = flat_bound_constructive(T, None, T)
        assert res.value == pytest.approx(tcur.mass(T), rel=1e-12)
        assert res.defect_mass <= 1e-14

    def test_primitive_decomposition_dominates_lp(self):
        T, _ = null_boundary_current(8)
        S = tcur.primitive_two_current(T)
        res = flat_bound_constructive(T, S, None)
        cert = tcur.flat_norm_lp(T)
        assert res.value >= cert.value - 1e-9

    def test_defect_added_for_sloppy_decomposition(self):
        T, g = null_boundary_current(9)
        res = flat_bound_constructive(T, None, None)
        assert res.value == pytest.approx(tcur.mass(T), rel=1e-12)
        assert res.defect_mass == pytest.approx(tcur.mass(T), rel=1e-12)


class TestCertificateExport:
    def test_json_fields(self):
        T, _ = null_boundary_current(10)
        cert = tcur.flat_norm_lp(T)
        blob = cert.to_json_dict()
        for key in ("value", "duality_gap", "iterations", "n_variables", "n_constraints"):
            assert key in blob
