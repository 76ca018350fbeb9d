"""Reproducible experiment drivers behind the command-line interface.

Every command takes a validated ExperimentConfig, runs a battery of
quantitative checks, optionally writes a ``report.json`` plus CSV files into
an output directory, and returns (report, ok). Reports contain no timestamps
or machine identifiers, so runs with identical configs and seeds are
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as tcio
from .commutators import commutator_sweep
from .config import ConfigError, ExperimentConfig, make_problem, make_velocity
from .currents import (
    Current1Diffuse,
    Current2Diffuse,
    OneForm,
    boundary1,
    boundary_mass,
    boundary_pair,
    flat_bound_constructive,
    flat_norm_lp,
    horizontal_from_boundary,
    mass,
    pair,
    primitive_two_current,
    vertical_mass,
    boundary2,
)
from .flow import (
    SpaceTimeDiffeo,
    compute_flow,
    jacobian_identity_error,
    pushforward_current,
    pushforward_density,
    straighten,
)
from .forms import AnalyticOneForm, TimeWindow, random_one_form, random_test_function, random_trig
from .grid import PeriodicGrid, ScalarField, VectorField, lp_norm
from .mollifiers import bump_kernel, kernel_from_csv, mollify, mollify_vector, regularized_current
from .pde import ContinuityProblem, solve_continuity


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: str, rows: list[list[float]]) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _make_kernel(grid: PeriodicGrid, kcfg: dict, delta: float):
    if kcfg.get("profile", "bump") == "csv":
        return kernel_from_csv(grid, delta, kcfg["path"])
    return bump_kernel(grid, delta)


def difference_current(sigma: ScalarField, u: VectorField) -> Current1Diffuse:
    """Current sigma e_t + sigma u^i e_i carried by the velocity u."""
    return Current1Diffuse(sigma, VectorField(tuple(sigma * c for c in u.components)))


def sample_one_form(form: AnalyticOneForm, grid: PeriodicGrid) -> OneForm:
    return OneForm(
        form.tau.sample(grid),
        VectorField(tuple(x.sample(grid) for x in form.xis)),
    )


# ---------------------------------------------------------------------------
# commutator sweep
# ---------------------------------------------------------------------------


def cmd_commutator_sweep(cfg: ExperimentConfig, out_dir: Path | None = None) -> tuple[dict, bool]:
    grid = cfg.make_grid()
    section = cfg.extras.get("commutator", {})
    presmooth = section.get("presmooth", "auto")
    is_rough = cfg.problem["velocity"]["kind"] == "rough"
    if presmooth == "auto":
        presmooth = 4.0 * grid.h if is_rough else None

    u = make_velocity(grid, cfg.problem["velocity"], cfg.seed)
    u_solve = mollify_vector(u, bump_kernel(grid, presmooth)) if presmooth else u
    prob = make_problem(cfg, grid)
    prob = ContinuityProblem(u_solve, prob.rho0, prob.exponents)
    rho = solve_continuity(prob, "semi-lagrangian", substeps=cfg.flow["substeps"])

    report_obj = commutator_sweep(u_solve, rho, cfg.delta_list)
    min_rate = float(cfg.tolerances.get("min_rate", 0.8))
    rate_ok = report_obj.fitted_rate is not None and report_obj.fitted_rate >= min_rate
    ok = bool(report_obj.monotone and rate_ok)

    report = {
        "command": "commutator-sweep",
        "grid": cfg.grid,
        "presmooth": presmooth,
        "sweep": report_obj.to_json_dict(),
        "checks": {
            "monotone": report_obj.monotone,
            "rate_ok": rate_ok,
            "min_rate": min_rate,
        },
        "ok": ok,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w") as fh:
            fh.write("\n".join(report_obj.csv_rows()) + "\n")
        _write_json(out_dir / "report.json", report)
    return report, ok


# ---------------------------------------------------------------------------
# null-boundary flat-norm battery
# ---------------------------------------------------------------------------


def _random_two_current(
    rng: np.random.Generator, grid: PeriodicGrid, envelope: str
) -> Current2Diffuse:
    """Random 2-current whose coefficients vanish at t=0 and t=1.

    envelope "quadratic" uses t(1-t), for which the primitive round trip is
    exact; "smooth" uses an interior bump window.
    """
    times = grid.times().reshape((grid.n_t,) + (1,) * grid.d)
    if envelope == "quadratic":
        env = times * (1.0 - times)
    else:
        window = TimeWindow("interior", 0.1, 0.9)
        env = window(times)
    comps = []
    for _ in range(grid.d):
        trig = random_trig(rng, grid.d, max_mode=max(2, grid.n // 8), n_modes=4)
        spatial = trig(*grid.meshes())
        comps.append(ScalarField(grid, env * spatial[np.newaxis]))
    return Current2Diffuse(VectorField(tuple(comps)))


def _pairing_roundtrip_error(rng, T: Current1Diffuse, T_back: Current1Diffuse, n_forms: int = 5) -> float:
    diff = T - T_back
    scale = max(mass(T), 1e-30)
    worst = 0.0
    for _ in range(n_forms):
        form = random_one_form(rng, T.grid.d, max_mode=3).normalized()
        worst = max(worst, abs(pair(diff, sample_one_form(form, T.grid))) / scale)
    return worst


def cmd_nullboundary_check(cfg: ExperimentConfig, out_dir: Path | None = None) -> tuple[dict, bool]:
    section = cfg.extras.get("nullboundary", {})
    n_instances = int(section.get("instances", 20))
    cap = int(section.get("variable_cap", 8192))
    lp_slack = float(cfg.tolerances.get("lp_slack", 1e-6))
    gap_tol = float(cfg.tolerances.get("max_relative_gap", 1e-6))
    roundtrip_tol = float(cfg.tolerances.get("max_roundtrip_error", 1e-8))

    grid = cfg.make_grid()
    rng = np.random.default_rng(cfg.seed)
    rows = []
    instances = []
    all_ok = True
    for i in range(n_instances):
        envelope = "quadratic" if i % 2 == 0 else "smooth"
        S0 = _random_two_current(rng, grid, envelope)
        T = boundary2(S0)
        vmass = vertical_mass(T)
        cert = flat_norm_lp(T, variable_cap=cap)
        lp_ok = cert.value <= vmass * (1.0 + lp_slack)
        gap_ok = cert.relative_gap <= gap_tol

        roundtrip = None
        roundtrip_ok = True
        if envelope == "quadratic":
            S_back = primitive_two_current(T)
            roundtrip = _pairing_roundtrip_error(rng, T, boundary2(S_back))
            roundtrip_ok = roundtrip <= roundtrip_tol

        inst_ok = bool(lp_ok and gap_ok and roundtrip_ok)
        all_ok = all_ok and inst_ok
        instances.append(
            {
                "envelope": envelope,
                "flat_norm": cert.value,
                "vertical_mass": vmass,
                "relative_gap": cert.relative_gap,
                "roundtrip_pairing_error": roundtrip,
                "ok": inst_ok,
            }
        )
        rows.append([i, cert.value, vmass, cert.relative_gap, -1.0 if roundtrip is None else roundtrip])

    # adversarial purely vertical instance: reported, not asserted
    ones = ScalarField.constant(grid, 1.0)
    T_adv = Current1Diffuse(ScalarField.zeros(grid), VectorField(tuple(ones for _ in range(grid.d))))
    cert_adv = flat_norm_lp(T_adv, variable_cap=cap)
    adversarial = {
        "flat_norm": cert_adv.value,
        "vertical_mass": vertical_mass(T_adv),
        "ratio": cert_adv.value / vertical_mass(T_adv),
    }

    report = {
        "command": "nullboundary-check",
        "grid": cfg.grid,
        "instances": instances,
        "adversarial_vertical": adversarial,
        "checks": {
            "lp_slack": lp_slack,
            "max_relative_gap": gap_tol,
            "max_roundtrip_error": roundtrip_tol,
        },
        "ok": all_ok,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(
            out_dir / "instances.csv",
            "instance,flat_norm,vertical_mass,relative_gap,roundtrip_error",
            rows,
        )
        _write_json(out_dir / "report.json", report)
    return report, all_ok


# ---------------------------------------------------------------------------
# push-forward battery
# ---------------------------------------------------------------------------


def cmd_pushforward_check(cfg: ExperimentConfig, out_dir: Path | None = None) -> tuple[dict, bool]:
    section = cfg.extras.get("pushforward", {})
    n_forms = int(section.get("n_forms", 20))
    duality_tol = float(cfg.tolerances.get("max_duality_error", 1e-4))
    commutation_tol = float(cfg.tolerances.get("max_commutation_error", 1e-4))
    mass_tol = float(cfg.tolerances.get("max_mass_error", 1e-3))

    grid = cfg.make_grid()
    prob = make_problem(cfg, grid)
    rho = solve_continuity(prob, "semi-lagrangian", substeps=cfg.flow["substeps"])
    kernel = _make_kernel(grid, cfg.kernel, cfg.kernel["delta"])
    T = regularized_current(rho, prob.u, kernel)
    u_delta = mollify_vector(prob.u, kernel)
    flow = compute_flow(u_delta, substeps=cfg.flow["substeps"])
    psi_inv = SpaceTimeDiffeo(flow, "inverse")
    psi = SpaceTimeDiffeo(flow, "forward")
    pushed = pushforward_current(psi_inv, T)
    scale = max(mass(T), 1e-30)

    rng = np.random.default_rng(cfg.seed)
    duality_errors = []
    for _ in range(n_forms):
        form = random_one_form(rng, grid.d, max_mode=3).normalized()
        sampled = sample_one_form(form, grid)
        lhs = pair(pushed, sampled)
        rhs = pair(T, pullback := _pullback(psi_inv, sampled))
        duality_errors.append(abs(lhs - rhs) / scale)
    duality_err = max(duality_errors)

    # boundary commutes with push-forward, tested at pairing level
    commutation_errors = []
    bT = boundary1(T)
    b_pushed = boundary1(pushed)
    for _ in range(n_forms):
        xi = random_test_function(rng, grid.d, max_mode=3, window=TimeWindow("interior", 0.12, 0.88))
        xi_sampled = xi.sample(grid)
        lhs = boundary_pair(b_pushed, xi_sampled)
        # <F_# dT, xi> = <dT, xi o F>, with xi o psi^{-1} evaluated analytically
        comp_vals = np.empty(grid.shape)
        for k in range(grid.n_t):
            comp_vals[k] = xi.value_at_points(
                k * grid.dt, np.mod(flow.inverse_positions[k], 1.0)
            ).reshape(grid.spatial_shape)
        rhs = boundary_pair(bT, ScalarField(grid, comp_vals))
        commutation_errors.append(abs(lhs - rhs) / scale)
    commutation_err = max(commutation_errors)

    rho_delta = mollify(rho, kernel)
    pushed_rho = pushforward_density(psi, rho_delta)
    norms_in = lp_norm(rho_delta, 1, mode="per-slice")
    norms_out = lp_norm(pushed_rho, 1, mode="per-slice")
    mass_err = float(np.max(np.abs(norms_out - norms_in) / np.maximum(norms_in, 1e-30)))

    ok = bool(duality_err <= duality_tol and commutation_err <= commutation_tol and mass_err <= mass_tol)
    report = {
        "command": "pushforward-check",
        "grid": cfg.grid,
        "delta": cfg.kernel["delta"],
        "duality_error": duality_err,
        "commutation_error": commutation_err,
        "density_mass_error": mass_err,
        "checks": {
            "max_duality_error": duality_tol,
            "max_commutation_error": commutation_tol,
            "max_mass_error": mass_tol,
        },
        "ok": ok,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "report.json", report)
    return report, ok


def _pullback(diffeo: SpaceTimeDiffeo, w: OneForm) -> OneForm:
    from .flow import pullback_form

    return pullback_form(diffeo, w)


# ---------------------------------------------------------------------------
# straightening battery
# ---------------------------------------------------------------------------


def _straighten_once(cfg: ExperimentConfig, grid: PeriodicGrid) -> dict:
    prob = make_problem(cfg, grid)
    rho = solve_continuity(prob, "semi-lagrangian", substeps=cfg.flow["substeps"])
    kernel = _make_kernel(grid, cfg.kernel, cfg.kernel["delta"])
    T = regularized_current(rho, prob.u, kernel)
    u_delta = mollify_vector(prob.u, kernel)
    flow = compute_flow(u_delta, substeps=cfg.flow["substeps"])
    _, defect = straighten(T, flow)
    return {
        "n": grid.n,
        "n_t": grid.n_t,
        "defect": defect,
        "mass": mass(T),
        "defect_fraction": defect / max(mass(T), 1e-30),
        "jacobian_identity_error": jacobian_identity_error(flow),
    }


def cmd_straighten_check(cfg: ExperimentConfig, out_dir: Path | None = None) -> tuple[dict, bool]:
    section = cfg.extras.get("straighten", {})
    refine = bool(section.get("refine", True))
    frac_tol = float(cfg.tolerances.get("max_defect_fraction", 1e-3))
    jac_tol = float(cfg.tolerances.get("max_jacobian_error", 1e-6))
    ratio_tol = float(cfg.tolerances.get("max_refinement_ratio", 0.65))

    grid = cfg.make_grid()
    base = _straighten_once(cfg, grid)
    result = {
        "command": "straighten-check",
        "delta": cfg.kernel["delta"],
        "base": base,
    }
    checks = {
        "defect_fraction_ok": base["defect_fraction"] <= frac_tol,
        "jacobian_ok": base["jacobian_identity_error"] <= jac_tol,
    }
    if refine:
        fine = _straighten_once(cfg, cfg.make_grid(n=2 * grid.n, n_t=2 * grid.n_t))
        ratio = fine["defect"] / max(base["defect"], 1e-300)
        result["refined"] = fine
        result["refinement_ratio"] = ratio
        checks["refinement_ok"] = ratio <= ratio_tol
    ok = all(checks.values())
    result["checks"] = checks | {
        "max_defect_fraction": frac_tol,
        "max_jacobian_error": jac_tol,
        "max_refinement_ratio": ratio_tol,
    }
    result["ok"] = ok
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "report.json", result)
    return result, ok


# ---------------------------------------------------------------------------
# flat norm of a stored current
# ---------------------------------------------------------------------------


def cmd_flatnorm_lp(cfg: ExperimentConfig, out_dir: Path | None = None) -> tuple[dict, bool]:
    section = cfg.extras.get("flatnorm", {})
    manifest = section.get("manifest")
    if not manifest:
        raise ConfigError("flatnorm-lp needs extras section 'flatnorm' with a 'manifest' path")
    cap = int(section.get("variable_cap", 8192))
    gap_tol = float(cfg.tolerances.get("max_relative_gap", 1e-6))

    kind, grid, fields = tcio.read_current_manifest(manifest)
    if kind != "current1":
        raise ConfigError(f"manifest holds {kind!r}, expected a 1-current")
    comps = tuple(fields[f"f{j + 1}"] for j in range(grid.d))
    T = Current1Diffuse(fields["ft"], VectorField(comps))
    cert = flat_norm_lp(T, variable_cap=cap)
    ok = cert.relative_gap <= gap_tol
    report = {
        "command": "flatnorm-lp",
        "manifest": str(manifest),
        "certificate": cert.to_json_dict(),
        "checks": {"max_relative_gap": gap_tol, "gap_ok": ok},
        "ok": ok,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "certificate.json", report)
    return report, ok


# ---------------------------------------------------------------------------
# end-to-end uniqueness bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniquenessRow:
    delta: float
    bound1: float
    bound2: float
    bound3: float
    total: float
    mass_r: float
    rtilde_mismatch: float
    straighten_defect: float

    def to_json_dict(self) -> dict:
        return {
            "delta": self.delta,
            "bound1": self.bound1,
            "bound2": self.bound2,
            "bound3": self.bound3,
            "total": self.total,
            "mass_r": self.mass_r,
            "rtilde_mismatch": self.rtilde_mismatch,
            "straighten_defect": self.straighten_defect,
        }


def _uniqueness_at_resolution(cfg: ExperimentConfig, n: int) -> dict:
    grid = cfg.make_grid(n=n, n_t=n)
    prob = make_problem(cfg, grid)
    rho_sl = solve_continuity(prob, "semi-lagrangian", substeps=cfg.flow["substeps"])
    rho_fv = solve_continuity(prob, "finite-volume")
    sigma = rho_sl - rho_fv
    D = difference_current(sigma, prob.u)
    boundary_defect = boundary_mass(boundary1(D))

    rows = []
    for delta in cfg.delta_list:
        if delta < 2.0 * grid.h:
            continue
        kernel = _make_kernel(grid, cfg.kernel, delta)
        D_delta = regularized_current(sigma, prob.u, kernel)
        b_delta = boundary1(D_delta)
        r_norm = lp_norm(b_delta.interior, 1)
        R = horizontal_from_boundary(b_delta)
        bound3 = r_norm
        bound1 = vertical_mass(D - D_delta + R)

        u_delta = mollify_vector(prob.u, kernel)
        flow = compute_flow(u_delta, substeps=cfg.flow["substeps"])
        H, s_defect = straighten(D_delta, flow)
        rt = boundary1(H)
        rtilde_norm = lp_norm(rt.interior, 1)
        mismatch = abs(rtilde_norm - r_norm) / max(r_norm, 1e-30)
        P = horizontal_from_boundary(rt)
        Q = pushforward_current(SpaceTimeDiffeo(flow, "forward"), P)
        bound2 = flat_bound_constructive(D_delta, None, Q).value

        rows.append(
            UniquenessRow(
                delta=float(delta),
                bound1=float(bound1),
                bound2=float(bound2),
                bound3=float(bound3),
                total=float(bound1 + bound2 + bound3),
                mass_r=float(mass(R)),
                rtilde_mismatch=float(mismatch),
                straighten_defect=float(s_defect),
            )
        )
    if not rows:
        raise ConfigError(f"no admissible delta for n={n} (need delta >= {2.0 * grid.h})")
    best = min(rows, key=lambda r: r.total)
    return {
        "n": n,
        "n_t": n,
        "boundary_defect_D": float(boundary_defect),
        "mass_D": float(mass(D)),
        "rows": rows,
        "best_delta": best.delta,
        "best_total": best.total,
        "_D": D,
    }


def cmd_uniqueness(cfg: ExperimentConfig, out_dir: Path | None = None) -> tuple[dict, bool]:
    section = cfg.extras.get("uniqueness", {})
    resolutions = [int(x) for x in section.get("resolutions", [128, 256, 512])]
    lp_n = section.get("lp_crosscheck_n", None)

    blocks = []
    for n in resolutions:
        blocks.append(_uniqueness_at_resolution(cfg, n))
    totals = [b["best_total"] for b in blocks]
    monotone = all(b < a for a, b in zip(totals, totals[1:]))

    lp_block = None
    lp_ok = True
    if lp_n:
        lp_res = _uniqueness_at_resolution(cfg, int(lp_n))
        cert = flat_norm_lp(lp_res["_D"], variable_cap=int(section.get("variable_cap", 8192)))
        lp_ok = cert.value <= lp_res["best_total"]
        lp_block = {
            "n": int(lp_n),
            "flat_norm_lp": cert.value,
            "best_total": lp_res["best_total"],
            "relative_gap": cert.relative_gap,
            "bound_ok": lp_ok,
        }

    ok = bool(monotone and lp_ok)
    report = {
        "command": "uniqueness",
        "resolutions": [
            {k: v for k, v in b.items() if k != "_D"}
            | {"rows": [r.to_json_dict() for r in b["rows"]]}
            for b in blocks
        ],
        "best_totals": totals,
        "refinement_monotone": monotone,
        "lp_crosscheck": lp_block,
        "ok": ok,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for b in blocks:
            _write_csv(
                out_dir / f"bounds_n{b['n']}.csv",
                "delta,bound1,bound2,bound3,total",
                [[r.delta, r.bound1, r.bound2, r.bound3, r.total] for r in b["rows"]],
            )
        _write_json(out_dir / "report.json", report)
    return report, ok


COMMANDS = {
    "commutator-sweep": cmd_commutator_sweep,
    "nullboundary-check": cmd_nullboundary_check,
    "pushforward-check": cmd_pushforward_check,
    "straighten-check": cmd_straighten_check,
    "flatnorm-lp": cmd_flatnorm_lp,
    "uniqueness": cmd_uniqueness,
}
