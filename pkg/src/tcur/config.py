"""Experiment configuration: JSON schema, validation, problem builders.

Configs are JSON files with a required integer ``schema_version`` (currently
1). Validation happens entirely before any numerical work; violations raise
ConfigError, which the CLI maps to exit code 3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import NormExponents, PeriodicGrid, ScalarField, VectorField
from .pde import ContinuityProblem, RoughFieldSpec, rough_field

SCHEMA_VERSION = 1

VELOCITY_KINDS = ("zero", "constant", "sine", "stream", "rough")
RHO0_KINDS = ("constant", "cosine", "bump", "random-trig")


class ConfigError(ValueError):
    """A configuration file violates the schema."""


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _get(d: dict, key: str, types, default=None, required: bool = False):
    if key not in d:
        _expect(not required, f"missing required key {key!r}")
        return default
    val = d[key]
    _expect(isinstance(val, types), f"key {key!r} has wrong type {type(val).__name__}")
    return val


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int
    seed: int
    grid: dict
    problem: dict
    kernel: dict
    delta_list: tuple[float, ...]
    flow: dict
    tolerances: dict
    out: str | None
    extras: dict = field(default_factory=dict)

    def make_grid(self, n: int | None = None, n_t: int | None = None) -> PeriodicGrid:
        return PeriodicGrid(
            d=self.grid["d"],
            n=n if n is not None else self.grid["n"],
            n_t=n_t if n_t is not None else self.grid["n_t"],
        )


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def validate_config(raw: dict) -> ExperimentConfig:
    _expect(isinstance(raw, dict), "config must be a JSON object")
    version = _get(raw, "schema_version", int, required=True)
    _expect(version == SCHEMA_VERSION, f"unsupported schema_version {version}")

    seed = _get(raw, "seed", int, default=0)

    grid = _get(raw, "grid", dict, default={"d": 1, "n": 64, "n_t": 64})
    d = _get(grid, "d", int, default=1)
    n = _get(grid, "n", int, required=True)
    n_t = _get(grid, "n_t", int, default=n)
    _expect(d in (1, 2), f"grid.d must be 1 or 2, got {d}")
    _expect(n >= 8 and (n & (n - 1)) == 0, f"grid.n must be a power of two >= 8, got {n}")
    _expect(n_t >= 8, f"grid.n_t must be >= 8, got {n_t}")
    grid = {"d": d, "n": n, "n_t": n_t}

    problem = _get(raw, "problem", dict, default={})
    vel = _get(problem, "velocity", dict, default={"kind": "sine", "mean": 0.5, "amplitude": 0.25, "mode": 1})
    _expect(_get(vel, "kind", str, required=True) in VELOCITY_KINDS, f"velocity.kind must be one of {VELOCITY_KINDS}")
    rho0 = _get(problem, "rho0", dict, default={"kind": "cosine", "mean": 1.0, "amplitude": 0.5, "mode": 1})
    _expect(_get(rho0, "kind", str, required=True) in RHO0_KINDS, f"rho0.kind must be one of {RHO0_KINDS}")
    expo = _get(problem, "exponents", dict, default={"p": 2.0, "q": 2.0})
    try:
        NormExponents(float(expo.get("p", 2.0)), float(expo.get("q", 2.0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    problem = {"velocity": vel, "rho0": rho0, "exponents": expo}

    kernel = _get(raw, "kernel", dict, default={"profile": "bump", "delta": 0.1})
    profile = _get(kernel, "profile", str, default="bump")
    _expect(profile in ("bump", "csv"), f"kernel.profile must be 'bump' or 'csv', got {profile!r}")
    if profile == "csv":
        _expect("path" in kernel, "kernel.profile 'csv' requires kernel.path")
    kdelta = _get(kernel, "delta", (int, float), default=0.1)
    _expect(0.0 < float(kdelta) < 0.5, f"kernel.delta must lie in (0, 1/2), got {kdelta}")

    delta_list = _get(raw, "delta_list", list, default=[float(kdelta)])
    _expect(len(delta_list) >= 1, "delta_list must be nonempty")
    deltas = []
    h = 1.0 / n
    for x in delta_list:
        _expect(isinstance(x, (int, float)), "delta_list entries must be numbers")
        _expect(0.0 < float(x) < 0.5, f"delta {x} outside (0, 1/2)")
        _expect(float(x) >= 2.0 * h, f"delta {x} under-resolved for n={n} (needs >= {2.0 * h})")
        deltas.append(float(x))
    _expect(all(b < a for a, b in zip(deltas, deltas[1:])), "delta_list must be strictly decreasing")

    flow = _get(raw, "flow", dict, default={})
    substeps = _get(flow, "substeps", int, default=4)
    _expect(substeps >= 1, "flow.substeps must be positive")
    flow = {"substeps": substeps}

    tolerances = _get(raw, "tolerances", dict, default={})
    out = _get(raw, "out", str, default=None)

    known = {
        "schema_version", "seed", "grid", "problem", "kernel", "delta_list",
        "flow", "tolerances", "out", "command",
    }
    extras = {}
    for key, val in raw.items():
        if key not in known:
            _expect(isinstance(val, dict), f"unknown top-level key {key!r} (sections must be objects)")
            extras[key] = val

    return ExperimentConfig(
        schema_version=version,
        seed=seed,
        grid=grid,
        problem=problem,
        kernel=kernel | {"delta": float(kdelta)},
        delta_list=tuple(deltas),
        flow=flow,
        tolerances=dict(tolerances),
        out=out,
        extras=extras,
    )


def load_and_validate(path) -> ExperimentConfig:
    return validate_config(load_config(path))


# ---------------------------------------------------------------------------
# problem builders
# ---------------------------------------------------------------------------


def make_velocity(grid: PeriodicGrid, vcfg: dict, seed: int) -> VectorField:
    kind = vcfg["kind"]
    if kind == "zero":
        return VectorField.zeros(grid)
    if kind == "constant":
        value = vcfg.get("value", [0.5] * grid.d)
        return VectorField.constant(grid, value)
    if kind == "sine":
        mean = float(vcfg.get("mean", 0.5))
        amp = float(vcfg.get("amplitude", 0.25))
        mode = int(vcfg.get("mode", 1))
        comps = []
        for i in range(grid.d):
            axis = (i + 1) % grid.d if grid.d > 1 else 0
            comps.append(
                ScalarField.from_function(
                    grid, lambda t, *xs, a=axis: mean + amp * np.sin(2 * np.pi * mode * xs[a])
                )
            )
        return VectorField(tuple(comps))
    if kind == "stream":
        _expect(grid.d == 2, "velocity.kind 'stream' needs d=2")
        amp = float(vcfg.get("amplitude", 0.25))
        mode = int(vcfg.get("mode", 1))
        # u = (d_y phi, -d_x phi) for phi = amp sin(2 pi m x) sin(2 pi m y): divergence-free
        u0 = ScalarField.from_function(
            grid,
            lambda t, x, y: amp * 2 * np.pi * mode * np.sin(2 * np.pi * mode * x) * np.cos(2 * np.pi * mode * y),
        )
        u1 = ScalarField.from_function(
            grid,
            lambda t, x, y: -amp * 2 * np.pi * mode * np.cos(2 * np.pi * mode * x) * np.sin(2 * np.pi * mode * y),
        )
        return VectorField((u0, u1))
    if kind == "rough":
        spec = RoughFieldSpec(
            p=float(vcfg.get("p", 2.0)),
            decay_alpha=float(vcfg.get("decay_alpha", 1.75)),
            seed=int(vcfg.get("seed", seed)),
            mode_cap=int(vcfg.get("mode_cap", 64)),
            construction=vcfg.get("construction", "plain"),
            amplitude=float(vcfg.get("amplitude", 0.25)),
            mean=float(vcfg.get("mean", 0.5)),
        )
        return rough_field(spec, grid)
    raise ConfigError(f"unknown velocity kind {kind!r}")


def make_rho0(grid: PeriodicGrid, rcfg: dict, seed: int) -> np.ndarray:
    kind = rcfg["kind"]
    meshes = grid.meshes()
    if kind == "constant":
        return np.full(grid.spatial_shape, float(rcfg.get("value", 1.0)))
    if kind == "cosine":
        mean = float(rcfg.get("mean", 1.0))
        amp = float(rcfg.get("amplitude", 0.5))
        mode = int(rcfg.get("mode", 1))
        return mean + amp * np.cos(2 * np.pi * mode * meshes[0])
    if kind == "bump":
        center = rcfg.get("center", [0.5] * grid.d)
        width = float(rcfg.get("width", 0.2))
        height = float(rcfg.get("height", 1.0))
        r2 = sum(((m - c) / width) ** 2 for m, c in zip(meshes, center))
        out = np.zeros(grid.spatial_shape)
        inside = r2 < 1.0
        out[inside] = height * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out
    if kind == "random-trig":
        rng = np.random.default_rng(int(rcfg.get("seed", seed)))
        mean = float(rcfg.get("mean", 1.0))
        out = np.full(grid.spatial_shape, mean)
        for _ in range(int(rcfg.get("n_modes", 3))):
            k = rng.integers(1, int(rcfg.get("max_mode", 3)) + 1, size=grid.d)
            amp = rng.normal() * float(rcfg.get("amplitude", 0.3))
            phase = rng.uniform(0, 2 * np.pi)
            out = out + amp * np.cos(2 * np.pi * sum(k[j] * meshes[j] for j in range(grid.d)) + phase)
        return out
    raise ConfigError(f"unknown rho0 kind {kind!r}")


def make_problem(cfg: ExperimentConfig, grid: PeriodicGrid | None = None) -> ContinuityProblem:
    g = grid if grid is not None else cfg.make_grid()
    u = make_velocity(g, cfg.problem["velocity"], cfg.seed)
    rho0 = make_rho0(g, cfg.problem["rho0"], cfg.seed)
    expo = cfg.problem["exponents"]
    return ContinuityProblem(u, rho0, NormExponents(float(expo.get("p", 2.0)), float(expo.get("q", 2.0))))
