"""Analytic space-time test functions and one-forms.

Duality checks (boundary identities, push-forward pairing, weak residuals of
the transport equation) need smooth test data that can be evaluated exactly at
arbitrary points, not just on the lattice. The classes here combine a smooth
compactly supported time window with a real trigonometric polynomial in space,
so values, time derivatives and gradients are all closed-form.

Window kinds:
  "initial"   equals 1 near t=0 and decays smoothly to 0 before t=1; the
              admissible class for testing distributional solutions on [0,1).
  "interior"  vanishes identically near both ends; with at least three zero
              slices per end the discrete time integration by parts is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PeriodicGrid, ScalarField, VectorField


def _exp_bump(s: np.ndarray) -> np.ndarray:
    """exp(-1/(s(1-s))) on (0,1), zero outside; C^inf on the line."""
    s = np.asarray(s, dtype=np.float64)
    inside = (s > 0.0) & (s < 1.0)
    out = np.zeros_like(s)
    ss = np.where(inside, s * (1.0 - s), 1.0)
    out[inside] = np.exp(-1.0 / ss[inside])
    return out


def _exp_bump_derivative(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    inside = (s > 0.0) & (s < 1.0)
    out = np.zeros_like(s)
    ss = np.where(inside, s * (1.0 - s), 1.0)
    out[inside] = np.exp(-1.0 / ss[inside]) * (1.0 - 2.0 * s[inside]) / ss[inside] ** 2
    return out


def _smoothstep_down(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """C^inf monotone step from 1 (s<=0) to 0 (s>=1) with its derivative."""
    s = np.asarray(s, dtype=np.float64)
    g1 = np.zeros_like(s)
    g2 = np.zeros_like(s)
    pos = s > 0.0
    neg = 1.0 - s > 0.0
    g1[pos] = np.exp(-1.0 / s[pos])
    g2[neg] = np.exp(-1.0 / (1.0 - s[neg]))
    denom = g1 + g2
    val = np.where(s <= 0.0, 1.0, np.where(s >= 1.0, 0.0, g2 / np.where(denom == 0, 1.0, denom)))
    mid = pos & neg
    dval = np.zeros_like(s)
    # d/ds [g2/(g1+g2)] with g1' = g1/s^2, g2' = -g2/(1-s)^2
    g1p = np.zeros_like(s)
    g2p = np.zeros_like(s)
    g1p[mid] = g1[mid] / s[mid] ** 2
    g2p[mid] = -g2[mid] / (1.0 - s[mid]) ** 2
    dval[mid] = (g2p[mid] * g1[mid] - g2[mid] * g1p[mid]) / denom[mid] ** 2
    return val, dval


@dataclass(frozen=True)
class TimeWindow:
    kind: str  # "initial" | "interior" | "one"
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("initial", "interior", "one"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.kind != "one" and not 0.0 <= self.a < self.b <= 1.0:
            raise ValueError("window needs 0 <= a < b <= 1")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "one":
            return np.ones_like(t)
        if self.kind == "initial":
            val, _ = _smoothstep_down((t - self.a) / (self.b - self.a))
            return val
        s = (t - self.a) / (self.b - self.a)
        return _exp_bump(s) * np.exp(4.0)  # peak normalized to 1

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "one":
            return np.zeros_like(t)
        scale = 1.0 / (self.b - self.a)
        if self.kind == "initial":
            _, dval = _smoothstep_down((t - self.a) / (self.b - self.a))
            return dval * scale
        s = (t - self.a) / (self.b - self.a)
        return _exp_bump_derivative(s) * np.exp(4.0) * scale


@dataclass(frozen=True)
class TrigPolynomial:
    """Real trigonometric polynomial sum_m a_m cos(2 pi k_m . x + phi_m)."""

    wavevectors: np.ndarray  # (m, d) integers
    amplitudes: np.ndarray  # (m,)
    phases: np.ndarray  # (m,)

    def __post_init__(self) -> None:
        k = np.asarray(self.wavevectors, dtype=np.int64)
        if k.ndim != 2:
            raise ValueError("wavevectors must be (m, d)")
        object.__setattr__(self, "wavevectors", k)
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=np.float64))
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=np.float64))

    @property
    def d(self) -> int:
        return self.wavevectors.shape[1]

    def __call__(self, *coords) -> np.ndarray:
        phase = self._phase_array(coords)
        return np.tensordot(np.cos(phase), self.amplitudes, axes=([0], [0]))

    def partial(self, axis: int, *coords) -> np.ndarray:
        phase = self._phase_array(coords)
        coef = -2.0 * np.pi * self.amplitudes * self.wavevectors[:, axis]
        return np.tensordot(np.sin(phase), coef, axes=([0], [0]))

    def _phase_array(self, coords) -> np.ndarray:
        coords = [np.asarray(c, dtype=np.float64) for c in coords]
        shape = np.broadcast_shapes(*[c.shape for c in coords])
        phase = np.zeros((len(self.amplitudes),) + shape)
        for m in range(len(self.amplitudes)):
            acc = np.full(shape, self.phases[m])
            for j, c in enumerate(coords):
                acc = acc + 2.0 * np.pi * self.wavevectors[m, j] * c
            phase[m] = acc
        return phase


def random_trig(rng: np.random.Generator, d: int, max_mode: int, n_modes: int = 4, scale: float = 1.0) -> TrigPolynomial:
    ks = np.zeros((n_modes, d), dtype=np.int64)
    for m in range(n_modes):
        while True:
            k = rng.integers(-max_mode, max_mode + 1, size=d)
            if np.any(k != 0):
                ks[m] = k
                break
    amps = rng.normal(size=n_modes) * (scale / np.sqrt(n_modes))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)
    return TrigPolynomial(ks, amps, phases)


@dataclass(frozen=True)
class SpaceTimeTestFunction:
    """Separable smooth test function w(t) * P(x) with analytic derivatives."""

    window: TimeWindow
    spatial: TrigPolynomial
    offset: float = 0.0  # additive constant on the spatial part

    def value(self, t, *coords) -> np.ndarray:
        return np.asarray(self.window(t)) * (self.spatial(*coords) + self.offset)

    def dt(self, t, *coords) -> np.ndarray:
        return np.asarray(self.window.derivative(t)) * (self.spatial(*coords) + self.offset)

    def partial(self, axis: int, t, *coords) -> np.ndarray:
        return np.asarray(self.window(t)) * self.spatial.partial(axis, *coords)

    def value_at_points(self, t: float, points: np.ndarray) -> np.ndarray:
        coords = [points[:, j] for j in range(points.shape[1])]
        return self.value(t, *coords)

    def sample(self, grid: PeriodicGrid) -> ScalarField:
        return ScalarField.from_function(grid, lambda t, *xs: self.value(t, *xs))

    def sample_dt(self, grid: PeriodicGrid) -> ScalarField:
        return ScalarField.from_function(grid, lambda t, *xs: self.dt(t, *xs))

    def sample_gradient(self, grid: PeriodicGrid) -> VectorField:
        comps = []
        for j in range(grid.d):
            comps.append(
                ScalarField.from_function(grid, lambda t, *xs, j=j: self.partial(j, t, *xs))
            )
        return VectorField(tuple(comps))

    def sup_bound(self) -> float:
        """Crude sup bound: sum of |amplitudes| plus the offset."""
        return float(np.sum(np.abs(self.spatial.amplitudes)) + abs(self.offset))


def random_test_function(
    rng: np.random.Generator,
    d: int,
    max_mode: int = 3,
    window: TimeWindow | None = None,
    offset: float = 0.0,
) -> SpaceTimeTestFunction:
    if window is None:
        window = TimeWindow("initial", 0.45, 0.9)
    return SpaceTimeTestFunction(window, random_trig(rng, d, max_mode), offset)


@dataclass(frozen=True)
class AnalyticOneForm:
    """One-form tau dt + xi^j dx_j with analytic separable components."""

    tau: SpaceTimeTestFunction
    xis: tuple[SpaceTimeTestFunction, ...]

    @property
    def d(self) -> int:
        return len(self.xis)

    def normalized(self) -> "AnalyticOneForm":
        """Rescale every component so its sup bound is at most 1."""

        def norm_one(f: SpaceTimeTestFunction) -> SpaceTimeTestFunction:
            bound = max(f.sup_bound(), 1e-30)
            sp = TrigPolynomial(
                f.spatial.wavevectors, f.spatial.amplitudes / bound, f.spatial.phases
            )
            return SpaceTimeTestFunction(f.window, sp, f.offset / bound)

        return AnalyticOneForm(norm_one(self.tau), tuple(norm_one(x) for x in self.xis))


def random_one_form(
    rng: np.random.Generator,
    d: int,
    max_mode: int = 3,
    window: TimeWindow | None = None,
) -> AnalyticOneForm:
    if window is None:
        window = TimeWindow("interior", 0.12, 0.88)
    tau = random_test_function(rng, d, max_mode, window)
    xis = tuple(random_test_function(rng, d, max_mode, window) for _ in range(d))
    return AnalyticOneForm(tau, xis)
