"""Ground-truth trajectory generation and measurement synthesis.

Truth: per step, bus voltages come from an AC power-flow solve at the
scheduled loads/generations, GTU gas offtakes follow the scheduled outputs
through the conversion coefficient, and the gas state advances through the
pipeline transition driven by the true boundary values.  Measurements add
per-channel random errors (Gaussian, biased Gaussian, Laplace, or Cauchy)
on top of the noiseless channel values; everything is reproducible from
(scenario, noise, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ModelError
from .estimator import ChannelSpec, MeasurementSet, measurement_matrix
from .gas import GasSystemMatrices, build_input, solve_steady_state, step_gas
from .model import IgesModel
from .power import solve_power_flow


# ---------------------------------------------------------------------------
# Profiles and scenario specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileShape:
    """Piecewise-linear multiplier over the horizon fraction plus an optional
    per-step random wobble (relative standard deviation)."""

    points: tuple[tuple[float, float], ...] = ((0.0, 1.0), (1.0, 1.0))
    wobble: float = 0.0

    def value(self, frac: float) -> float:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return float(np.interp(frac, xs, ys))


@dataclass(frozen=True)
class GtuSchedule:
    base_mw: float
    shape: ProfileShape = ProfileShape()


@dataclass(frozen=True)
class ScenarioSpec:
    steps: int
    seed: int = 0
    power_load: ProfileShape = ProfileShape()
    gas_load: ProfileShape = ProfileShape()
    gtu_output: Mapping[int, GtuSchedule] = field(default_factory=dict)
    wobble_overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 2:
            raise ConfigError(f"scenario needs at least 2 steps, "
                              f"got {self.steps}")


def _wobble_factor(spec: ScenarioSpec, key: str) -> float:
    return float(spec.wobble_overrides.get(key, 1.0))


def _gtu_schedule(model: IgesModel, spec: ScenarioSpec, bus: int) -> GtuSchedule:
    if bus in spec.gtu_output:
        return spec.gtu_output[bus]
    gen_p = model.bus(bus).gen_p
    if gen_p is None:
        raise ConfigError(f"GTU bus {bus} has no generator and no schedule")
    return GtuSchedule(base_mw=gen_p)


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruthResult:
    """Noise-free joint trajectory in the integrated state layout."""

    states: np.ndarray        # (steps, 2 n_B + n_N + 2 n_P)
    state_names: tuple[str, ...]
    sink_loads: np.ndarray    # (steps, n_sinks) in matrices.sink_ids order
    gtu_power: np.ndarray     # (steps, n_gtus) MW in model.gtus order
    power_iterations: tuple[int, ...]

    @property
    def steps(self) -> int:
        return self.states.shape[0]


def generate_truth(model: IgesModel, matrices: GasSystemMatrices,
                   spec: ScenarioSpec) -> TruthResult:
    """Simulate the coupled system over the horizon.

    Step 0 starts from the gas steady state at the initial offtakes; every
    step solves the power flow at the scheduled injections.  Power-flow
    divergence is reported with the failing step index.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(2)[0])
    steps = spec.steps
    n_pow = model.power_state_dim
    n_gas = matrices.n_states
    states = np.zeros((steps, n_pow + n_gas))
    sink_loads = np.zeros((steps, len(matrices.sink_ids)))
    gtu_power = np.zeros((steps, len(model.gtus)))
    iterations = []

    gtu_by_node = {g.gas_node: g for g in model.gtus}
    load_buses = [b for b in model.buses if b.has_load]
    load_sinks = [model.gas_node(nid) for nid in model.load_sink_ids()
                  if nid not in gtu_by_node]
    gen_buses = [b for b in model.buses
                 if b.gen_p is not None and not b.slack]
    gtu_bus_ids = {g.bus for g in model.gtus}
    denom = max(steps - 1, 1)

    x_gas = None
    for t in range(steps):
        frac = t / denom
        p_mult = spec.power_load.value(frac)
        g_mult = spec.gas_load.value(frac)

        loads = {}
        for b in load_buses:
            w = 1.0 + spec.power_load.wobble * \
                _wobble_factor(spec, f"bus_{b.id}") * rng.standard_normal()
            loads[b.id] = (b.load_p * p_mult * w, b.load_q * p_mult * w)
        generations = {}
        for b in gen_buses:
            if b.id in gtu_bus_ids:
                continue
            generations[b.id] = (b.gen_p * p_mult, b.gen_v)
        for k, g in enumerate(model.gtus):
            sched = _gtu_schedule(model, spec, g.bus)
            p_mw = sched.base_mw * sched.shape.value(frac)
            gtu_power[t, k] = p_mw
            generations[g.bus] = (p_mw, model.bus(g.bus).gen_v)

        try:
            flow = solve_power_flow(model, loads=loads, generations=generations)
        except Exception as exc:
            raise type(exc)(f"step {t}: {exc}") from exc
        states[t, :n_pow] = flow.states
        iterations.append(flow.iterations)

        offtakes = {}
        for node in load_sinks:
            w = 1.0 + spec.gas_load.wobble * \
                _wobble_factor(spec, f"gas_{node.id}") * rng.standard_normal()
            offtakes[node.id] = node.load * g_mult * w
        for k, g in enumerate(model.gtus):
            offtakes[g.gas_node] = gtu_power[t, k] / g.eta

        if t == 0:
            x_gas = solve_steady_state(matrices, offtakes)
        else:
            u = build_input(matrices, offtakes)
            x_gas = step_gas(matrices, x_gas, u)
        states[t, n_pow:] = x_gas
        sink_loads[t] = [offtakes.get(nid, 0.0) for nid in matrices.sink_ids]

    names = model.power_state_names() + matrices.state_names()
    return TruthResult(states=states, state_names=names,
                       sink_loads=sink_loads, gtu_power=gtu_power,
                       power_iterations=tuple(iterations))


def nominal_initial_loads(model: IgesModel, spec: ScenarioSpec) -> dict[int, float]:
    """Scheduled sink offtakes at step 0, without wobble.  This is what the
    estimator is allowed to know when it initializes the gas state."""
    gtu_by_node = {g.gas_node: g for g in model.gtus}
    out: dict[int, float] = {}
    for nid in model.load_sink_ids():
        if nid in gtu_by_node:
            g = gtu_by_node[nid]
            sched = _gtu_schedule(model, spec, g.bus)
            out[nid] = sched.base_mw * sched.shape.value(0.0) / g.eta
        else:
            out[nid] = model.gas_node(nid).load * spec.gas_load.value(0.0)
    return out


# ---------------------------------------------------------------------------
# Noise synthesis
# ---------------------------------------------------------------------------

DISTRIBUTIONS = ("gaussian", "gaussian-biased", "laplace", "cauchy")

_KIND_CLASS = {"v": "voltage", "ib": "current", "in": "current",
               "pressure": "pressure", "gas_flow": "gas_flow"}

_NOMINAL_FLOORS = {"voltage": 1.0, "current": 0.1, "pressure": 1.0,
                   "gas_flow": 1.0}


@dataclass(frozen=True)
class ChannelNoise:
    dist: str = "gaussian"
    scale: float | tuple[float, float] = 0.02

    def __post_init__(self):
        if self.dist not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution '{self.dist}'")
        scales = self.scale if isinstance(self.scale, tuple) else (self.scale,)
        if any(s < 0.0 for s in scales):
            raise ConfigError(f"noise scale must be non-negative, "
                              f"got {self.scale}")


@dataclass(frozen=True)
class NoiseConfig:
    voltage: ChannelNoise = ChannelNoise()
    current: ChannelNoise = ChannelNoise()
    pressure: ChannelNoise = ChannelNoise(scale=(0.005, 0.02))
    gas_flow: ChannelNoise = ChannelNoise()
    bias: Mapping[str, float] = field(default_factory=dict)

    def for_class(self, cls: str) -> ChannelNoise:
        return getattr(self, cls)


def attach_noise(channels: Sequence[ChannelSpec], noise: NoiseConfig,
                 z_true0: np.ndarray) -> tuple[ChannelSpec, ...]:
    """Fill per-channel sigma/nominal/dist/bias from the noise configuration.

    Relative scales refer to a fixed nominal magnitude per channel: 1.0 p.u.
    for voltages and the initial true value (floored) for everything else,
    which keeps the filter's measurement covariance time-invariant.  A
    (lo, hi) scale range is spread evenly over the channels of that class.
    """
    per_class_count: dict[str, int] = {}
    for ch in channels:
        cls = _KIND_CLASS[ch.kind]
        per_class_count[cls] = per_class_count.get(cls, 0) + 1
    class_seen: dict[str, int] = {}
    out = []
    for i, ch in enumerate(channels):
        cls = _KIND_CLASS[ch.kind]
        cfg = noise.for_class(cls)
        k = class_seen.get(cls, 0)
        class_seen[cls] = k + 1
        if isinstance(cfg.scale, tuple):
            n = per_class_count[cls]
            lo, hi = cfg.scale
            scale = lo if n == 1 else lo + (hi - lo) * k / (n - 1)
        else:
            scale = cfg.scale
        if cls == "voltage":
            nominal = 1.0
        else:
            nominal = max(abs(float(z_true0[i])), _NOMINAL_FLOORS[cls])
        out.append(replace(ch, sigma=scale * nominal, nominal=nominal,
                           dist=cfg.dist, bias=float(noise.bias.get(ch.name, 0.0))))
    return tuple(out)


def _sample_errors(rng: np.random.Generator, ch: ChannelSpec,
                   steps: int) -> np.ndarray:
    if ch.dist in ("gaussian", "gaussian-biased"):
        err = ch.sigma * rng.standard_normal(steps)
    elif ch.dist == "laplace":
        err = rng.laplace(0.0, ch.sigma, steps) if ch.sigma > 0 \
            else np.zeros(steps)
    elif ch.dist == "cauchy":
        # inverse-CDF transform of uniform draws
        err = ch.sigma * np.tan(np.pi * (rng.random(steps) - 0.5))
    else:
        raise ConfigError(f"unknown distribution '{ch.dist}'")
    return err + ch.bias


def synthesize_measurements(truth: TruthResult, channels: Sequence[ChannelSpec],
                            h: np.ndarray, dt: float, seed: int,
                            ) -> MeasurementSet:
    """z = H x_true + per-channel error, deterministic under a fixed seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    z_true = truth.states @ h.T
    z = np.empty_like(z_true)
    for i, ch in enumerate(channels):
        z[:, i] = z_true[:, i] + _sample_errors(rng, ch, truth.steps)
    return MeasurementSet(z=z, channels=tuple(channels), dt=dt)


# ---------------------------------------------------------------------------
# Bad data injection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BadDataEntry:
    channel: str
    start: int
    stop: int                     # inclusive
    magnitude_sigma: float | None = None   # in multiples of the channel sigma
    magnitude_abs: float | None = None     # in channel units

    def __post_init__(self):
        if (self.magnitude_sigma is None) == (self.magnitude_abs is None):
            raise ConfigError(f"bad data on '{self.channel}': give exactly one "
                              f"of magnitude_sigma / magnitude_abs")
        if self.start > self.stop or self.start < 0:
            raise ConfigError(f"bad data on '{self.channel}': invalid step "
                              f"range [{self.start}, {self.stop}]")


@dataclass(frozen=True)
class BadDataSpec:
    entries: tuple[BadDataEntry, ...] = ()


def inject_bad_data(measurements: MeasurementSet,
                    spec: BadDataSpec) -> MeasurementSet:
    """Add the configured spikes; only the listed (channel, step) cells are
    altered, everything else stays bit-identical."""
    if not spec.entries:
        return measurements
    z = measurements.z.copy()
    for entry in spec.entries:
        col = measurements.index(entry.channel)
        if entry.stop >= measurements.steps:
            raise ConfigError(f"bad data on '{entry.channel}': step "
                              f"{entry.stop} beyond horizon "
                              f"{measurements.steps}")
        ch = measurements.channels[col]
        if entry.magnitude_sigma is not None:
            delta = entry.magnitude_sigma * ch.sigma
        else:
            delta = entry.magnitude_abs
        z[entry.start:entry.stop + 1, col] += delta
    return replace(measurements, z=z)
