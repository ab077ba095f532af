"""Integrated dynamic state estimation.

Builds the joint system model (exponential-smoothing dynamics over the power
block, the pipeline transition over the gas block, block-diagonal measurement
matrix), and runs the Kalman filter with an optional time-varying diagonal
scaling of the measurement covariance that suppresses bad data: the scaling
for each channel is the excess of the windowed innovation sample variance
over the predicted innovation variance, divided by the nominal channel
variance, clamped from below at one.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from threadpoolctl import threadpool_limits

from .coupling import build_boundary_input
from .errors import EstimationError, ModelError
from .gas import GasSystemMatrices, sink_loads_from_state, solve_steady_state
from .model import BAR, IgesModel, build_ybus
from .power import (DEFAULT_ALPHA, DEFAULT_BETA, HoltState, PmuMeasurementModel,
                    holt_observe, holt_predict)

DEFAULT_WINDOW = 10
DEFAULT_Q = 1.0e-5
DEFAULT_P0 = 1.0e-3

MODES = ("integrated", "separated-gas", "separated-power")
POWER_KINDS = ("v", "ib", "in")
GAS_KINDS = ("pressure", "gas_flow")


# ---------------------------------------------------------------------------
# Measurement channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSpec:
    """One measurement channel: identity, H-row provenance, and noise model."""

    name: str
    kind: str                       # v | ib | in | pressure | gas_flow
    sigma: float = float("nan")     # channel standard deviation, channel units
    nominal: float = float("nan")   # magnitude the relative scale refers to
    dist: str = "gaussian"
    bias: float = 0.0
    state: str | None = None        # direct state counterpart, if one exists
    bus: int | None = None
    branch: tuple[int, int] | None = None
    gas_node: int | None = None


@dataclass(frozen=True)
class MeasurementSet:
    """A trajectory of measurement vectors plus per-channel descriptors."""

    z: np.ndarray                   # (steps, n_channels)
    channels: tuple[ChannelSpec, ...]
    dt: float

    @property
    def steps(self) -> int:
        return self.z.shape[0]

    def index(self, name: str) -> int:
        for i, c in enumerate(self.channels):
            if c.name == name:
                return i
        raise EstimationError(f"unknown measurement channel '{name}'")

    def column(self, name: str) -> np.ndarray:
        return self.z[:, self.index(name)]


def build_channels(model: IgesModel, matrices: GasSystemMatrices,
                   pmu_model: PmuMeasurementModel,
                   gas_meter_nodes: Sequence[int]) -> tuple[ChannelSpec, ...]:
    """Channel structure: PMU channels in measurement-model order, then gas
    pressure channels, then gas load-flow channels (metered sinks only)."""
    channels = [ChannelSpec(name=pc.name, kind=pc.kind, state=pc.state,
                            bus=pc.bus, branch=pc.branch)
                for pc in pmu_model.channels]
    sink_ids = set(matrices.sink_ids)
    for nid in gas_meter_nodes:
        if nid not in matrices.node_ids:
            raise ModelError(f"gas meter node {nid} is not in the model")
        channels.append(ChannelSpec(name=f"p_{nid}", kind="pressure",
                                    state=f"rho_{nid}", gas_node=nid))
    for nid in gas_meter_nodes:
        if nid not in sink_ids:
            continue
        channels.append(ChannelSpec(name=f"q_{nid}", kind="gas_flow",
                                    gas_node=nid))
    return tuple(channels)


def gas_measurement_rows(matrices: GasSystemMatrices,
                         channels: Sequence[ChannelSpec]) -> np.ndarray:
    """H rows over the gas state for pressure and load-flow channels.

    Pressure rows read the node density in bar; load-flow rows combine the
    incident segment flow states with the nodal-balance signs.
    """
    n = matrices.n_states
    rows = np.zeros((len(channels), n))
    bar_per_density = matrices.c_s * matrices.c_s / BAR
    for r, ch in enumerate(channels):
        if ch.kind == "pressure":
            rows[r, matrices.density_col(ch.gas_node)] = bar_per_density
        elif ch.kind == "gas_flow":
            for k, seg in enumerate(matrices.segments):
                col_mij, col_mji = matrices.flow_cols(k)
                if seg.to_node == ch.gas_node:
                    rows[r, col_mji] = 1.0
                elif seg.from_node == ch.gas_node:
                    rows[r, col_mij] = -1.0
        else:
            raise EstimationError(f"channel {ch.name} is not a gas channel")
    return rows


def measurement_matrix(model: IgesModel, matrices: GasSystemMatrices,
                       pmu_model: PmuMeasurementModel | None,
                       channels: Sequence[ChannelSpec],
                       mode: str = "integrated") -> np.ndarray:
    """Stack the H rows of the given channels over the mode's state space."""
    power_channels = [c for c in channels if c.kind in POWER_KINDS]
    gas_channels = [c for c in channels if c.kind in GAS_KINDS]
    if mode == "separated-power":
        return pmu_model.h.copy()
    if mode == "separated-gas":
        return gas_measurement_rows(matrices, gas_channels)
    n_pow = model.power_state_dim
    n_gas = matrices.n_states
    h = np.zeros((len(power_channels) + len(gas_channels), n_pow + n_gas))
    if power_channels:
        h[:len(power_channels), :n_pow] = pmu_model.h
    if gas_channels:
        h[len(power_channels):, n_pow:] = gas_measurement_rows(matrices,
                                                               gas_channels)
    return h


# ---------------------------------------------------------------------------
# Integrated system model
# ---------------------------------------------------------------------------


def classify_state(name: str) -> str:
    """Reporting class of a state: e | f | pressure | gas_flow."""
    if name.startswith("e_"):
        return "e"
    if name.startswith("f_"):
        return "f"
    if name.startswith("rho_"):
        return "pressure"
    if name.startswith("mflow_"):
        return "gas_flow"
    raise EstimationError(f"unclassifiable state name '{name}'")


@dataclass(frozen=True)
class IgesSystemModel:
    """Linear filter model for one estimation mode: x' = F x + u, z = H x."""

    mode: str
    f: np.ndarray
    h: np.ndarray
    q: np.ndarray          # diagonal of the prediction covariance
    r: np.ndarray          # diagonal of the measurement covariance
    channels: tuple[ChannelSpec, ...]
    state_names: tuple[str, ...]
    n_power: int           # leading power states (0 in separated-gas mode)
    alpha: float
    state_scale: np.ndarray | None = None  # reporting-unit factor per state

    @property
    def n_states(self) -> int:
        return self.f.shape[0]

    @property
    def n_channels(self) -> int:
        return self.h.shape[0]

    def power_slice(self) -> slice:
        return slice(0, self.n_power)

    def gas_slice(self) -> slice:
        return slice(self.n_power, self.n_states)


def build_integrated_model(model: IgesModel, matrices: GasSystemMatrices,
                           pmu_model: PmuMeasurementModel,
                           channels: Sequence[ChannelSpec],
                           q: float = DEFAULT_Q,
                           alpha: float = DEFAULT_ALPHA,
                           mode: str = "integrated") -> IgesSystemModel:
    """Assemble the block system for a mode from the per-subsystem pieces.

    Channels must already carry their noise descriptors; the measurement
    covariance diagonal is the squared channel standard deviations.
    """
    if mode not in MODES:
        raise EstimationError(f"unknown mode '{mode}' (expected one of {MODES})")
    power_channels = [c for c in channels if c.kind in POWER_KINDS]
    gas_channels = [c for c in channels if c.kind in GAS_KINDS]
    n_pow = model.power_state_dim
    n_gas = matrices.n_states

    if mode == "integrated":
        use_channels = power_channels + gas_channels
        names = model.power_state_names() + matrices.state_names()
        f = np.zeros((n_pow + n_gas, n_pow + n_gas))
        f[:n_pow, :n_pow] = alpha * np.eye(n_pow)
        f[n_pow:, n_pow:] = matrices.f
        n_power = n_pow
    elif mode == "separated-power":
        use_channels = power_channels
        names = model.power_state_names()
        f = alpha * np.eye(n_pow)
        n_power = n_pow
    else:
        use_channels = gas_channels
        names = matrices.state_names()
        f = matrices.f.copy()
        n_power = 0
    h = measurement_matrix(model, matrices, pmu_model, use_channels, mode=mode)

    r = np.array([c.sigma ** 2 for c in use_channels])
    if not np.all(np.isfinite(r)) or np.any(r <= 0.0):
        raise EstimationError("every channel needs a positive, finite sigma "
                              "before the filter model can be built")
    # report densities as pressures in bar; other states keep their units
    bar_per_density = model.c_s * model.c_s / BAR
    scale = np.array([bar_per_density if classify_state(n) == "pressure"
                      else 1.0 for n in names])
    return IgesSystemModel(mode=mode, f=f, h=h,
                           q=np.full(f.shape[0], float(q)), r=r,
                           channels=tuple(use_channels),
                           state_names=tuple(names), n_power=n_power,
                           alpha=alpha, state_scale=scale)


# ---------------------------------------------------------------------------
# Kalman recursion
# ---------------------------------------------------------------------------


@dataclass
class FilterState:
    """Estimate, covariance, and the sliding innovation window."""

    x: np.ndarray
    p: np.ndarray
    window: deque
    m_w: int


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2.0


def kf_predict(sys: IgesSystemModel, fs: FilterState,
               u: np.ndarray) -> FilterState:
    """Time update: x <- F x + u, P <- F P F^T + Q (symmetrized)."""
    x = sys.f @ fs.x + u
    p = _symmetrize(sys.f @ fs.p @ sys.f.T)
    p[np.diag_indices_from(p)] += sys.q
    return FilterState(x=x, p=p, window=fs.window, m_w=fs.m_w)


def robust_scale(sys: IgesSystemModel, fs: FilterState,
                 innovation: np.ndarray) -> np.ndarray:
    """Per-channel covariance scaling from the innovation window.

    Pushes the innovation (evicting beyond the window length), then compares
    the windowed mean-square innovation against the predicted innovation
    variance; the excess over the nominal channel variance, clamped at one,
    scales that channel's measurement variance in the update.
    """
    fs.window.append(np.asarray(innovation, dtype=float))
    if len(fs.window) > fs.m_w:
        fs.window.popleft()
    sample = np.mean(np.square(np.stack(tuple(fs.window))), axis=0)
    hph_diag = np.einsum("ij,jk,ik->i", sys.h, fs.p, sys.h)
    mu = (sample - hph_diag) / sys.r
    return np.maximum(1.0, mu)


def kf_update(sys: IgesSystemModel, fs: FilterState, z: np.ndarray,
              mu: np.ndarray | None = None) -> FilterState:
    """Measurement update with optional diagonal scaling of R.

    With ``mu`` absent or all ones this is the plain update; a huge scaling on
    one channel drives its gain column to zero and the estimate ignores it.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (sys.n_channels,):
        raise EstimationError(f"measurement has shape {z.shape}, expected "
                              f"({sys.n_channels},)")
    r = sys.r if mu is None else mu * sys.r
    hp = sys.h @ fs.p
    s = hp @ sys.h.T
    s[np.diag_indices_from(s)] += r
    try:
        cho = scipy.linalg.cho_factor(s)
    except scipy.linalg.LinAlgError as exc:
        cond = np.linalg.cond(s)
        raise EstimationError(f"innovation covariance solve failed "
                              f"(condition estimate {cond:.3e}): {exc}") from exc
    gain = scipy.linalg.cho_solve(cho, hp).T
    innovation = z - sys.h @ fs.x
    x = fs.x + gain @ innovation
    p = _symmetrize(fs.p - gain @ hp)
    return FilterState(x=x, p=p, window=fs.window, m_w=fs.m_w)


# ---------------------------------------------------------------------------
# Whole-trajectory estimation
# ---------------------------------------------------------------------------


@dataclass
class EstimationResult:
    states: np.ndarray              # (steps, n_states)
    innovations: np.ndarray         # (steps, n_channels); zero row at step 0
    mu: np.ndarray | None           # per-step covariance scaling (robust runs)
    step_seconds: np.ndarray
    p_min_eig: np.ndarray | None
    system: IgesSystemModel
    final: FilterState

    @property
    def state_names(self) -> tuple[str, ...]:
        return self.system.state_names

    @property
    def steps(self) -> int:
        return self.states.shape[0]


class IntegratedEstimator:
    """Trajectory estimator over a coupled gas-electric model.

    Hyperparameters live in the constructor and are reported through
    ``get_params``/``set_params`` so the estimator composes with parameter
    sweeps; :meth:`run` consumes a :class:`MeasurementSet` and returns the
    filtered trajectory.
    """

    def __init__(self, model: IgesModel, matrices: GasSystemMatrices,
                 pmu_model: PmuMeasurementModel | None = None, *,
                 mode: str = "integrated", robust: bool = False,
                 alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                 window: int = DEFAULT_WINDOW, q: float = DEFAULT_Q,
                 p0: float = DEFAULT_P0, diagnostics: bool = False):
        if mode not in MODES:
            raise EstimationError(f"unknown mode '{mode}'")
        if mode != "separated-gas" and pmu_model is None:
            raise EstimationError(f"mode '{mode}' needs a PMU measurement model")
        if window < 1:
            raise EstimationError("window length must be at least 1")
        self.model = model
        self.matrices = matrices
        self.pmu_model = pmu_model
        self.mode = mode
        self.robust = robust
        self.alpha = alpha
        self.beta = beta
        self.window = window
        self.q = q
        self.p0 = p0
        self.diagnostics = diagnostics

    _param_names = ("mode", "robust", "alpha", "beta", "window", "q", "p0",
                    "diagnostics")

    def get_params(self, deep: bool = False) -> dict:
        params = {name: getattr(self, name) for name in self._param_names}
        if deep:
            params.update(model=self.model, matrices=self.matrices,
                          pmu_model=self.pmu_model)
        return params

    def set_params(self, **params) -> "IntegratedEstimator":
        for name, value in params.items():
            if name not in self._param_names:
                raise EstimationError(f"unknown parameter '{name}'")
            setattr(self, name, value)
        return self

    # -- initialization ------------------------------------------------

    def _initial_power(self, sys: IgesSystemModel, z0: np.ndarray) -> np.ndarray:
        """Weighted least squares on the first measurement scan."""
        rows = [i for i, c in enumerate(sys.channels) if c.kind in POWER_KINDS]
        h = sys.h[np.ix_(rows, range(sys.n_power))]
        sigma = np.sqrt(sys.r[rows])
        sol, *_ = np.linalg.lstsq(h / sigma[:, None], z0[rows] / sigma,
                                  rcond=None)
        return sol

    def _initial_state(self, sys: IgesSystemModel, z0: np.ndarray,
                       initial_sink_loads) -> np.ndarray:
        x0 = np.zeros(sys.n_states)
        if sys.n_power:
            x0[sys.power_slice()] = self._initial_power(sys, z0)
        if sys.mode != "separated-power":
            if initial_sink_loads is None:
                raise EstimationError("gas estimation needs the initial sink "
                                      "loads to set up the starting state")
            x0[sys.gas_slice()] = solve_steady_state(self.matrices,
                                                     initial_sink_loads)
        return x0

    # -- main loop -------------------------------------------------------

    def run(self, measurements: MeasurementSet,
            initial_sink_loads: Mapping[int, float] | None = None,
            ) -> EstimationResult:
        # the per-step matrices are small; threaded BLAS only adds wakeup cost
        with threadpool_limits(limits=1):
            return self._run(measurements, initial_sink_loads)

    def _run(self, measurements: MeasurementSet,
             initial_sink_loads: Mapping[int, float] | None,
             ) -> EstimationResult:
        sys = build_integrated_model(self.model, self.matrices, self.pmu_model,
                                     measurements.channels, q=self.q,
                                     alpha=self.alpha, mode=self.mode)
        cols = [measurements.index(c.name) for c in sys.channels]
        z = measurements.z[:, cols]
        steps = measurements.steps
        if steps < 2:
            raise EstimationError("need at least two measurement scans")

        gb = build_ybus(self.model) if sys.mode == "integrated" else None
        load_sinks = [nid for nid in self.model.load_sink_ids()
                      if nid in self.matrices.sink_ids]

        states = np.zeros((steps, sys.n_states))
        innovations = np.zeros((steps, sys.n_channels))
        mu_hist = np.ones((steps, sys.n_channels)) if self.robust else None
        seconds = np.zeros(steps)
        min_eig = np.zeros(steps) if self.diagnostics else None

        t0 = time.perf_counter()
        x0 = self._initial_state(sys, z[0], initial_sink_loads)
        fs = FilterState(x=x0, p=self.p0 * np.eye(sys.n_states),
                         window=deque(), m_w=self.window)
        fs = kf_update(sys, fs, z[0])
        states[0] = fs.x
        seconds[0] = time.perf_counter() - t0
        if min_eig is not None:
            min_eig[0] = _smallest_eigenvalue(fs.p)

        holt_power = HoltState(alpha=self.alpha, beta=self.beta)
        holt_loads = HoltState(alpha=self.alpha, beta=self.beta)
        loads_prev = self._observed_loads(sys, fs.x, load_sinks)

        for t in range(1, steps):
            t0 = time.perf_counter()
            u = np.zeros(sys.n_states)
            power_pred = None
            if sys.n_power:
                x_pow = fs.x[sys.power_slice()]
                u_pow, holt_power = self._power_input(holt_power, x_pow)
                u[sys.power_slice()] = u_pow
                power_pred = self.alpha * x_pow + u_pow
            if sys.mode != "separated-power":
                load_pred, holt_loads = self._load_input(holt_loads, loads_prev)
                boundary = build_boundary_input(
                    self.model, self.matrices,
                    sink_load_pred=dict(zip(load_sinks, load_pred)),
                    power_pred=power_pred if sys.mode == "integrated" else None,
                    gb=gb)
                u[sys.gas_slice()] = self.matrices.input_map @ boundary.full

            fs = kf_predict(sys, fs, u)
            innovation = z[t] - sys.h @ fs.x
            mu = robust_scale(sys, fs, innovation) if self.robust else None
            fs = kf_update(sys, fs, z[t], mu)

            states[t] = fs.x
            innovations[t] = innovation
            if mu is not None:
                mu_hist[t] = mu
            if sys.mode != "separated-power":
                loads_prev = self._observed_loads(sys, fs.x, load_sinks)
            seconds[t] = time.perf_counter() - t0
            if min_eig is not None:
                min_eig[t] = _smallest_eigenvalue(fs.p)

        return EstimationResult(states=states, innovations=innovations,
                                mu=mu_hist, step_seconds=seconds,
                                p_min_eig=min_eig, system=sys, final=fs)

    def _power_input(self, holt: HoltState,
                     x_prev: np.ndarray) -> tuple[np.ndarray, HoltState]:
        # persistence bootstrap until the smoother has two observations
        if holt.n_obs == 0:
            return (1.0 - self.alpha) * x_prev, holt_observe(holt, x_prev)
        _, u, holt = holt_predict(holt, x_prev)
        return u, holt

    def _load_input(self, holt: HoltState,
                    loads_prev: np.ndarray) -> tuple[np.ndarray, HoltState]:
        if loads_prev.size == 0:
            return loads_prev, holt
        if holt.n_obs == 0:
            return loads_prev, holt_observe(holt, loads_prev)
        pred, _, holt = holt_predict(holt, loads_prev)
        return pred, holt

    def _observed_loads(self, sys: IgesSystemModel, x: np.ndarray,
                        load_sinks: list[int]) -> np.ndarray:
        if sys.mode == "separated-power" or not load_sinks:
            return np.zeros(0)
        loads = sink_loads_from_state(self.matrices, x[sys.gas_slice()])
        return np.array([loads[nid] for nid in load_sinks])


def _smallest_eigenvalue(p: np.ndarray) -> float:
    return float(scipy.linalg.eigvalsh(p, subset_by_index=[0, 0])[0])


def run_estimation(model: IgesModel, matrices: GasSystemMatrices,
                   pmu_model: PmuMeasurementModel | None,
                   measurements: MeasurementSet, *, mode: str = "integrated",
                   robust: bool = False,
                   initial_sink_loads: Mapping[int, float] | None = None,
                   **params) -> EstimationResult:
    """One-call front end over :class:`IntegratedEstimator`."""
    est = IntegratedEstimator(model, matrices, pmu_model, mode=mode,
                              robust=robust, **params)
    return est.run(measurements, initial_sink_loads=initial_sink_loads)
