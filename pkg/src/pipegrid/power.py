"""Power-system prediction and measurement models.

States are rectangular bus voltages interleaved as [e_1, f_1, e_2, f_2, ...].
Prediction uses double exponential smoothing (level + trend) applied
componentwise with shared scalar parameters; measurements are linear PMU
channels (bus voltages, branch currents, injected currents) stacked in that
order with the real part before the imaginary part on every channel pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import EstimationError, ModelError, PowerFlowError
from .model import Branch, IgesModel, build_ybus

DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.4


# ---------------------------------------------------------------------------
# Holt prediction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HoltState:
    """Level/trend smoother state.  Initialized only after two observations:
    level = x2 and trend = x2 - x1."""

    alpha: float
    beta: float
    n_obs: int = 0
    first: np.ndarray | None = None
    level: np.ndarray | None = None
    trend: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise EstimationError(f"smoothing parameters must lie in (0, 1), "
                                  f"got alpha={self.alpha}, beta={self.beta}")

    @property
    def ready(self) -> bool:
        return self.level is not None


def holt_observe(holt: HoltState, x) -> HoltState:
    """Advance the smoother with one observation (no prediction)."""
    x = np.asarray(x, dtype=float)
    if holt.n_obs == 0:
        return replace(holt, n_obs=1, first=x.copy())
    if holt.n_obs == 1:
        return replace(holt, n_obs=2, first=holt.first,
                       level=x.copy(), trend=x - holt.first)
    level = holt.alpha * x + (1.0 - holt.alpha) * (holt.level + holt.trend)
    trend = holt.beta * (level - holt.level) + (1.0 - holt.beta) * holt.trend
    return replace(holt, n_obs=holt.n_obs + 1, level=level, trend=trend)


def holt_predict(holt: HoltState, x) -> tuple[np.ndarray, np.ndarray, HoltState]:
    """Ingest the observation x_t and predict one step ahead.

    Returns (prediction, u, updated state) where u is the affine input that
    makes prediction = alpha * x_t + u hold exactly.
    """
    updated = holt_observe(holt, x)
    if not updated.ready:
        raise EstimationError("prediction requested before two observations")
    prediction = updated.level + updated.trend
    u = prediction - holt.alpha * np.asarray(x, dtype=float)
    return prediction, u, updated


# ---------------------------------------------------------------------------
# PMU measurement model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerChannel:
    name: str
    kind: str                      # "v" | "ib" | "in"
    part: str                      # "re" | "im"
    bus: int | None = None
    branch: tuple[int, int] | None = None
    state: str | None = None       # direct state counterpart, voltage rows only


@dataclass(frozen=True)
class PmuMeasurementModel:
    h: np.ndarray
    channels: tuple[PowerChannel, ...]
    pmu_buses: tuple[int, ...]
    measured_branches: tuple[tuple[int, int], ...]


def _find_branch(model: IgesModel, i: int, j: int) -> Branch:
    for br in model.branches:
        if br.key == (min(i, j), max(i, j)):
            return br
    raise ModelError(f"measured branch ({i}, {j}) is not in the model")


def build_measurement_model(model: IgesModel, pmu_buses, measured_branches,
                            ) -> PmuMeasurementModel:
    """Stack voltage selectors, branch-current rows, and injected-current rows.

    Branch current for measured pair (i, j) is taken at the i side:
    I = (y_series + y_shunt_i) V_i - y_series V_j, split into real/imaginary
    rows that are linear in (e, f).  Injected currents are rows of the nodal
    admittance matrix.
    """
    index = model.bus_index()
    for b in pmu_buses:
        if b not in index:
            raise ModelError(f"PMU bus {b} is not in the model")
    g_mat, b_mat = build_ybus(model)
    n_x = 2 * model.n_buses
    rows: list[np.ndarray] = []
    channels: list[PowerChannel] = []

    for bus in pmu_buses:
        k = index[bus]
        for part, col in (("re", 2 * k), ("im", 2 * k + 1)):
            row = np.zeros(n_x)
            row[col] = 1.0
            rows.append(row)
            comp = "e" if part == "re" else "f"
            channels.append(PowerChannel(name=f"v_{comp}_{bus}", kind="v",
                                         part=part, bus=bus,
                                         state=f"{comp}_{bus}"))

    norm_branches = []
    for i, j in measured_branches:
        br = _find_branch(model, i, j)
        norm_branches.append((i, j))
        ki, kj = index[i], index[j]
        g, b = br.g, br.b
        bsh = br.b_shunt / 2.0
        for part in ("re", "im"):
            row = np.zeros(n_x)
            if part == "re":
                row[2 * ki] = g
                row[2 * ki + 1] = -(b + bsh)
                row[2 * kj] = -g
                row[2 * kj + 1] = b
            else:
                row[2 * ki] = b + bsh
                row[2 * ki + 1] = g
                row[2 * kj] = -b
                row[2 * kj + 1] = -g
            rows.append(row)
            channels.append(PowerChannel(name=f"ib_{part}_{i}_{j}", kind="ib",
                                         part=part, branch=(i, j)))

    for bus in pmu_buses:
        k = index[bus]
        for part in ("re", "im"):
            row = np.zeros(n_x)
            for m in range(model.n_buses):
                if part == "re":
                    row[2 * m] = g_mat[k, m]
                    row[2 * m + 1] = -b_mat[k, m]
                else:
                    row[2 * m] = b_mat[k, m]
                    row[2 * m + 1] = g_mat[k, m]
            rows.append(row)
            channels.append(PowerChannel(name=f"in_{part}_{bus}", kind="in",
                                         part=part, bus=bus))

    return PmuMeasurementModel(h=np.array(rows), channels=tuple(channels),
                               pmu_buses=tuple(pmu_buses),
                               measured_branches=tuple(norm_branches))


# ---------------------------------------------------------------------------
# Power flow (ground truth generation)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerFlowResult:
    states: np.ndarray
    iterations: int
    max_mismatch: float


def injected_power(model: IgesModel, x: np.ndarray, bus: int,
                   gb: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """Real injected power at a bus (per-unit) from rectangular voltages."""
    g_mat, b_mat = gb if gb is not None else build_ybus(model)
    k = model.bus_index()[bus]
    e = x[0::2]
    f = x[1::2]
    ire = g_mat[k] @ e - b_mat[k] @ f
    iim = g_mat[k] @ f + b_mat[k] @ e
    return float(e[k] * ire + f[k] * iim)


def _injections(model: IgesModel, loads, generations) -> tuple[np.ndarray,
                                                               np.ndarray,
                                                               dict[int, float]]:
    """Net per-unit injections (p, q) per bus plus PV setpoints.

    ``loads`` maps bus id -> (P, Q) in MW/MVAr, overriding the nominal bus
    loads; ``generations`` maps bus id -> (P_mw, V_set) and marks the bus PV.
    """
    n = model.n_buses
    p = np.zeros(n)
    q = np.zeros(n)
    pv: dict[int, float] = {}
    index = model.bus_index()
    for bus in model.buses:
        lp, lq = bus.load_p, bus.load_q
        if loads is not None and bus.id in loads:
            lp, lq = loads[bus.id]
        p[index[bus.id]] -= lp / model.s_base
        q[index[bus.id]] -= lq / model.s_base
        gen = None
        if generations is not None and bus.id in generations:
            gen = generations[bus.id]
        elif generations is None and bus.gen_p is not None:
            gen = (bus.gen_p, bus.gen_v)
        if gen is not None and not bus.slack:
            p[index[bus.id]] += gen[0] / model.s_base
            pv[bus.id] = gen[1]
    return p, q, pv


def solve_power_flow(model: IgesModel, loads=None, generations=None,
                     slack_bus: int | None = None, tol: float = 1.0e-8,
                     max_iter: int = 20) -> PowerFlowResult:
    """Newton iteration on the bus power mismatches in rectangular coordinates.

    PQ buses impose (P, Q); generator buses impose (P, |V|); the slack bus is
    held at its setpoint angle zero.  Raises on non-convergence.
    """
    n = model.n_buses
    index = model.bus_index()
    g_mat, b_mat = build_ybus(model)
    p_spec, q_spec, pv = _injections(model, loads, generations)

    slack = model.slack_bus().id if slack_bus is None else slack_bus
    if slack not in index:
        raise ModelError(f"slack bus {slack} is not in the model")
    slack_v = model.bus(slack).gen_v or 1.0

    x = np.zeros(2 * n)
    x[0::2] = slack_v
    ks = index[slack]

    for iteration in range(1, max_iter + 1):
        e = x[0::2]
        f = x[1::2]
        ire = g_mat @ e - b_mat @ f
        iim = g_mat @ f + b_mat @ e
        p = e * ire + f * iim
        q = f * ire - e * iim

        residual = np.zeros(2 * n)
        jac = np.zeros((2 * n, 2 * n))
        for bus in model.buses:
            k = index[bus.id]
            rp, rq = 2 * k, 2 * k + 1
            if k == ks:
                residual[rp] = e[k] - slack_v
                residual[rq] = f[k]
                jac[rp, 2 * k] = 1.0
                jac[rq, 2 * k + 1] = 1.0
                continue
            residual[rp] = p[k] - p_spec[k]
            jac[rp, 0::2] = e[k] * g_mat[k] + f[k] * b_mat[k]
            jac[rp, 1::2] = -e[k] * b_mat[k] + f[k] * g_mat[k]
            jac[rp, 2 * k] += ire[k]
            jac[rp, 2 * k + 1] += iim[k]
            if bus.id in pv:
                vset = pv[bus.id]
                residual[rq] = e[k] * e[k] + f[k] * f[k] - vset * vset
                jac[rq, 2 * k] = 2.0 * e[k]
                jac[rq, 2 * k + 1] = 2.0 * f[k]
            else:
                residual[rq] = q[k] - q_spec[k]
                jac[rq, 0::2] = f[k] * g_mat[k] - e[k] * b_mat[k]
                jac[rq, 1::2] = -f[k] * b_mat[k] - e[k] * g_mat[k]
                jac[rq, 2 * k] += -iim[k]
                jac[rq, 2 * k + 1] += ire[k]

        mismatch = float(np.linalg.norm(residual, ord=np.inf))
        if mismatch < tol:
            return PowerFlowResult(states=x, iterations=iteration - 1,
                                   max_mismatch=mismatch)
        try:
            dx = np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian at iteration "
                                 f"{iteration}: {exc}") from exc
        x = x - dx

    raise PowerFlowError(f"power flow diverged: mismatch {mismatch:.3e} after "
                         f"{max_iter} iterations")
