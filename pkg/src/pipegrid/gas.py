"""Discretized gas pipeline dynamics.

Assembles the linear one-step transition of the pipeline network from the
finite-difference mass/momentum balances of each segment plus one boundary
row per node (fixed density at sources, offtake balance at sinks, flow
continuity at virtual nodes).  The state vector is

    [rho per node (ascending id) | (mdot_ij, mdot_ji) per segment]

with both flow states positive in the from->to direction of the segment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import GasSystemError
from .model import VELOCITY_FLOOR, IgesModel, PipeSegment, density_to_bar

STEADY_RESIDUAL_TOL = 1.0e-10


@dataclass(frozen=True)
class GasSystemMatrices:
    """Assembled one-step model: a @ x[t+1] = b @ x[t] + u[t+1].

    ``f = a^-1 b`` and ``input_map = a^-1`` are materialized once; rows are
    ordered [2*n_pipes PDE rows | source rows | sink rows | virtual rows]
    and the input vector follows the same boundary layout.
    """

    a: np.ndarray
    b: np.ndarray
    f: np.ndarray
    input_map: np.ndarray
    node_ids: tuple[int, ...]
    source_ids: tuple[int, ...]
    sink_ids: tuple[int, ...]
    virtual_ids: tuple[int, ...]
    segments: tuple[PipeSegment, ...]
    source_densities: tuple[float, ...]
    c_s: float
    dt: float

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_pipes(self) -> int:
        return len(self.segments)

    def density_col(self, node_id: int) -> int:
        return self.node_ids.index(node_id)

    def flow_cols(self, seg_index: int) -> tuple[int, int]:
        base = self.n_nodes + 2 * seg_index
        return base, base + 1

    def boundary_rows(self) -> slice:
        return slice(2 * self.n_pipes, self.n_states)

    def state_names(self) -> tuple[str, ...]:
        names = [f"rho_{nid}" for nid in self.node_ids]
        for seg in self.segments:
            names.append(f"mflow_{seg.from_node}_{seg.to_node}")
            names.append(f"mflow_{seg.to_node}_{seg.from_node}")
        return tuple(names)


def assemble_gas_system(model: IgesModel) -> GasSystemMatrices:
    """Build the pipeline transition matrices for a validated model.

    Each segment contributes one mass-balance row and one momentum row; the
    compressor density ratios multiply the densities at their ends.  The sign
    split between the two sides keeps the time-t density terms and negates
    the flow blocks on the mass rows, and negates both blocks on the momentum
    rows.  A singular assembled matrix signals an ill-posed network (for
    example a component without any source) and is reported together with a
    condition estimate.
    """
    n_n = model.n_nodes
    n_p = model.n_pipes
    n = n_n + 2 * n_p
    node_ids = tuple(n_.id for n_ in model.gas_nodes)
    node_index = {nid: k for k, nid in enumerate(node_ids)}
    segments = model.pipes

    a = np.zeros((n, n))
    b = np.zeros((n, n))
    c2 = model.c_s * model.c_s
    dt = model.dt

    for k, seg in enumerate(segments):
        ci, cj = seg.ratio_from, seg.ratio_to
        col_ri = node_index[seg.from_node]
        col_rj = node_index[seg.to_node]
        col_mij = n_n + 2 * k
        col_mji = n_n + 2 * k + 1

        # mass balance row
        r = k
        a[r, col_ri] = ci
        a[r, col_rj] = cj
        a[r, col_mij] = -dt / seg.length
        a[r, col_mji] = dt / seg.length
        b[r, col_ri] = ci
        b[r, col_rj] = cj
        b[r, col_mij] = dt / seg.length
        b[r, col_mji] = -dt / seg.length

        # momentum row
        r = n_p + k
        grad = seg.area * dt * c2 / seg.length
        fric = seg.friction * seg.velocity * dt / (4.0 * seg.diameter * seg.area)
        a[r, col_ri] = -grad * ci
        a[r, col_rj] = grad * cj
        a[r, col_mij] = -1.0 + fric
        a[r, col_mji] = 1.0 + fric
        b[r, :] = -a[r, :]

    source_ids, sink_ids, virtual_ids = [], [], []
    row = 2 * n_p
    source_densities = []
    for node in model.gas_nodes:
        if node.kind == "source":
            source_ids.append(node.id)
            source_densities.append(node.const_density)
    for node in model.gas_nodes:
        if node.kind == "sink":
            sink_ids.append(node.id)
    for node in model.gas_nodes:
        if node.kind == "virtual":
            virtual_ids.append(node.id)

    for nid in source_ids:
        a[row, node_index[nid]] = 1.0
        row += 1
    for nid in sink_ids + virtual_ids:
        for k, seg in enumerate(segments):
            col_mij, col_mji = n_n + 2 * k, n_n + 2 * k + 1
            if seg.to_node == nid:      # inflow arriving at the big-numbered end
                a[row, col_mji] = 1.0
            elif seg.from_node == nid:  # outflow leaving the small-numbered end
                a[row, col_mij] = -1.0
        row += 1

    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1.0e12:
        raise GasSystemError(f"gas system matrix is singular or near-singular "
                             f"(condition estimate {cond:.3e}); check that every "
                             f"component has a source node")
    lu, piv = scipy.linalg.lu_factor(a)
    f = scipy.linalg.lu_solve((lu, piv), b)
    input_map = scipy.linalg.lu_solve((lu, piv), np.eye(n))
    return GasSystemMatrices(a=a, b=b, f=f, input_map=input_map,
                             node_ids=node_ids, source_ids=tuple(source_ids),
                             sink_ids=tuple(sink_ids),
                             virtual_ids=tuple(virtual_ids), segments=segments,
                             source_densities=tuple(source_densities),
                             c_s=model.c_s, dt=model.dt)


def _as_vector(values, ids: tuple[int, ...], what: str) -> np.ndarray:
    if values is None:
        raise GasSystemError(f"missing {what}")
    if isinstance(values, Mapping):
        return np.array([float(values.get(i, 0.0)) for i in ids])
    arr = np.asarray(values, dtype=float)
    if arr.shape != (len(ids),):
        raise GasSystemError(f"{what} must have length {len(ids)}, "
                             f"got shape {arr.shape}")
    return arr


def build_input(matrices: GasSystemMatrices,
                sink_loads: Mapping[int, float] | Sequence[float],
                source_densities: Mapping[int, float] | Sequence[float] | None = None,
                ) -> np.ndarray:
    """Assemble the full boundary input vector (zeros on PDE and virtual rows)."""
    if source_densities is None:
        dens = np.asarray(matrices.source_densities)
    else:
        dens = _as_vector(source_densities, matrices.source_ids, "source densities")
    loads = _as_vector(sink_loads, matrices.sink_ids, "sink loads")
    u = np.zeros(matrices.n_states)
    base = 2 * matrices.n_pipes
    u[base:base + len(dens)] = dens
    u[base + len(dens):base + len(dens) + len(loads)] = loads
    return u


def step_gas(matrices: GasSystemMatrices, x: np.ndarray,
             u: np.ndarray) -> np.ndarray:
    """One deterministic transition: f @ x + a^-1 @ u."""
    return matrices.f @ x + matrices.input_map @ u


def solve_steady_state(matrices: GasSystemMatrices,
                       sink_loads: Mapping[int, float] | Sequence[float],
                       source_densities=None) -> np.ndarray:
    """Fixed point of :func:`step_gas` under constant inputs.

    Solves (a - b) x = u directly and verifies the scaled fixed-point
    residual; a singular restricted system is reported (the zero-load,
    equal-density case still has the uniform solution).
    """
    u = build_input(matrices, sink_loads, source_densities)
    ab = matrices.a - matrices.b
    try:
        x = np.linalg.solve(ab, u)
    except np.linalg.LinAlgError as exc:
        raise GasSystemError(f"steady-state system is singular: {exc}") from exc
    residual = np.linalg.norm(step_gas(matrices, x, u) - x, ord=np.inf)
    scale = max(1.0, np.linalg.norm(x, ord=np.inf))
    if not np.isfinite(residual) or residual / scale > STEADY_RESIDUAL_TOL:
        raise GasSystemError(f"steady-state residual {residual:.3e} exceeds "
                             f"tolerance (scaled by {scale:.3e})")
    return x


def boundary_values(matrices: GasSystemMatrices,
                    x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate the boundary rows on a state: (source densities, sink offtakes,
    virtual residuals).  On a propagated state the virtual residuals are zero
    by construction; on a filtered state they are merely small."""
    vals = matrices.a[matrices.boundary_rows()] @ x
    n_s = len(matrices.source_ids)
    n_si = len(matrices.sink_ids)
    return vals[:n_s], vals[n_s:n_s + n_si], vals[n_s + n_si:]


def sink_loads_from_state(matrices: GasSystemMatrices,
                          x: np.ndarray) -> dict[int, float]:
    _, loads, _ = boundary_values(matrices, x)
    return dict(zip(matrices.sink_ids, loads.tolist()))


def source_outflows(matrices: GasSystemMatrices, x: np.ndarray) -> dict[int, float]:
    """Net mass flow leaving each source node, read from the flow states."""
    out: dict[int, float] = {nid: 0.0 for nid in matrices.source_ids}
    n_n = matrices.n_nodes
    for k, seg in enumerate(matrices.segments):
        if seg.from_node in out:
            out[seg.from_node] += x[n_n + 2 * k]
        if seg.to_node in out:
            out[seg.to_node] -= x[n_n + 2 * k + 1]
    return out


def calibrate_velocities(model: IgesModel, x: np.ndarray,
                         floor: float = VELOCITY_FLOOR) -> IgesModel:
    """Return a model whose per-segment average-velocity magnitudes are taken
    from a (typically steady) state, |mdot| / (rho * area), floored at 1 m/s."""
    n_n = model.n_nodes
    node_index = {n.id: k for k, n in enumerate(model.gas_nodes)}
    new_pipes = []
    for k, seg in enumerate(model.pipes):
        rho = 0.5 * (x[node_index[seg.from_node]] + x[node_index[seg.to_node]])
        mdot = 0.5 * (x[n_n + 2 * k] + x[n_n + 2 * k + 1])
        if rho <= 0.0:
            raise GasSystemError(f"non-positive density on segment {seg.key} "
                                 f"during velocity calibration")
        v = max(abs(mdot) / (rho * seg.area), floor)
        new_pipes.append(replace(seg, velocity=v))
    return replace(model, pipes=tuple(new_pipes))


def build_calibrated_system(model: IgesModel,
                            sink_loads: Mapping[int, float] | Sequence[float],
                            ) -> tuple[IgesModel, GasSystemMatrices, np.ndarray]:
    """Assemble, solve the initial steady state, recalibrate the segment
    velocities from it once, and reassemble.  Returns the calibrated model,
    its matrices, and the steady state of the calibrated system."""
    first = assemble_gas_system(model)
    x0 = solve_steady_state(first, sink_loads)
    model = calibrate_velocities(model, x0)
    matrices = assemble_gas_system(model)
    x0 = solve_steady_state(matrices, sink_loads)
    return model, matrices, x0


def densities_in_bar(matrices: GasSystemMatrices, x: np.ndarray) -> np.ndarray:
    return np.array([density_to_bar(x[i], matrices.c_s)
                     for i in range(matrices.n_nodes)])
