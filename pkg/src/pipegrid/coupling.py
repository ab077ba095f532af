"""Gas-turbine energy conversion and boundary-input construction.

A GTU converts gas offtake at its sink node into electric power injected at
its bus with a constant coefficient eta (MW.s/kg).  During estimation the
offtake of a GTU sink one step ahead is obtained from the predicted bus
voltages through the injected-power equation; every other load-bearing sink
is covered by its own smoother prediction, and virtual rows stay zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ModelError
from .gas import GasSystemMatrices, build_input
from .model import GtuLink, IgesModel
from .power import injected_power


def gtu_flow_to_power(link: GtuLink, mdot: float) -> float:
    """Gas offtake (kg/s) to electric output (MW)."""
    return link.eta * mdot


def gtu_power_to_flow(link: GtuLink, p_mw: float) -> float:
    """Electric output (MW) to gas offtake (kg/s)."""
    return p_mw / link.eta


def gtu_flow_from_state(link: GtuLink, model: IgesModel, x_power: np.ndarray,
                        gb: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """Gas offtake implied by a power state: injected power at the GTU bus
    (converted to MW with the system base) divided by eta."""
    p_pu = injected_power(model, x_power, link.bus, gb=gb)
    return p_pu * model.s_base / link.eta


@dataclass(frozen=True)
class BoundaryInput:
    """Boundary values for one prediction step, in the gas-system row layout."""

    u_r: np.ndarray    # source densities, kg/m3
    u_m: np.ndarray    # sink offtakes, kg/s
    full: np.ndarray   # assembled input vector (PDE and virtual rows zero)


def build_boundary_input(model: IgesModel, matrices: GasSystemMatrices,
                         sink_load_pred: Mapping[int, float],
                         power_pred: np.ndarray | None = None,
                         gb: tuple[np.ndarray, np.ndarray] | None = None,
                         ) -> BoundaryInput:
    """Assemble the one-step-ahead boundary input.

    Source entries are the constant source densities.  When ``power_pred`` is
    given (integrated operation), each GTU sink uses the injected-power
    conversion on the predicted voltages; otherwise (separated operation) GTU
    sinks fall back to ``sink_load_pred`` like every other load-bearing sink.
    Sinks absent from ``sink_load_pred`` are structural junctions with zero
    offtake.
    """
    loads: dict[int, float] = {}
    for nid in matrices.sink_ids:
        link = model.gtu_for_gas_node(nid)
        if link is not None and power_pred is not None:
            loads[nid] = gtu_flow_from_state(link, model, power_pred, gb=gb)
        else:
            loads[nid] = float(sink_load_pred.get(nid, 0.0))
    u_m = np.array([loads[nid] for nid in matrices.sink_ids])
    u_r = np.asarray(matrices.source_densities)
    full = build_input(matrices, u_m, u_r)
    return BoundaryInput(u_r=u_r, u_m=u_m, full=full)
