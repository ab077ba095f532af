"""Dynamic state estimation for coupled natural-gas and electric-power networks."""

from .errors import (ConfigError, EstimationError, GasSystemError, ModelError,
                     PipegridError, PowerFlowError)
from .estimator import (ChannelSpec, EstimationResult, IgesSystemModel,
                        IntegratedEstimator, MeasurementSet, build_channels,
                        build_integrated_model, kf_predict, kf_update,
                        robust_scale, run_estimation)
from .gas import (GasSystemMatrices, assemble_gas_system,
                  build_calibrated_system, calibrate_velocities,
                  solve_steady_state, step_gas)
from .metrics import RunReport, compare_runs, compute_metrics, emit_report
from .model import (Branch, GasNode, GtuLink, IgesModel, PipeSegment, PowerBus,
                    build_ybus, load_model, preprocess, save_model,
                    validate_model)
from .power import (HoltState, PmuMeasurementModel, build_measurement_model,
                    holt_predict, injected_power, solve_power_flow)
from .scenario import (BadDataEntry, BadDataSpec, NoiseConfig, ScenarioSpec,
                       TruthResult, generate_truth, inject_bad_data,
                       synthesize_measurements)

__version__ = "0.1.0"
