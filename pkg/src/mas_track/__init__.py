"""Observer-based leader-follower tracking: simulation and certification.

Simulates first- and second-order multi-agent tracking loops in which every
agent (leader included) is hit by an unknown disturbance bounded only in rate
of change, and certifies the resulting tracking errors against closed-form
and Lyapunov-based bounds.
"""

from .bounds import (
    BoundCertificate,
    BoundClaim,
    CertificationError,
    InitialErrors,
    VerdictReport,
    certify_first_order,
    certify_second_order,
    verify_bounds,
)
from .first_order import FirstOrderState, Gains
from .graph import (
    GraphMatrices,
    Topology,
    TopologyError,
    build_matrices,
    is_connected,
    is_leader_reachable,
)
from .integrator import IntegrationConfig, IntegrationError, SimTrace, integrate
from .io_cli import (
    Scenario,
    ScenarioError,
    certify_scenario,
    export_trace,
    load_scenario,
    oracle_run,
    read_trace,
    run_scenario,
)
from .linalg import (
    LyapunovSingularError,
    LyapunovSolution,
    NotHurwitzError,
    error_block_matrix,
    solve_lyapunov,
    spectral_norm,
    symmetric_eigen,
    symmetric_eigenvalues,
)
from .second_order import SecondOrderState
from .signals import (
    RateBounds,
    SignalError,
    SignalSpec,
    eval_signal,
    rate_bounds,
    signal_from_json,
    signal_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "BoundCertificate", "BoundClaim", "CertificationError", "InitialErrors",
    "VerdictReport", "certify_first_order", "certify_second_order", "verify_bounds",
    "FirstOrderState", "Gains", "SecondOrderState",
    "GraphMatrices", "Topology", "TopologyError", "build_matrices",
    "is_connected", "is_leader_reachable",
    "IntegrationConfig", "IntegrationError", "SimTrace", "integrate",
    "Scenario", "ScenarioError", "certify_scenario", "export_trace",
    "load_scenario", "oracle_run", "read_trace", "run_scenario",
    "LyapunovSingularError", "LyapunovSolution", "NotHurwitzError",
    "error_block_matrix", "solve_lyapunov", "spectral_norm",
    "symmetric_eigen", "symmetric_eigenvalues",
    "RateBounds", "SignalError", "SignalSpec", "eval_signal", "rate_bounds",
    "signal_from_json", "signal_to_json",
    "__version__",
]
