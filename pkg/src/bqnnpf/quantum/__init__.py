from .circuit import (
    CircuitSpec,
    NoiseSpec,
    default_encoding,
    evaluate_batch,
    evaluate_circuit,
    param_shift_grad,
    shift_jacobians,
)
from .kernels import get_backend, set_backend
from .state import (
    DensityMatrix,
    Gate,
    StateVector,
    apply_channel,
    apply_gate,
    cnot,
    encode,
    init_state,
    ry,
    rz,
)

__all__ = [
    "CircuitSpec",
    "DensityMatrix",
    "Gate",
    "NoiseSpec",
    "StateVector",
    "apply_channel",
    "apply_gate",
    "cnot",
    "default_encoding",
    "encode",
    "evaluate_batch",
    "evaluate_circuit",
    "get_backend",
    "init_state",
    "param_shift_grad",
    "ry",
    "rz",
    "set_backend",
    "shift_jacobians",
]
