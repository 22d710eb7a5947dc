"""Single-register quantum states, gates and noise channels.

Qubit ``k`` is bit ``k`` of the basis index (little-endian), so on two qubits
``|q1 q0> = |10>`` is basis index 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .kernels import kernel

MAX_QUBITS = 12
CHANNELS = ("bitflip", "phaseflip", "depolarizing")


def ry_matrices(theta):
    """Stack of ``Ry`` matrices, one per angle, shape ``(B, 2, 2)``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    u = np.empty((theta.size, 2, 2), dtype=complex)
    u[:, 0, 0] = c
    u[:, 0, 1] = -s
    u[:, 1, 0] = s
    u[:, 1, 1] = c
    return u


def rz_matrices(theta):
    """Stack of ``Rz`` matrices, one per angle, shape ``(B, 2, 2)``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    u = np.zeros((theta.size, 2, 2), dtype=complex)
    u[:, 0, 0] = np.exp(-0.5j * theta)
    u[:, 1, 1] = np.exp(0.5j * theta)
    return u


def cnot_permutation(m: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << m)
    return np.where(idx & (1 << control), idx ^ (1 << target), idx).astype(np.int64)


def z_signs(m: int) -> np.ndarray:
    """``(2**m, m)`` table of Z eigenvalues: +1 where bit k is 0, -1 otherwise."""
    idx = np.arange(1 << m)[:, None]
    return 1.0 - 2.0 * ((idx >> np.arange(m)[None, :]) & 1)


@dataclass(frozen=True)
class Gate:
    kind: str  # "ry" | "rz" | "cnot"
    qubits: tuple[int, ...]
    theta: float = 0.0


def ry(theta: float, qubit: int) -> Gate:
    return Gate("ry", (int(qubit),), float(theta))


def rz(theta: float, qubit: int) -> Gate:
    return Gate("rz", (int(qubit),), float(theta))


def cnot(control: int, target: int) -> Gate:
    return Gate("cnot", (int(control), int(target)))


@dataclass
class StateVector:
    amplitudes: np.ndarray

    @property
    def m(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def expectation_z(self) -> np.ndarray:
        return (np.abs(self.amplitudes) ** 2) @ z_signs(self.m)

    def to_density(self) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass
class DensityMatrix:
    entries: np.ndarray

    @property
    def m(self) -> int:
        return int(self.entries.shape[0]).bit_length() - 1

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def expectation_z(self) -> np.ndarray:
        return np.real(np.diag(self.entries)) @ z_signs(self.m)

    def check(self, atol: float = 1e-10) -> None:
        """Raise if the matrix is not a valid density operator."""
        e = self.entries
        if not np.allclose(e, e.conj().T, atol=atol):
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(e) - 1.0) > atol:
            raise ValidationError(f"density matrix trace {np.trace(e).real:.3e} != 1")
        if np.linalg.eigvalsh(0.5 * (e + e.conj().T)).min() < -1e-9:
            raise ValidationError("density matrix has a negative eigenvalue")


def init_state(m: int) -> StateVector:
    """``|0...0>`` on ``m`` qubits."""
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= MAX_QUBITS:
        raise ValidationError(f"qubit count must be an integer in [1, {MAX_QUBITS}], got {m!r}")
    amp = np.zeros(1 << m, dtype=complex)
    amp[0] = 1.0
    return StateVector(amp)


def _check_qubits(gate: Gate, m: int) -> None:
    for q in gate.qubits:
        if not 0 <= q < m:
            raise ValidationError(f"qubit index {q} out of range for {m} qubits")
    if gate.kind == "cnot" and gate.qubits[0] == gate.qubits[1]:
        raise ValidationError("CNOT control and target must differ")


def apply_gate(state, gate: Gate):
    """Apply ``gate`` to a :class:`StateVector` or :class:`DensityMatrix` in place."""
    _check_qubits(gate, state.m)
    dense = isinstance(state, DensityMatrix)
    arr = state.entries[None] if dense else state.amplitudes[None]
    if gate.kind == "cnot":
        perm = cnot_permutation(state.m, *gate.qubits)
        kernel("dm_apply_perm" if dense else "sv_apply_perm")(arr, perm)
    elif gate.kind in ("ry", "rz"):
        u = (ry_matrices if gate.kind == "ry" else rz_matrices)(gate.theta)
        kernel("dm_apply_1q" if dense else "sv_apply_1q")(arr, gate.qubits[0], u)
    else:
        raise ValidationError(f"unknown gate kind {gate.kind!r}")
    return state


def encode(state, features) -> StateVector:
    """Angle-encode ``2m`` features: ``Ry(f[k])`` then ``Rz(f[m + k])`` on qubit ``k``.

    Features are clipped to ``[-pi, pi]`` first.
    """
    m = state.m
    f = np.asarray(features, dtype=float).reshape(-1)
    if f.size != 2 * m:
        raise ValidationError(f"expected {2 * m} features for {m} qubits, got {f.size}")
    f = np.clip(f, -np.pi, np.pi)
    for k in range(m):
        apply_gate(state, ry(f[k], k))
        apply_gate(state, rz(f[m + k], k))
    return state


def apply_channel(rho: DensityMatrix, kind: str, p: float, qubit: int) -> DensityMatrix:
    """Return a new density matrix with a single-qubit noise channel applied.

    ``bitflip``: (1-p) rho + p X rho X; ``phaseflip``: (1-p) rho + p Z rho Z;
    ``depolarizing``: (1-p) rho + p (I/2 (x) Tr_q rho).
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"channel probability must lie in [0, 1], got {p}")
    if not 0 <= qubit < rho.m:
        raise ValidationError(f"qubit index {qubit} out of range for {rho.m} qubits")
    if kind not in CHANNELS:
        raise ValidationError(f"unknown channel {kind!r}; expected one of {CHANNELS}")
    out = rho.entries.astype(complex, copy=True)[None]
    name = {"bitflip": "dm_bitflip", "phaseflip": "dm_phaseflip", "depolarizing": "dm_depolarize"}[kind]
    kernel(name)(out, qubit, float(p))
    return DensityMatrix(out[0])
