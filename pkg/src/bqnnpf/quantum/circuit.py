"""Parameterized circuit: angle encoding, Ry/Rz + CNOT-ring ansatz, Z readout.

The batched simulator here is the hot path of training. It runs many
(feature, parameter) rows through the same gate sequence at once, either as
statevectors (noiseless) or density matrices (noisy).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import ValidationError
from .kernels import kernel
from .state import MAX_QUBITS, cnot_permutation, ry_matrices, rz_matrices, z_signs

SHIFT = np.pi / 2
# rows * D (statevector) or rows * D * D (density) per chunk
_CHUNK_ELEMS = 1 << 22


def default_encoding(m: int) -> tuple[tuple[int, str, int], ...]:
    enc = []
    for k in range(m):
        enc.append((k, "y", k))
        enc.append((k, "z", m + k))
    return tuple(enc)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-gate noise; every configured channel follows each gate on each touched qubit."""

    p_bitflip: float = 0.0
    p_phaseflip: float = 0.0
    p_depolarizing: float = 0.0
    placement: str = "after-each-gate"

    def __post_init__(self):
        for name in ("p_bitflip", "p_phaseflip", "p_depolarizing"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"noise.{name} must lie in [0, 1], got {p}")
        if self.placement != "after-each-gate":
            raise ValidationError(f"unsupported noise placement {self.placement!r}")

    @classmethod
    def single(cls, kind: str, p: float) -> NoiseSpec:
        key = {"bitflip": "p_bitflip", "phaseflip": "p_phaseflip", "depolarizing": "p_depolarizing"}
        if kind not in key:
            raise ValidationError(f"unknown channel {kind!r}")
        return cls(**{key[kind]: p})

    def channels(self):
        return [
            (k, p)
            for k, p in (
                ("dm_bitflip", self.p_bitflip),
                ("dm_phaseflip", self.p_phaseflip),
                ("dm_depolarize", self.p_depolarizing),
            )
            if p > 0.0
        ]

    def to_dict(self) -> dict:
        return {
            "p_bitflip": self.p_bitflip,
            "p_phaseflip": self.p_phaseflip,
            "p_depolarizing": self.p_depolarizing,
            "placement": self.placement,
        }


@dataclass(frozen=True)
class CircuitSpec:
    m: int
    layers: int
    encoding: tuple = field(default=None)

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or not 1 <= self.m <= MAX_QUBITS:
            raise ValidationError(f"circuit.m must be an integer in [1, {MAX_QUBITS}], got {self.m!r}")
        if self.layers < 0:
            raise ValidationError(f"circuit.layers must be >= 0, got {self.layers}")
        enc = default_encoding(self.m) if self.encoding is None else self.encoding
        enc = tuple((int(q), str(a), int(f)) for q, a, f in enc)
        for q, a, f in enc:
            if not 0 <= q < self.m:
                raise ValidationError(f"encoding qubit {q} out of range")
            if a not in ("y", "z"):
                raise ValidationError(f"encoding axis must be 'y' or 'z', got {a!r}")
            if not 0 <= f < 2 * self.m:
                raise ValidationError(f"encoding feature index {f} must be < {2 * self.m}")
        object.__setattr__(self, "encoding", enc)

    @property
    def n_params(self) -> int:
        return 2 * self.m * self.layers

    @property
    def n_features(self) -> int:
        return 2 * self.m

    @cached_property
    def ops(self) -> list:
        """Flat gate program.

        Entries are ``("enc", axis, qubit, slot)``, ``("par", axis, qubit, index)``
        or ``("cnot", control, target, perm)``.
        """
        prog = [("enc", a, q, i) for i, (q, a, _) in enumerate(self.encoding)]
        m = self.m
        for layer in range(self.layers):
            base = 2 * m * layer
            prog += [("par", "y", q, base + q) for q in range(m)]
            prog += [("par", "z", q, base + m + q) for q in range(m)]
            if m > 1:
                for q in range(m):
                    t = (q + 1) % m
                    prog.append(("cnot", q, t, cnot_permutation(m, q, t)))
        return prog

    def to_dict(self) -> dict:
        return {"m": self.m, "layers": self.layers, "encoding": [list(e) for e in self.encoding]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> CircuitSpec:
        enc = d.get("encoding")
        return cls(int(d["m"]), int(d["layers"]), None if enc is None else tuple(tuple(e) for e in enc))


def _run(spec: CircuitSpec, enc_angles, params, noise: NoiseSpec | None, density: bool = False) -> np.ndarray:
    """Simulate rows of (encoding-gate angles, ansatz angles) and return <Z_k>.

    ``enc_angles``: ``(B, len(spec.encoding))``; ``params``: ``(B, 2mL)``.
    Density matrices are used when a channel is active or ``density`` is set;
    otherwise the cheaper pure-state path runs.
    """
    rows = enc_angles.shape[0]
    m = spec.m
    d = 1 << m
    dense = density or (noise is not None and bool(noise.channels()))
    per_row = d * d if dense else d
    chunk = max(1, _CHUNK_ELEMS // per_row)
    out = np.empty((rows, m))
    signs = z_signs(m)
    chans = noise.channels() if dense and noise is not None else []
    apply_1q = kernel("dm_apply_1q" if dense else "sv_apply_1q")
    apply_perm = kernel("dm_apply_perm" if dense else "sv_apply_perm")
    chan_fns = [(kernel(k), p) for k, p in chans]
    for lo in range(0, rows, chunk):
        hi = min(rows, lo + chunk)
        b = hi - lo
        if dense:
            st = np.zeros((b, d, d), dtype=complex)
            st[:, 0, 0] = 1.0
        else:
            st = np.zeros((b, d), dtype=complex)
            st[:, 0] = 1.0
        for op in spec.ops:
            kind = op[0]
            if kind == "cnot":
                apply_perm(st, op[3])
                touched = (op[1], op[2])
            else:
                theta = enc_angles[lo:hi, op[3]] if kind == "enc" else params[lo:hi, op[3]]
                u = ry_matrices(theta) if op[1] == "y" else rz_matrices(theta)
                apply_1q(st, op[2], u)
                touched = (op[2],)
            for q in touched:
                for fn, p in chan_fns:
                    fn(st, q, p)
        if dense:
            probs = np.real(np.einsum("bii->bi", st))
        else:
            probs = np.abs(st) ** 2
        out[lo:hi] = probs @ signs
    return out


def _prepare(spec: CircuitSpec, features, params):
    f = np.atleast_2d(np.asarray(features, dtype=float))
    if f.shape[1] != spec.n_features:
        raise ValidationError(f"expected {spec.n_features} features, got {f.shape[1]}")
    p = np.asarray(params, dtype=float)
    if p.shape[-1] != spec.n_params:
        raise ValidationError(f"expected {spec.n_params} circuit parameters, got {p.shape[-1]}")
    p = np.broadcast_to(p, (f.shape[0], spec.n_params))
    feat_idx = np.array([e[2] for e in spec.encoding], dtype=np.int64)
    return f, p, feat_idx


def evaluate_batch(
    features, params, spec: CircuitSpec, noise: NoiseSpec | None = None, density: bool = False
) -> np.ndarray:
    """``<Z_k>`` for each row; features ``(B, 2m)``, params ``(2mL,)`` or ``(B, 2mL)``.

    ``density=True`` forces the density-matrix simulator even without noise.
    """
    f, p, feat_idx = _prepare(spec, np.clip(features, -np.pi, np.pi), params)
    return _run(spec, f[:, feat_idx], p, noise, density)


def evaluate_circuit(
    features, params, spec: CircuitSpec, noise: NoiseSpec | None = None, density: bool = False
) -> np.ndarray:
    """Expectation values ``<Z_0>, ..., <Z_{m-1}>`` for a single input."""
    f = np.asarray(features, dtype=float).reshape(1, -1)
    return evaluate_batch(f, params, spec, noise, density)[0]


def param_shift_grad(features, params, spec: CircuitSpec, noise: NoiseSpec | None, j: int) -> np.ndarray:
    """d<Z_k>/d(theta_j) for every k, from two circuit runs shifted by +-pi/2."""
    if not 0 <= j < spec.n_params:
        raise ValidationError(f"parameter index {j} out of range [0, {spec.n_params})")
    p = np.asarray(params, dtype=float).reshape(-1)
    shifted = np.stack([p, p])
    shifted[0, j] += SHIFT
    shifted[1, j] -= SHIFT
    f = np.asarray(features, dtype=float).reshape(1, -1)
    z = evaluate_batch(np.repeat(f, 2, axis=0), shifted, spec, noise)
    return 0.5 * (z[0] - z[1])


def shift_jacobians(features, params, spec: CircuitSpec, noise: NoiseSpec | None = None):
    """Outputs and parameter-shift Jacobians for a batch.

    Returns ``z`` ``(B, m)``, ``dz_dparams`` ``(B, m, 2mL)`` and
    ``dz_dfeatures`` ``(B, m, 2m)``. Features are not clipped here: shifted
    encoding angles must be allowed to leave ``[-pi, pi]``.
    """
    f, p, feat_idx = _prepare(spec, features, params)
    b = f.shape[0]
    n_par = spec.n_params
    n_enc = feat_idx.size
    enc = f[:, feat_idx]
    n_rows = 1 + 2 * n_par + 2 * n_enc
    big_enc = np.repeat(enc[None], n_rows, axis=0)
    big_par = np.repeat(p[None], n_rows, axis=0)
    for j in range(n_par):
        big_par[1 + 2 * j, :, j] += SHIFT
        big_par[2 + 2 * j, :, j] -= SHIFT
    off = 1 + 2 * n_par
    for s in range(n_enc):
        big_enc[off + 2 * s, :, s] += SHIFT
        big_enc[off + 2 * s + 1, :, s] -= SHIFT
    z_all = _run(spec, big_enc.reshape(n_rows * b, n_enc), big_par.reshape(n_rows * b, n_par), noise)
    z_all = z_all.reshape(n_rows, b, spec.m)
    z = z_all[0]
    dz_dp = 0.5 * (z_all[1:off:2] - z_all[2:off:2])  # (P, B, m)
    dz_denc = 0.5 * (z_all[off::2] - z_all[off + 1 :: 2])  # (E, B, m)
    dz_df = np.zeros((b, spec.m, spec.n_features))
    for s in range(n_enc):
        dz_df[:, :, feat_idx[s]] += dz_denc[s]
    return z, np.transpose(dz_dp, (1, 2, 0)), dz_df
