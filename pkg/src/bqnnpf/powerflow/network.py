"""Bus admittance matrix and branch power flows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .case import PowerCase


@dataclass(frozen=True)
class AdmittanceMatrix:
    entries: np.ndarray  # dense (n, n) complex

    @property
    def G(self) -> np.ndarray:
        return self.entries.real

    @property
    def B(self) -> np.ndarray:
        return self.entries.imag


def build_ybus(case: PowerCase) -> AdmittanceMatrix:
    """Dense per-unit admittance matrix.

    Off-nominal taps sit on the from side: ``Y_ff`` gets ``y / t**2``, both
    off-diagonals ``-y / t``. Line charging contributes ``j b_c / 2`` at each
    end and bus shunts ``j shunt_b`` on the diagonal.
    """
    n = case.n
    y = np.zeros((n, n), dtype=complex)
    f, t, r, x, bc, tap = case.branch_arrays()
    ys = 1.0 / (r + 1j * x)
    np.add.at(y, (f, f), ys / tap**2 + 0.5j * bc)
    np.add.at(y, (t, t), ys + 0.5j * bc)
    np.add.at(y, (f, t), -ys / tap)
    np.add.at(y, (t, f), -ys / tap)
    y[np.arange(n), np.arange(n)] += 1j * np.array([b.shunt_b for b in case.buses])
    return AdmittanceMatrix(y)


def _branch_params(case: PowerCase):
    f, t, r, x, bc, tap = case.branch_arrays()
    ys = 1.0 / (r + 1j * x)
    return f, t, ys.real, ys.imag, bc, 1.0 / tap


def branch_flows(v, phi, case: PowerCase) -> np.ndarray:
    """Per-branch ``(P_ij, Q_ij, P_ji, Q_ji)`` in p.u., shape ``(n_branch, 4)``.

    With series admittance ``g + jb``, charging ``b_c`` and unit taps::

        P_ij = V_i^2 g - V_i V_j (g cos phi_ij + b sin phi_ij)
        Q_ij = -V_i^2 (b + b_c/2) - V_i V_j (g sin phi_ij - b cos phi_ij)

    Also accepts batched ``(B, n)`` inputs and then returns ``(B, n_branch, 4)``.
    """
    v = np.asarray(v, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if v.shape != phi.shape or v.shape[-1] != case.n:
        raise ValidationError(f"v and phi must both have length {case.n}, got {v.shape} and {phi.shape}")
    f, t, g, b, bc, a = _branch_params(case)
    vf, vt = v[..., f], v[..., t]
    d = phi[..., f] - phi[..., t]
    c, s = np.cos(d), np.sin(d)
    vv = a * vf * vt
    p_ij = vf**2 * g * a**2 - vv * (g * c + b * s)
    q_ij = -(vf**2) * (b * a**2 + 0.5 * bc) - vv * (g * s - b * c)
    p_ji = vt**2 * g - vv * (g * c - b * s)
    q_ji = -(vt**2) * (b + 0.5 * bc) - vv * (-g * s - b * c)
    return np.stack([p_ij, q_ij, p_ji, q_ji], axis=-1)


def from_flow_partials(v, phi, case: PowerCase):
    """From-end flows and their partial derivatives, batched over rows.

    Args:
        v, phi: ``(B, n)`` voltage magnitudes and angles.

    Returns:
        ``(p, q, dp, dq)`` where ``p, q`` are ``(B, n_branch)`` and each of
        ``dp, dq`` is a dict with keys ``vf, vt, phf`` holding ``(B, n_branch)``
        partials w.r.t. the from/to magnitudes and the from-end angle (the
        to-end angle partial is the negative of ``phf``).
    """
    f, t, g, b, bc, a = _branch_params(case)
    vf, vt = v[:, f], v[:, t]
    d = phi[:, f] - phi[:, t]
    c, s = np.cos(d), np.sin(d)
    k1 = g * c + b * s
    k2 = g * s - b * c
    p = vf**2 * g * a**2 - a * vf * vt * k1
    q = -(vf**2) * (b * a**2 + 0.5 * bc) - a * vf * vt * k2
    dp = {
        "vf": 2 * vf * g * a**2 - a * vt * k1,
        "vt": -a * vf * k1,
        "phf": a * vf * vt * k2,
    }
    dq = {
        "vf": -2 * vf * (b * a**2 + 0.5 * bc) - a * vt * k2,
        "vt": -a * vf * k2,
        "phf": -a * vf * vt * k1,
    }
    return p, q, dp, dq
