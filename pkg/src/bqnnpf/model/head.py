"""Physical output head: normalized (V, phi) -> normalized branch flows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..powerflow.case import PowerCase
from ..powerflow.network import from_flow_partials
from ..powerflow.scenarios import Normalization


@dataclass
class Prediction:
    """Normalized predictions; arrays are ``(n,)`` for one input or ``(B, n)`` for a batch."""

    v_hat: np.ndarray
    phi_hat: np.ndarray
    flows_hat: np.ndarray  # from-end P_ij then Q_ij, normalized

    def vector(self) -> np.ndarray:
        return np.concatenate([self.v_hat, self.phi_hat, self.flows_hat], axis=-1)

    @classmethod
    def from_vector(cls, vec: np.ndarray, n: int) -> Prediction:
        return cls(vec[..., :n], vec[..., n : 2 * n], vec[..., 2 * n :])


class FlowHead:
    """Derives normalized branch flows from normalized voltage predictions.

    The flows are computed on denormalized per-unit voltages with the same
    branch-flow equations that generated the ground truth.
    """

    def __init__(self, case: PowerCase, target_norm: Normalization):
        self.case = case
        self.n = case.n
        self.nb = case.n_branch
        self.norm = target_norm
        f, t, *_ = case.branch_arrays()
        self._af = np.zeros((self.nb, self.n))
        self._at = np.zeros((self.nb, self.n))
        self._af[np.arange(self.nb), f] = 1.0
        self._at[np.arange(self.nb), t] = 1.0

    def _split_norm(self):
        n = self.n
        mu, sc = self.norm.mean, self.norm.scale
        return mu[:n], sc[:n], mu[n : 2 * n], sc[n : 2 * n], mu[2 * n :], sc[2 * n :]

    def physical(self, o):
        mv, sv, mp, sp, _, _ = self._split_norm()
        n = self.n
        return o[:, :n] * sv + mv, o[:, n:] * sp + mp

    def forward(self, o: np.ndarray) -> np.ndarray:
        """``o``: ``(B, 2n)`` normalized ``(V, phi)`` -> ``(B, 2 n_branch)`` normalized flows."""
        *_, mf, sf = self._split_norm()
        v, phi = self.physical(o)
        p, q, _, _ = from_flow_partials(v, phi, self.case)
        return (np.concatenate([p, q], axis=1) - mf) / sf

    def backward(self, o: np.ndarray, cot: np.ndarray) -> np.ndarray:
        """Pull a cotangent on the normalized flows back onto ``o``."""
        _, sv, _, sp, _, sf = self._split_norm()
        nb = self.nb
        v, phi = self.physical(o)
        _, _, dp, dq = from_flow_partials(v, phi, self.case)
        cp = cot[:, :nb] / sf[:nb]
        cq = cot[:, nb:] / sf[nb:]
        gv = (cp * dp["vf"] + cq * dq["vf"]) @ self._af + (cp * dp["vt"] + cq * dq["vt"]) @ self._at
        gph = cp * dp["phf"] + cq * dq["phf"]
        gphi = gph @ self._af - gph @ self._at
        return np.concatenate([gv * sv, gphi * sp], axis=1)
