"""Polar Newton-Raphson AC power flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonConvergenceError, SingularJacobianError, ValidationError
from .case import PowerCase
from .network import AdmittanceMatrix, branch_flows, build_ybus

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50


@dataclass(frozen=True)
class PFSolution:
    v: np.ndarray
    phi: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    flows: np.ndarray  # (n_branch, 4): P_ij, Q_ij, P_ji, Q_ji
    iterations: int
    max_mismatch: float

    @property
    def losses(self) -> float:
        return float(np.sum(self.flows[:, 0] + self.flows[:, 2]))


def power_injections(v, phi, ybus: AdmittanceMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Complex-power injections ``V * conj(Y V)`` split into P and Q."""
    vc = v * np.exp(1j * phi)
    s = vc * np.conj(ybus.entries @ vc)
    return s.real, s.imag


def bus_mismatch(v, phi, case: PowerCase, ybus: AdmittanceMatrix | None = None) -> float:
    """Largest absolute P (non-slack) or Q (PQ) mismatch at a given state."""
    ybus = build_ybus(case) if ybus is None else ybus
    p_spec, q_spec = case.scheduled_injections()
    p, q = power_injections(v, phi, ybus)
    pvpq = np.r_[case.indices("pv"), case.indices("pq")]
    pq = case.indices("pq")
    mis = np.r_[p_spec[pvpq] - p[pvpq], q_spec[pq] - q[pq]]
    return float(np.max(np.abs(mis))) if mis.size else 0.0


def _jacobian(vc, ybus, pvpq, pq):
    y = ybus.entries
    i = y @ vc
    vnorm = vc / np.abs(vc)
    ds_dvm = vc[:, None] * np.conj(y * vnorm[None, :]) + np.diag(np.conj(i) * vnorm)
    ds_dva = 1j * vc[:, None] * np.conj(np.diag(i) - y * vc[None, :])
    j11 = ds_dva[np.ix_(pvpq, pvpq)].real
    j12 = ds_dvm[np.ix_(pvpq, pq)].real
    j21 = ds_dva[np.ix_(pq, pvpq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return np.block([[j11, j12], [j21, j22]])


def solve_nr(
    case: PowerCase,
    ybus: AdmittanceMatrix | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PFSolution:
    """Solve the AC power flow from a flat start.

    PV and slack magnitudes are held at their setpoints; every other magnitude
    starts at 1.0 and every angle at 0. The full Jacobian is rebuilt and
    factorised each iteration.

    Raises:
        NonConvergenceError: mismatch still above ``tol`` after ``max_iter``
            iterations (carries the last iterate).
        SingularJacobianError: the Jacobian could not be factorised.
    """
    if not tol > 0:
        raise ValidationError(f"tol must be > 0, got {tol}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
    ybus = build_ybus(case) if ybus is None else ybus

    pv, pq = case.indices("pv"), case.indices("pq")
    pvpq = np.r_[pv, pq]
    p_spec, q_spec = case.scheduled_injections()
    v = np.where([b.kind == "pq" for b in case.buses], 1.0, case.v_setpoints())
    phi = np.zeros(case.n)

    def mismatch():
        p, q = power_injections(v, phi, ybus)
        return np.r_[p_spec[pvpq] - p[pvpq], q_spec[pq] - q[pq]]

    f = mismatch()
    norm = float(np.max(np.abs(f))) if f.size else 0.0
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NonConvergenceError(
                f"Newton-Raphson did not converge in {max_iter} iterations (max mismatch {norm:.3e} p.u.)",
                iterations=it,
                last_iterate=(v.copy(), phi.copy()),
                max_mismatch=norm,
            )
        it += 1
        jac = _jacobian(v * np.exp(1j * phi), ybus, pvpq, pq)
        try:
            dx = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(f"singular Jacobian at iteration {it}", iteration=it) from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError(f"non-finite Newton step at iteration {it}", iteration=it)
        phi[pvpq] += dx[: pvpq.size]
        v[pq] += dx[pvpq.size :]
        if np.any(v <= 0):
            raise NonConvergenceError(
                f"voltage magnitude collapsed to <= 0 at iteration {it}",
                iterations=it,
                last_iterate=(v.copy(), phi.copy()),
                max_mismatch=norm,
            )
        f = mismatch()
        norm = float(np.max(np.abs(f)))
        if not np.isfinite(norm):
            raise NonConvergenceError(
                f"Newton-Raphson diverged at iteration {it}",
                iterations=it,
                last_iterate=(v.copy(), phi.copy()),
                max_mismatch=norm,
            )

    p, q = power_injections(v, phi, ybus)
    return PFSolution(
        v=v,
        phi=phi,
        p_inj=p,
        q_inj=q,
        flows=branch_flows(v, phi, case),
        iterations=it,
        max_mismatch=norm,
    )
