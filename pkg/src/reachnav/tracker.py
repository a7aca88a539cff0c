"""Time-varying LQR tracking of a sampled spline reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ControlInput, DynamicsBounds
from .errors import NumericalError, ValidationError
from .grid import wrap_angle

DEFAULT_Q = np.diag([1.0, 1.0, 0.1, 0.5])
DEFAULT_R = np.diag([0.1, 0.1])


@dataclass(frozen=True)
class LqrGains:
    gains: np.ndarray  # (N, 2, 4)
    feedforward: np.ndarray  # (N, 2)
    Q: np.ndarray
    R: np.ndarray
    cost_to_go: np.ndarray  # (N+1, 4, 4), P_0 .. P_N

    def __len__(self):
        return len(self.gains)


def linearize(traj, dt=None):
    """Jacobians of the explicit Euler step about each reference sample i = 0..N-1."""
    dt = traj.dt if dt is None else dt
    ref = traj.states[:-1]
    n = len(ref)
    v, phi = ref[:, 2], ref[:, 3]
    A = np.tile(np.eye(4), (n, 1, 1))
    A[:, 0, 2] = np.cos(phi) * dt
    A[:, 0, 3] = -v * np.sin(phi) * dt
    A[:, 1, 2] = np.sin(phi) * dt
    A[:, 1, 3] = v * np.cos(phi) * dt
    B = np.zeros((n, 4, 2))
    B[:, 2, 0] = dt
    B[:, 3, 1] = dt
    return A, B


def solve_lqr(A_seq, B_seq, Q=DEFAULT_Q, R=DEFAULT_R, feedforward=None):
    """Finite-horizon discrete Riccati recursion with terminal cost Q.

    K_i = (R + B'P B)^-1 B'P A and P_i = Q + A'P (A - B K_i).
    """
    A_seq = np.asarray(A_seq, dtype=float)
    B_seq = np.asarray(B_seq, dtype=float)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if A_seq.ndim != 3 or B_seq.ndim != 3 or len(A_seq) == 0 or len(A_seq) != len(B_seq):
        raise ValidationError("A and B sequences must be nonempty stacks of equal length")
    n, nx, _ = A_seq.shape
    nu = B_seq.shape[2]
    if A_seq.shape[2] != nx or B_seq.shape[1] != nx or Q.shape != (nx, nx) or R.shape != (nu, nu):
        raise ValidationError("non-conformal LQR matrices")
    if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
        raise ValidationError("R must be symmetric positive definite")
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-12:
        raise ValidationError("Q must be symmetric positive semidefinite")

    P = Q.copy()
    Ps = [P]
    K = np.zeros((n, nu, nx))
    for i in range(n - 1, -1, -1):
        A, B = A_seq[i], B_seq[i]
        BtP = B.T @ P
        K[i] = np.linalg.solve(R + BtP @ B, BtP @ A)
        P = Q + A.T @ P @ (A - B @ K[i])
        P = 0.5 * (P + P.T)
        if np.linalg.eigvalsh(P).min() < -1e-10 * max(1.0, np.abs(P).max()):
            raise NumericalError("Riccati cost-to-go lost positive semidefiniteness")
        Ps.append(P)
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite LQR gain")
    ff = np.zeros((n, nu)) if feedforward is None else np.asarray(feedforward, dtype=float)[:n]
    return LqrGains(K, ff, Q, R, np.array(Ps[::-1]))


def gains_for(traj, Q=DEFAULT_Q, R=DEFAULT_R):
    """Gains along ``traj``; the feedforward is each step's mean reference control.

    The simulator holds a control for a whole step, so the interval mean
    tracks the continuous reference to second order in dt.
    """
    A, B = linearize(traj)
    ff = 0.5 * (traj.controls[:-1] + traj.controls[1:])
    return solve_lqr(A, B, Q, R, feedforward=ff)


def track_step(state, reference_state, reference_control, gain, bounds=DynamicsBounds()):
    """u = u_ref + K (z_ref - z), heading error wrapped, then saturated."""
    err = np.asarray(reference_state, dtype=float) - np.asarray(state, dtype=float)
    err[3] = wrap_angle(err[3])
    u = np.asarray(reference_control, dtype=float) + np.asarray(gain) @ err
    return ControlInput(float(np.clip(u[0], -bounds.a_max, bounds.a_max)),
                        float(np.clip(u[1], -bounds.omega_max, bounds.omega_max)))
