"""Constant-acceleration Kalman filter over box corners.

State: [x_min, y_min, x_max, y_max, 4 velocities, 4 accelerations].
Measurement: the four corner coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import NumericalFailureError

STATE_DIM = 12
MEAS_DIM = 4


def transition_matrix(dt: float = 1.0) -> np.ndarray:
    A = np.eye(STATE_DIM)
    A[0:4, 4:8] = dt * np.eye(4)
    A[0:4, 8:12] = 0.5 * dt * dt * np.eye(4)
    A[4:8, 8:12] = dt * np.eye(4)
    return A


def observation_matrix() -> np.ndarray:
    H = np.zeros((MEAS_DIM, STATE_DIM))
    H[:, :MEAS_DIM] = np.eye(MEAS_DIM)
    return H


@dataclass(frozen=True, eq=False)
class KalmanModel:
    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P0: np.ndarray
    dt: float = 1.0

    @classmethod
    def constant_acceleration(cls, dt=1.0, process_var=1e-2, meas_var=1.0, init_var=10.0):
        return cls(
            A=transition_matrix(dt),
            H=observation_matrix(),
            Q=process_var * np.eye(STATE_DIM),
            R=meas_var * np.eye(MEAS_DIM),
            P0=init_var * np.eye(STATE_DIM),
            dt=dt,
        )

    def initial_state(self, box) -> Tuple[np.ndarray, np.ndarray]:
        x = np.zeros(STATE_DIM)
        x[:4] = np.asarray(box, dtype=float)
        return x, self.P0.copy()


def kalman_predict(x, P, model: KalmanModel):
    x = model.A @ x
    P = model.A @ P @ model.A.T + model.Q
    return x, 0.5 * (P + P.T)


def kalman_update(x, P, z, model: KalmanModel):
    """Correction step; the posterior covariance uses the Joseph form."""
    H, R = model.H, model.R
    z = np.asarray(z, dtype=float)
    S = H @ P @ H.T + R
    try:
        if np.linalg.cond(S) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"innovation covariance is singular: {exc}") from None
    x = x + K @ (z - H @ x)
    I_KH = np.eye(P.shape[0]) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return x, 0.5 * (P + P.T)
