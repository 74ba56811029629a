"""Constant-velocity Kalman filter over [x, y, z, vx, vy, vz]."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

H = np.hstack([np.eye(3), np.zeros((3, 3))])


class KalmanError(ArithmeticError):
    """Innovation covariance is singular (degenerate noise configuration)."""


def transition(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[0, 3] = F[1, 4] = F[2, 5] = dt
    return F


def process_noise(dt: float, q: float) -> np.ndarray:
    """Continuous white-acceleration noise with spectral density ``q`` (m^2/s^3)."""
    Q = np.zeros((6, 6))
    for i in range(3):
        Q[i, i] = q * dt**3 / 3.0
        Q[i, i + 3] = Q[i + 3, i] = q * dt**2 / 2.0
        Q[i + 3, i + 3] = q * dt
    return Q


@dataclass(frozen=True, eq=False)
class KalmanCV:
    x: np.ndarray           # state mean (6,)
    P: np.ndarray           # state covariance (6, 6)
    q: float = 4.0          # acceleration spectral density
    r: float = 0.1          # measurement std (m), isotropic

    @classmethod
    def from_measurement(cls, z, q: float = 4.0, r: float = 0.1, vel_sigma: float = 2.0,
                         velocity=None) -> "KalmanCV":
        x = np.zeros(6)
        x[:3] = np.asarray(z, dtype=float)
        if velocity is not None:
            x[3:] = velocity
        pos_var = max(r * r, 1e-8)
        P = np.diag([pos_var] * 3 + [vel_sigma**2] * 3)
        return cls(x, P, q, r)

    @property
    def position(self) -> np.ndarray:
        return self.x[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[3:]


def kf_predict(kf: KalmanCV, dt: float) -> KalmanCV:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    F = transition(dt)
    P = F @ kf.P @ F.T + process_noise(dt, kf.q)
    return KalmanCV(F @ kf.x, 0.5 * (P + P.T), kf.q, kf.r)


def kf_update(kf: KalmanCV, z) -> KalmanCV:
    z = np.asarray(z, dtype=float)
    R = np.eye(3) * kf.r**2
    S = H @ kf.P @ H.T + R
    try:
        if np.linalg.cond(S) > 1e14:
            raise KalmanError(f"innovation covariance ill-conditioned (cond={np.linalg.cond(S):.3g})")
        K = np.linalg.solve(S, H @ kf.P).T
    except np.linalg.LinAlgError as exc:
        raise KalmanError(str(exc)) from exc
    x = kf.x + K @ (z - H @ kf.x)
    IKH = np.eye(6) - K @ H
    P = IKH @ kf.P @ IKH.T + K @ R @ K.T  # Joseph form keeps P symmetric PSD
    return KalmanCV(x, 0.5 * (P + P.T), kf.q, kf.r)


def rollout(kf: KalmanCV, dt: float, steps: int) -> np.ndarray:
    """Constant-velocity mean positions at ``dt, 2dt, ..., steps*dt`` ahead."""
    k = np.arange(1, steps + 1)[:, None] * dt
    return kf.x[:3][None, :] + k * kf.x[3:][None, :]
