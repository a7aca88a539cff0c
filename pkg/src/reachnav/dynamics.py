"""Disturbed 4D unicycle model with bounded acceleration and turn rate.

State z = (x, y, v, phi), control u = (a, omega), disturbance
d = (d_x, d_y, d_phi):

    x' = v cos(phi) + d_x,   y' = v sin(phi) + d_y,   v' = a,   phi' = omega + d_phi

with |a| <= a_max, |omega| <= omega_max, d_x^2 + d_y^2 <= dxy_max^2,
|d_phi| <= dphi_max and the state constraint 0 <= v <= v_max.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .grid import wrap_angle

_SLACK = 1e-12


class Mode(enum.Enum):
    REACH = "reach"
    AVOID = "avoid"


class VehicleState(NamedTuple):
    x: float
    y: float
    v: float
    phi: float

    def as_array(self):
        return np.array(self, dtype=float)


class ControlInput(NamedTuple):
    a: float
    omega: float


class Disturbance(NamedTuple):
    dx: float = 0.0
    dy: float = 0.0
    dphi: float = 0.0


@dataclass(frozen=True)
class DynamicsBounds:
    v_max: float = 0.6
    a_max: float = 0.4
    omega_max: float = 1.1
    dxy_max: float = 0.05
    dphi_max: float = 0.15

    def __post_init__(self):
        for name in ("v_max", "a_max", "omega_max", "dxy_max", "dphi_max"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")
        if self.v_max <= 0:
            raise ValidationError("v_max must be positive")

    def without_disturbance(self):
        return replace(self, dxy_max=0.0, dphi_max=0.0)


def _sign(x):
    # sign(0) -> +1 so optimal inputs are deterministic on flat gradients
    return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)


def validate_control(control, bounds):
    a, omega = control
    if abs(a) > bounds.a_max + _SLACK or abs(omega) > bounds.omega_max + _SLACK:
        raise ValidationError(f"control {tuple(control)} outside bounds")


def validate_disturbance(dist, bounds):
    dx, dy, dphi = dist
    if np.hypot(dx, dy) > bounds.dxy_max + _SLACK or abs(dphi) > bounds.dphi_max + _SLACK:
        raise ValidationError(f"disturbance {tuple(dist)} outside bounds")


def rhs(z, control, dist, v_max=np.inf):
    """Time derivative of the state; speed is projected onto [0, v_max] first."""
    x, y, v, phi = z
    v = min(max(v, 0.0), v_max)
    return np.array([
        v * np.cos(phi) + dist[0],
        v * np.sin(phi) + dist[1],
        control[0],
        control[1] + dist[2],
    ])


def step(state, control, disturbance=Disturbance(), dt=0.05, bounds=DynamicsBounds(),
         method="rk4"):
    """Advance one step of length ``dt``.

    RK4 by default; ``method="euler"`` gives the explicit Euler map used by the
    planner's transcription and the tracker's linearization.  Speed is clamped
    and heading wrapped after the full step.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    control = ControlInput(*control)
    disturbance = Disturbance(*disturbance)
    validate_control(control, bounds)
    validate_disturbance(disturbance, bounds)
    z = np.asarray(state, dtype=float)
    f = lambda s: rhs(s, control, disturbance, bounds.v_max)
    if method == "rk4":
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    elif method == "euler":
        z = z + dt * f(z)
    else:
        raise ValidationError(f"unknown integration method {method!r}")
    return VehicleState(z[0], z[1], min(max(z[2], 0.0), bounds.v_max), float(wrap_angle(z[3])))


def optimal_control(grad, bounds, mode):
    """Control optimizing the Hamiltonian; REACH decreases the value, AVOID increases it."""
    g = np.asarray(grad, dtype=float)
    s = -1.0 if mode is Mode.REACH else 1.0
    return ControlInput(float(s * bounds.a_max * _sign(g[2])),
                        float(s * bounds.omega_max * _sign(g[3])))


def optimal_disturbance(grad, bounds, mode):
    """Worst-case disturbance: pushes up the gradient for REACH, down it for AVOID."""
    g = np.asarray(grad, dtype=float)
    s = 1.0 if mode is Mode.REACH else -1.0
    norm = np.hypot(g[0], g[1])
    if norm > 0.0:
        dx, dy = s * bounds.dxy_max * g[0] / norm, s * bounds.dxy_max * g[1] / norm
    else:
        dx = dy = 0.0
    return Disturbance(float(dx), float(dy), float(s * bounds.dphi_max * _sign(g[3])))


def hamiltonian(grad, state, bounds, mode):
    """Closed-form max-min (REACH) or min-max (AVOID) of -grad . f - 1."""
    gx, gy, gv, gphi = np.asarray(grad, dtype=float)
    _, _, v, phi = state
    drift = -gx * v * np.cos(phi) - gy * v * np.sin(phi)
    ctrl = bounds.a_max * abs(gv) + bounds.omega_max * abs(gphi)
    dist = bounds.dxy_max * np.hypot(gx, gy) + bounds.dphi_max * abs(gphi)
    if mode is Mode.REACH:
        return float(drift + ctrl - dist - 1.0)
    return float(drift - ctrl + dist - 1.0)


def hamiltonian_at(grad, state, control, dist):
    """-grad . f(z, u, d) - 1 for explicit inputs (no optimization)."""
    f = rhs(state, control, dist)
    return float(-np.dot(np.asarray(grad, dtype=float), f) - 1.0)
