"""Dense state-vector time evolution for small Hilbert spaces (dim <= 16).

Fixed-step 4th-order Runge-Kutta on the Schrodinger equation (hbar = 1,
energies in rad/s), with per-step renormalization.  Stochastic decay/loss
is handled by first-order quantum-jump sampling on top of the non-Hermitian
effective Hamiltonian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StateVector",
    "OperatorMatrix",
    "JumpChannel",
    "JumpTarget",
    "DimensionError",
    "evolve",
    "trajectory_evolve",
    "expectation",
]


class DimensionError(ValueError):
    """Operator/state dimension mismatch."""


class JumpTarget(enum.Enum):
    LOSS_FROM_RYDBERG = "loss_from_rydberg"
    RECYCLE_TO_GROUND = "recycle_to_ground"


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state; amplitudes are copied and frozen on construction."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex)
        if amp.ndim != 1 or amp.size == 0:
            raise DimensionError("state must be a nonempty 1-D complex vector")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class OperatorMatrix:
    """Square complex matrix; Hermiticity checked on construction when flagged."""

    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise DimensionError("operator must be a square matrix")
        if self.hermitian and np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("matrix flagged Hermitian is not Hermitian within 1e-12")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class JumpChannel:
    """Stochastic decay channel: rate (1/s) times a source projector."""

    rate: float
    target_label: JumpTarget
    source_projector: OperatorMatrix

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("jump rate must be >= 0")


def _as_matrix(h, dim: int) -> np.ndarray:
    m = h.entries if isinstance(h, OperatorMatrix) else np.asarray(h, dtype=complex)
    if m.shape != (dim, dim):
        raise DimensionError(f"Hamiltonian shape {m.shape} does not match dim {dim}")
    if not np.all(np.isfinite(m.view(float))):
        raise ValueError("non-finite Hamiltonian entry")
    return m


def _rk4_span(psi, h_of_t, t0, t1, dt, renormalize=True, extra=None):
    """Integrate i dpsi/dt = (H(t) + extra) psi from t0 to t1 in place-free steps.

    `extra` is an optional constant (possibly non-Hermitian) matrix added to
    every H(t) evaluation; used for the jump-channel damping term.
    """
    dim = psi.size
    span = t1 - t0
    if span == 0:
        return psi.copy()
    n_steps = max(1, int(np.ceil(span / dt)))
    h = span / n_steps
    y = psi.copy()
    for i in range(n_steps):
        t = t0 + i * h
        h0 = _as_matrix(h_of_t(t), dim)
        hm = _as_matrix(h_of_t(t + 0.5 * h), dim)
        h1 = _as_matrix(h_of_t(t + h), dim)
        if extra is not None:
            h0 = h0 + extra
            hm = hm + extra
            h1 = h1 + extra
        k1 = -1j * (h0 @ y)
        k2 = -1j * (hm @ (y + 0.5 * h * k1))
        k3 = -1j * (hm @ (y + 0.5 * h * k2))
        k4 = -1j * (h1 @ (y + h * k3))
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if renormalize:
            y = y / np.linalg.norm(y)
    return y


def evolve(state: StateVector, hamiltonian_of_t, t0: float, t1: float, dt: float) -> StateVector:
    """Evolve `state` under the time-dependent Hamiltonian from t0 to t1.

    `hamiltonian_of_t(t)` must return a Hermitian matrix (OperatorMatrix or
    ndarray) of matching dimension for any t in [t0, t1].  The step count is
    ceil((t1-t0)/dt); convergence requires dt << 2*pi / max energy scale.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    y = _rk4_span(np.array(state.amplitudes), hamiltonian_of_t, t0, t1, dt)
    return StateVector(y)


def trajectory_evolve(state, hamiltonian_of_t, channels, t0, t1, dt, rng):
    """Single Monte-Carlo quantum trajectory with first-order jump sampling.

    Between jumps the state evolves under H - (i/2) sum(rate * P) and is
    renormalized each step; a jump in channel k fires with probability
    rate_k * <psi|P_k|psi> * dt per step (keep the per-step total below 1e-3
    by choosing dt).  Each jump projects onto the channel projector,
    renormalizes, and is recorded as (time, target_label).  With all rates
    zero this is bit-identical to `evolve`.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    channels = list(channels)
    for ch in channels:
        if ch.source_projector.dim != state.dim:
            raise DimensionError("jump projector dimension mismatch")
    if all(ch.rate == 0 for ch in channels):
        return evolve(state, hamiltonian_of_t, t0, t1, dt), []

    rates = np.array([ch.rate for ch in channels])
    projs = [ch.source_projector.entries for ch in channels]
    damp = sum(-0.5j * r * p for r, p in zip(rates, projs))

    span = t1 - t0
    n_steps = max(1, int(np.ceil(span / dt)))
    h = span / n_steps
    y = np.array(state.amplitudes)
    events = []
    for i in range(n_steps):
        t = t0 + i * h
        pops = np.array([np.real(np.vdot(y, p @ y)) for p in projs])
        jump_p = rates * np.clip(pops, 0.0, None) * h
        u = rng.random()
        total = jump_p.sum()
        if u < total:
            k = int(np.searchsorted(np.cumsum(jump_p), u, side="right"))
            k = min(k, len(channels) - 1)
            y = projs[k] @ y
            nrm = np.linalg.norm(y)
            if nrm == 0:
                raise ValueError("jump projected onto a zero state")
            y = y / nrm
            events.append((t, channels[k].target_label))
        else:
            y = _rk4_span(y, hamiltonian_of_t, t, t + h, h, renormalize=False, extra=damp)
            y = y / np.linalg.norm(y)
    return StateVector(y), events


def expectation(state: StateVector, projector: OperatorMatrix) -> float:
    """<psi|P|psi> for an idempotent projector, clamped to [0, 1]."""
    p = projector.entries
    if p.shape[0] != state.dim:
        raise DimensionError("projector dimension mismatch")
    if np.max(np.abs(p @ p - p)) > 1e-12:
        raise ValueError("projector is not idempotent within 1e-12")
    val = np.real(np.vdot(state.amplitudes, p @ state.amplitudes))
    return float(min(1.0, max(0.0, val)))
