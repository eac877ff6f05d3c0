"""Reproducible cylindrical Wiener increments and exact colored convolution.

Stream derivation (stable interface, golden files depend on it): the draws
for a given (seed, trajectory, step) are

    Generator(PCG64DXSM(SeedSequence(entropy=seed, spawn_key=(trajectory, step))))
    .standard_normal((2, n, modes))

re-derived at every step.  Row 0 scaled by sqrt(dt) is the vector of
Brownian increments dW; row 1 is the independent residual used to complete
the exact convolution increment.  Streams are therefore order independent:
two streams with equal (seed, trajectory) produce identical sequences
regardless of thread placement, and distinct trajectory indices give
independent sequences.

The stochastic convolution W_A(t) = int_0^t e^{(t-s)A} (-A)^{-gamma/2} dW(s)
is diagonal in the eigenbasis; per mode it is an Ornstein-Uhlenbeck process
sampled by its exact transition.  Over a step dt the pair (dW_k, eta_k) with

    eta_k = int e^{-lambda(t+dt-s)} lambda^{-gamma/2} dbeta_k(s)

is jointly Gaussian with Var(eta) = v = lambda^-gamma (1-e^{-2 lambda dt})/(2 lambda),
Cov(eta, dW) = lambda^{-gamma/2} (1-e^{-lambda dt})/lambda, so the exact
coupled draw is eta = (Cov/dt) dW + sqrt(v - Cov^2/dt) Z with Z independent.
This removes all time-discretization bias from the noise at any step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DomainSpec, NEUMANN


class NoiseError(ValueError):
    pass


@dataclass
class NoiseStream:
    """Counter-based per-trajectory noise stream."""

    seed: int
    trajectory: int = 0
    step: int = 0

    def child(self, trajectory: int) -> "NoiseStream":
        return NoiseStream(self.seed, trajectory, 0)

    def _generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.trajectory, self.step))
        return np.random.Generator(np.random.PCG64DXSM(ss))

    def draw_block(self, n: int, modes: int) -> np.ndarray:
        """One per-step block of standard normals, shape (2, n, modes)."""
        g = self._generator()
        z = g.standard_normal((2, n, modes))
        self.step += 1
        return z

    def draw_single(self, n: int, modes: int) -> np.ndarray:
        """A (n, modes) block for exact long-interval updates (one normal per mode)."""
        g = self._generator()
        z = g.standard_normal((n, modes))
        self.step += 1
        return z


def wiener_increments(stream: NoiseStream, dt: float, modes: int, n: int = 1) -> np.ndarray:
    """i.i.d. Gaussian(0, dt) increments, one per retained mode.

    Consumes the same (2, n, modes) block as the coupled convolution draw and
    returns sqrt(dt) * row 0, so a run evaluating this in lockstep with
    convolution_step sees the identical Brownian path.
    """
    if dt <= 0:
        raise NoiseError(f"dt must be > 0, got {dt}")
    z = stream.draw_block(n, modes)
    dW = np.sqrt(dt) * z[0]
    return dW[0] if n == 1 else dW


def ou_step_factors(lambdas: np.ndarray, gamma: float, dt: float):
    """Per-mode factors (decay, c1, c2) of the exact coupled OU update.

    w <- decay*w + eta with eta = c1*dW + c2*Z, dW ~ N(0, dt), Z ~ N(0,1).
    Handles the Neumann zero mode (lambda = 0, gamma = 0) by its Brownian
    limit v = dt, cov = dt.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any((lam == 0.0) & (gamma > 0.0)):
        raise NoiseError("zero eigenvalue with gamma > 0: colored noise undefined")
    decay = np.exp(-lam * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(lam > 0, lam**-gamma * (-np.expm1(-2 * lam * dt)) / (2 * lam), dt)
        cov = np.where(lam > 0, lam ** (-gamma / 2) * (-np.expm1(-lam * dt)) / lam, dt)
    c1 = cov / dt
    c2 = np.sqrt(np.maximum(var - cov**2 / dt, 0.0))
    return decay, c1, c2


def convolution_variance(lambdas: np.ndarray, gamma: float, t: float) -> np.ndarray:
    """Var W_A(t) per mode: lambda^-gamma (1 - e^{-2 lambda t}) / (2 lambda)."""
    lam = np.asarray(lambdas, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lam > 0, lam**-gamma * (-np.expm1(-2 * lam * t)) / (2 * lam), t)


@dataclass
class ConvolutionState:
    """Per-mode values of the stochastic convolution at the current time."""

    spec: DomainSpec
    values: np.ndarray = None
    time: float = 0.0
    lambdas: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.lambdas is None:
            self.lambdas = self.spec.eigenvalues()
        if self.values is None:
            self.values = np.zeros(self.spec.n_modes)


def convolution_step(state: ConvolutionState, dt: float, stream: NoiseStream) -> ConvolutionState:
    """Advance W_A by dt with the exact coupled transition; returns a new state."""
    if dt <= 0:
        raise NoiseError(f"dt must be > 0, got {dt}")
    spec = state.spec
    if spec.boundary == NEUMANN and spec.gamma > 0:
        raise NoiseError("Neumann zero mode with gamma > 0")
    decay, c1, c2 = ou_step_factors(state.lambdas, spec.gamma, dt)
    z = stream.draw_block(1, spec.n_modes)
    dW = np.sqrt(dt) * z[0, 0]
    eta = c1 * dW + c2 * z[1, 0]
    return ConvolutionState(
        spec=spec, values=decay * state.values + eta, time=state.time + dt, lambdas=state.lambdas
    )
