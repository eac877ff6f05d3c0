"""Cylindrical test functions with closed-form norms.

All families are built from lacunary cosine ladders

    f(x) = sum_j A_j cos(w_j <x, e_{k_j}> + phi_j)

on dyadic pure modes k_j = 1, 2, 4, ...  Blocks live on distinct
coordinates, so the sup norm is exactly sum |A_j| (attained coordinatewise)
and the Hoelder seminorm is bounded by the closed-form block sum.  The
frequency law w_j = lambda_j^{(1+gamma)/2} matches the smoothing scale of
the colored semigroup per mode, which is what makes measured gradient-decay
and Schauder exponents sharp rather than saturating at the single-mode
(gamma-independent) rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DomainSpec, DIRICHLET

_GOLDEN = 0.6180339887498949


@dataclass(frozen=True)
class TestFunction:
    """Scalar observable on states, evaluated from coefficient rows."""

    kind: str
    mode_idx: tuple  # flat coefficient indices, one per block
    amps: tuple
    freqs: tuple
    phases: tuple
    sup: float
    alpha: float | None = None  # exact Hoelder order; 1.0 means Lipschitz
    seminorm: float | None = None  # closed-form bound on [f]_alpha
    label: str = ""
    profile: object = field(default=None, compare=False)  # overrides the ladder

    def __call__(self, coeff_rows: np.ndarray) -> np.ndarray:
        """Evaluate on (..., n_modes) coefficient arrays."""
        x = np.asarray(coeff_rows)
        if self.profile is not None:
            return self.profile(x)
        out = 0.0
        for k, a, w, p in zip(self.mode_idx, self.amps, self.freqs, self.phases):
            out = out + a * np.cos(w * x[..., k] + p)
        return out


def _phases(n):
    return tuple(2 * np.pi * ((np.arange(1, n + 1) * _GOLDEN) % 1.0))


def ladder_modes(spec: DomainSpec, max_blocks: int | None = None):
    """Dyadic pure-mode ladder: flat indices and eigenvalues for k = 1,2,4,..

    d=1 only (regularity campaigns are one-dimensional).
    """
    if spec.dimension != 1:
        raise ValueError("mode ladders are defined for d=1")
    ks, k = [], 1
    while k <= spec.modes:
        ks.append(k)
        k *= 2
    if max_blocks is not None:
        ks = ks[:max_blocks]
    if spec.boundary == DIRICHLET:
        idx = [k - 1 for k in ks]
    else:
        idx = list(ks)
    lam = [float(k * k) for k in ks]
    return tuple(idx), tuple(lam)


def bounded_rough(spec: DomainSpec, gamma: float | None = None,
                  max_blocks: int | None = None) -> TestFunction:
    """Bounded, uniformly continuous, not Hoelder of any positive order.

    Equal-amplitude ladder with w_j = lambda_j^{(1+gamma)/2}; sup norm 1.
    """
    g = spec.gamma if gamma is None else gamma
    idx, lam = ladder_modes(spec, max_blocks)
    J = len(idx)
    amps = tuple([1.0 / J] * J)
    freqs = tuple(l ** ((1 + g) / 2) for l in lam)
    return TestFunction("bounded-rough", idx, amps, freqs, _phases(J), sup=1.0,
                        alpha=None, seminorm=None, label=f"rough(g={g:g})")


def cylindrical_holder(spec: DomainSpec, alpha: float, gamma: float | None = None,
                       max_blocks: int | None = None) -> TestFunction:
    """alpha-Hoelder ladder: A_j = w_j^{-alpha} / J, same frequency law.

    [f]_alpha <= sum_j A_j w_j^alpha 2^{1-alpha} = 2^{1-alpha} in the block
    coordinates; exact alpha since the highest block dominates small scales.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0,1)")
    g = spec.gamma if gamma is None else gamma
    idx, lam = ladder_modes(spec, max_blocks)
    J = len(idx)
    freqs = tuple(l ** ((1 + g) / 2) for l in lam)
    amps = tuple(w ** (-alpha) / J for w in freqs)
    return TestFunction("cylindrical-holder", idx, amps, freqs, _phases(J),
                        sup=float(sum(amps)), alpha=alpha,
                        seminorm=2.0 ** (1 - alpha),
                        label=f"holder(a={alpha:g},g={g:g})")


def cylindrical_lipschitz(spec: DomainSpec, gamma: float | None = None,
                          max_blocks: int | None = None) -> TestFunction:
    """Lipschitz ladder: A_j = 1/(J w_j); [f]_Lip <= 1 in block coordinates."""
    g = spec.gamma if gamma is None else gamma
    idx, lam = ladder_modes(spec, max_blocks)
    J = len(idx)
    freqs = tuple(l ** ((1 + g) / 2) for l in lam)
    amps = tuple(1.0 / (J * w) for w in freqs)
    return TestFunction("cylindrical-lipschitz", idx, amps, freqs, _phases(J),
                        sup=float(sum(amps)), alpha=1.0, seminorm=1.0,
                        label=f"lipschitz(g={g:g})")


def cylindrical_cosine(spec: DomainSpec, mode=None, freq: float = 1.0,
                       phase: float = 0.0) -> TestFunction:
    """Smooth single-block cosine f(x) = cos(freq <x, e_mode> + phase)."""
    if mode is None:
        mode = 0
    return TestFunction("cylindrical-smooth", (int(mode),), (1.0,), (float(freq),),
                        (float(phase),), sup=1.0, alpha=1.0, seminorm=float(freq),
                        label=f"cos({freq:g}x[{mode}])")


def tent(spec: DomainSpec, mode: int = 0) -> TestFunction:
    """f(x) = max(0, 1 - |<x, e_mode>|): exact Lipschitz 1, sup 1."""

    def prof(x):
        return np.maximum(0.0, 1.0 - np.abs(x[..., mode]))

    return TestFunction("cylindrical-lipschitz", (mode,), (1.0,), (1.0,), (0.0,),
                        sup=1.0, alpha=1.0, seminorm=1.0, label="tent", profile=prof)


def constant(value: float) -> TestFunction:
    def prof(x):
        return np.full(x.shape[:-1], float(value))

    return TestFunction("cylindrical-smooth", (), (), (), (), sup=abs(float(value)),
                        alpha=1.0, seminorm=0.0, label=f"const({value:g})",
                        profile=prof)


def from_config(spec: DomainSpec, block: dict) -> TestFunction:
    """Build a test function from a campaign config block."""
    kind = str(block.get("kind", "rough")).lower()
    if kind in ("rough", "bounded-rough"):
        return bounded_rough(spec, block.get("gamma"))
    if kind in ("holder", "hoelder"):
        return cylindrical_holder(spec, float(block["alpha"]), block.get("gamma"))
    if kind == "lipschitz":
        return cylindrical_lipschitz(spec, block.get("gamma"))
    if kind in ("cosine", "smooth"):
        return cylindrical_cosine(spec, block.get("mode", 0),
                                  float(block.get("freq", 1.0)),
                                  float(block.get("phase", 0.0)))
    if kind == "tent":
        return tent(spec, int(block.get("mode", 0)))
    if kind == "constant":
        return constant(float(block.get("value", 1.0)))
    raise ValueError(f"unknown test function kind {kind!r}")
