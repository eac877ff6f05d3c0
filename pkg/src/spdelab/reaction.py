"""Polynomial reaction terms b(xi, z), their Nemytskii action and validators.

b(xi, z) = sum_k C_k(xi) z^k with C_k constant or a low-order cosine series
in xi.  For m >= 1 the hypotheses require the top power 2m+1 with a strictly
negative coefficient function (written -C_{2m+1} with C_{2m+1} > 0) plus the
one-sided dissipativity inequality

    sup_xi (b(xi, z+h) - b(xi, z)) h <= -a h^(2(m+1)) + c (1 + |z|^theta),

validated here by a structural leading-coefficient check plus a numeric scan
over a logarithmic (z, h) lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import domain as dom


class ReactionError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientFn:
    """constant + sum of amp * prod_i cos(freq_i xi_i) terms."""

    constant: float = 0.0
    cosine: tuple = ()  # ((freq multi-index tuple, amplitude), ...)

    def __call__(self, axes: list[np.ndarray]) -> np.ndarray | float:
        if not self.cosine:
            return self.constant
        shape = tuple(len(a) for a in axes)
        out = np.full(shape, self.constant)
        for freq, amp in self.cosine:
            term = amp
            for i, (f, ax) in enumerate(zip(freq, axes)):
                c = np.cos(f * ax)
                term = term * c.reshape((1,) * i + (-1,) + (1,) * (len(axes) - i - 1))
            out = out + term
        return out

    def at_point(self, xi) -> float:
        """Evaluate at a single spatial point (scalar for d=1, tuple for d>1)."""
        pt = np.atleast_1d(np.asarray(xi, dtype=float))
        out = self.constant
        for freq, amp in self.cosine:
            out += amp * float(np.prod(np.cos(np.asarray(freq) * pt)))
        return out

    def bounds(self) -> tuple[float, float]:
        """Conservative (min, max) over the domain."""
        spread = sum(abs(a) for _, a in self.cosine)
        return self.constant - spread, self.constant + spread


def _as_coefficient(v) -> CoefficientFn:
    if isinstance(v, CoefficientFn):
        return v
    return CoefficientFn(constant=float(v))


@dataclass(frozen=True)
class DissipativityCertificate:
    a: float
    c: float
    theta: float


@dataclass(frozen=True)
class ReactionSpec:
    """Degree parameter m and the signed coefficient functions of b."""

    m: int
    coefficients: tuple  # ((power, CoefficientFn), ...) sorted by power
    certificate: DissipativityCertificate | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ReactionError("m must be >= 0")
        coeffs = tuple(sorted(((int(p), _as_coefficient(c)) for p, c in self.coefficients),
                              key=lambda t: t[0]))
        object.__setattr__(self, "coefficients", coeffs)
        top = 2 * self.m + 1
        for p, _ in coeffs:
            if p < 0 or p > top:
                raise ReactionError(
                    f"power {p} violates the growth hypothesis for m={self.m} (max {top})"
                )
        if self.m >= 1:
            lead = dict(coeffs).get(top)
            if lead is None:
                raise ReactionError(f"m={self.m} requires the leading power {top}")
            lo, hi = lead.bounds()
            if hi >= 0:
                raise ReactionError(
                    f"leading coefficient must be strictly negative everywhere "
                    f"(sup bound {hi:g} >= 0); dissipativity fails as |h| grows"
                )

    @classmethod
    def from_powers(cls, m: int, terms: dict, certificate=None) -> "ReactionSpec":
        return cls(m, tuple(terms.items()), certificate)

    @property
    def degree(self) -> int:
        return max((p for p, _ in self.coefficients), default=0)

    def derivative_terms(self, order: int) -> list:
        """(power, falling-factorial weight, CoefficientFn) of d^order b / dz^order."""
        out = []
        for p, c in self.coefficients:
            if p >= order:
                w = math.perm(p, order)
                out.append((p - order, w, c))
        return out


def identity_minus_cube() -> ReactionSpec:
    """b(z) = z - z^3, the standard dissipative cubic (m = 1)."""
    return ReactionSpec.from_powers(1, {1: 1.0, 3: -1.0})


def eval_b(spec: ReactionSpec, xi, z, order: int = 0):
    """d^order b / dz^order at (xi, z) by Horner evaluation.

    xi is a single spatial point (scalar for d=1, tuple for d>1) or a list
    of per-axis coordinate arrays; in the latter case z broadcasts against
    the resulting grid shape on trailing axes.
    """
    if order not in (0, 1, 2, 3):
        raise ReactionError("derivative order must be 0..3")
    z = np.asarray(z, dtype=float)
    terms = spec.derivative_terms(order)
    if isinstance(xi, (list, tuple)) and len(xi) and np.ndim(xi[0]) > 0:
        coeff_of = lambda c: c([np.asarray(a, dtype=float) for a in xi])
    else:
        coeff_of = lambda c: c.at_point(xi)
    if not terms:
        out = 0.0 * z
        return out if out.ndim else 0.0
    top = max(p for p, _, _ in terms)
    stack = [0.0] * (top + 1)
    for p, w, c in terms:
        stack[p] = stack[p] + w * coeff_of(c)
    out = 0.0 * z + stack[top]
    for p in range(top - 1, -1, -1):
        out = out * z + stack[p]
    return out if out.ndim else float(out)


# -- grid machinery for the pseudo-spectral Nemytskii action ----------------

def dealias_grid(spec: ReactionSpec, domain_spec: dom.DomainSpec) -> int:
    """Grid resolution for alias-free application of the degree-(2m+1) polynomial."""
    return max(domain_spec.grid, (2 * spec.m + 2) * domain_spec.modes)


@lru_cache(maxsize=64)
def _grid_poly_cached(spec: ReactionSpec, domain_spec: dom.DomainSpec, grid: int, order: int):
    """Coefficient stack of d^order b on the evaluation grid, low power first.

    Entries are scalars for constant coefficients or grid-shaped arrays.
    """
    axes = dom._grid_axes(domain_spec, grid)
    terms = spec.derivative_terms(order)
    if not terms:
        return (0.0,)
    top = max(p for p, _, _ in terms)
    stack = [0.0] * (top + 1)
    for p, w, c in terms:
        val = c(axes)
        stack[p] = stack[p] + (val * w if not np.isscalar(val) else val * w)
    return tuple(stack)


def eval_grid_poly(stack, z: np.ndarray) -> np.ndarray:
    """Horner evaluation of a coefficient stack against grid values z."""
    out = np.multiply(z, 0.0)
    out += stack[-1]
    for c in stack[-2::-1]:
        out *= z
        out += c
    return out


def apply_on_grid(spec: ReactionSpec, domain_spec: dom.DomainSpec, values: np.ndarray,
                  order: int = 0) -> np.ndarray:
    """Pointwise d^order b applied to grid values (any leading batch axes)."""
    grid = values.shape[-1] - 1
    stack = _grid_poly_cached(spec, domain_spec, grid, order)
    return eval_grid_poly(stack, values)


def nemytskii_flat(spec: ReactionSpec, domain_spec: dom.DomainSpec,
                   coeffs_flat: np.ndarray) -> np.ndarray:
    """F(x) for batched flat coefficient rows: synthesize on the dealiased
    grid, apply b pointwise, project back.  Shape-preserving."""
    g = dealias_grid(spec, domain_spec)
    shaped = coeffs_flat.reshape(coeffs_flat.shape[:-1] + domain_spec.field_shape())
    vals = dom.synthesize(shaped, domain_spec, grid=g)
    vals = apply_on_grid(spec, domain_spec, vals, order=0)
    out = dom.analyze(vals, domain_spec, grid=g)
    return out.reshape(coeffs_flat.shape)


def nemytskii_apply(spec: ReactionSpec, field: dom.SpectralField, order: int = 0):
    """Nemytskii action on a field.

    order=0 returns the projected SpectralField F(x); order>=1 returns the
    grid multiplier field (the potential used by the tangent flow).
    """
    g = dealias_grid(spec, field.spec)
    vals = field.grid_values(grid=g)
    out = apply_on_grid(spec, field.spec, vals, order=order)
    if order == 0:
        return dom.SpectralField(field.spec, dom.analyze(out, field.spec, grid=g))
    return out


def sup_b_prime(spec: ReactionSpec, z_range: float = 1e3) -> float:
    """sup over (xi, z) of d_z b, scanned on a symmetric log lattice.

    For a dissipative polynomial the sup is attained at moderate z; used as
    the pathwise Lipschitz rate eta of the flow.
    """
    zs = np.concatenate([[0.0], np.geomspace(1e-3, z_range, 121)])
    zs = np.concatenate([-zs[::-1], zs])
    xi = [np.linspace(0, np.pi, 65)]
    vals = eval_b(spec, xi, zs[:, None], order=1)
    return float(np.max(vals))


@dataclass(frozen=True)
class DissipativityReport:
    accepted: bool
    certificate: DissipativityCertificate | None
    reason: str
    violation: tuple | None = None  # (z, h) witnessing the failure


def validate_dissipativity(spec: ReactionSpec, lattice_max: float = 1e3,
                           lattice_points: int = 41) -> DissipativityReport:
    """Check the one-sided dissipativity inequality and produce a certificate.

    Accepts iff the structural leading-coefficient check holds (guarantees
    the h -> infinity behavior off the bounded lattice) and the scan over
    the log lattice |z|, |h| <= lattice_max finds constants (a, c, theta)
    with sup_xi (b(xi,z+h)-b(xi,z)) h <= -a h^(2(m+1)) + c (1+|z|^theta).
    For m = 0 the hypothesis is vacuous.
    """
    if spec.m == 0:
        return DissipativityReport(True, None, "m = 0: dissipativity not required")

    top = 2 * spec.m + 1
    lead = dict(spec.coefficients).get(top)
    lo, hi = lead.bounds() if lead is not None else (0.0, 0.0)
    # ReactionSpec construction already enforces hi < 0 for m >= 1, but a
    # hand-built tuple could bypass from_powers; re-check for a clear report.
    if lead is None or hi >= 0:
        grid = np.geomspace(1.0, lattice_max, 7)
        return DissipativityReport(
            False, None,
            "leading coefficient not strictly negative: (b(z+h)-b(z))h grows like "
            f"+h^{2 * spec.m + 2}",
            violation=(0.0, float(grid[-1])),
        )

    half = np.concatenate([[0.0], np.geomspace(1e-3, lattice_max, lattice_points)])
    lattice = np.concatenate([-half[:0:-1], half])
    z = lattice[:, None, None]
    h = lattice[None, :, None]
    xi = [np.linspace(0, np.pi, 33)]
    lhs = (eval_b(spec, xi, z + h) - eval_b(spec, xi, z)) * h
    lhs = lhs.max(axis=-1) if lhs.ndim == 3 else lhs  # sup over xi
    z2 = lattice[:, None]
    h2 = lattice[None, :]

    if spec.certificate is not None:
        cert = spec.certificate
    else:
        a = -hi / 2.0
        theta = float(2 * spec.m + 2)
        excess = lhs + a * h2 ** (2 * (spec.m + 1))
        c = float(np.max(excess / (1.0 + np.abs(z2) ** theta)))
        cert = DissipativityCertificate(a=a, c=max(c, 0.0), theta=theta)

    rhs = -cert.a * h2 ** (2 * (spec.m + 1)) + cert.c * (1.0 + np.abs(z2) ** cert.theta)
    bad = lhs > rhs + 1e-9 * (1.0 + np.abs(rhs))
    if np.any(bad):
        i, j = np.unravel_index(np.argmax(lhs - rhs), lhs.shape)
        return DissipativityReport(
            False, None,
            f"certificate (a={cert.a:g}, c={cert.c:g}, theta={cert.theta:g}) violated",
            violation=(float(lattice[i]), float(lattice[j])),
        )
    return DissipativityReport(True, cert, "scan satisfied on the full lattice")
