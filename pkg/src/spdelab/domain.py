"""Spectral representation of the Laplacian on [0, pi]^d and of states.

The operator A is the Dirichlet or Neumann Laplacian on the cube, diagonal
in its L2-normalized eigenbasis (products of sqrt(2/pi)*sin(k xi) resp.
cosines with a 1/sqrt(pi) constant mode).  States live as truncated
eigen-coefficient arrays; grid synthesis/analysis uses cached dense
sine/cosine matrices (exact for band-limited fields when the grid has at
least modes+1 intervals per axis, enforced by grid >= 4*modes).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class DomainError(ValueError):
    """Invalid domain parameter or inadmissible (dimension, gamma) pair."""


@dataclass(frozen=True)
class DomainSpec:
    """Cube [0, pi]^d with a boundary condition, noise color and cutoffs.

    gamma is the noise color: the driving noise is (-A)^(-gamma/2) dW.
    modes is the per-axis cutoff K, grid the per-axis resolution M
    (M subintervals, M+1 points including the boundary).
    """

    dimension: int
    boundary: str
    gamma: float
    modes: int
    grid: int

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.boundary not in (DIRICHLET, NEUMANN):
            raise DomainError(f"boundary must be {DIRICHLET!r} or {NEUMANN!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.boundary == NEUMANN and self.gamma > 0.0:
            raise DomainError(
                "Neumann requires gamma = 0: the constant mode makes the "
                "fractional power of -A undefined for gamma > 0"
            )
        if self.boundary == DIRICHLET and self.gamma <= (self.dimension - 2) / 2:
            raise DomainError(
                f"inadmissible color: d={self.dimension} Dirichlet cube needs "
                f"gamma > {(self.dimension - 2) / 2}, got {self.gamma}"
            )
        if self.modes < 1:
            raise DomainError("modes must be >= 1")
        if self.grid < 4 * self.modes:
            raise DomainError(
                f"grid must be >= 4*modes for anti-aliased evaluation "
                f"(grid={self.grid}, modes={self.modes})"
            )

    @property
    def n_modes(self) -> int:
        """Total number of retained modes, modes**dimension."""
        return self.modes**self.dimension

    def axis_indices(self) -> np.ndarray:
        """Per-axis mode indices: 1..K for Dirichlet, 0..K-1 for Neumann."""
        if self.boundary == DIRICHLET:
            return np.arange(1, self.modes + 1)
        return np.arange(self.modes)

    def multi_indices(self) -> np.ndarray:
        """All mode multi-indices, shape (n_modes, dimension), row-major."""
        ax = self.axis_indices()
        grids = np.meshgrid(*([ax] * self.dimension), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def eigenvalues(self) -> np.ndarray:
        """Flat vector of eigenvalues of -A, sum of squared axis indices."""
        return (self.multi_indices().astype(float) ** 2).sum(axis=-1)

    def field_shape(self) -> tuple:
        return (self.modes,) * self.dimension


def eigenvalue(k, spec: DomainSpec) -> float:
    """Eigenvalue of -A for the multi-index k (int for d=1)."""
    k = np.atleast_1d(np.asarray(k, dtype=int))
    if k.shape != (spec.dimension,):
        raise DomainError(f"multi-index {k} does not match dimension {spec.dimension}")
    ax = spec.axis_indices()
    if np.any(k < ax[0]) or np.any(k > ax[-1]):
        raise DomainError(f"multi-index {tuple(k)} out of range for {spec.boundary}, K={spec.modes}")
    return float((k.astype(float) ** 2).sum())


def heat_multiplier(t: float, k, spec: DomainSpec) -> float:
    """e^{-lambda_k t}, the eigenvalue action of the heat semigroup e^{tA}."""
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    return float(np.exp(-eigenvalue(k, spec) * t))


def color_multiplier(k, spec: DomainSpec) -> float:
    """lambda_k^{-gamma/2}, the noise-coloring factor of (-A)^{-gamma/2}."""
    lam = eigenvalue(k, spec)
    if lam == 0.0 and spec.gamma > 0.0:
        raise DomainError("zero eigenvalue: (-A)^{-gamma/2} undefined for gamma > 0")
    if lam == 0.0:
        return 1.0
    return float(lam ** (-spec.gamma / 2))


@lru_cache(maxsize=32)
def _axis_matrices(boundary: str, modes: int, grid: int):
    """Per-axis synthesis S (modes, grid+1) and analysis A (grid+1, modes).

    Synthesis evaluates L2-normalized eigenfunctions on the uniform grid
    xi_j = j*pi/grid, j = 0..grid.  Analysis is the trapezoid-rule L2
    projection, exact for band-limited input since modes <= grid - 1.
    Dirichlet boundary columns are exactly zero (the basis vanishes there).
    """
    M = grid
    xi = np.arange(M + 1) * (np.pi / M)
    if boundary == DIRICHLET:
        k = np.arange(1, modes + 1)
        synth = np.sqrt(2.0 / np.pi) * np.sin(np.outer(k, xi))
        synth[:, 0] = 0.0
        synth[:, M] = 0.0
        weights = np.full(M + 1, np.pi / M)
        weights[0] = weights[M] = 0.0  # integrand vanishes at the boundary
    else:
        k = np.arange(modes)
        synth = np.sqrt(2.0 / np.pi) * np.cos(np.outer(k, xi))
        synth[0, :] = 1.0 / np.sqrt(np.pi)
        weights = np.full(M + 1, np.pi / M)
        weights[0] = weights[M] = np.pi / (2 * M)
    analysis = (synth * weights).T
    return synth, analysis


def _grid_axes(spec: DomainSpec, grid: int | None = None):
    M = spec.grid if grid is None else grid
    return [np.arange(M + 1) * (np.pi / M)] * spec.dimension


def synthesize(coeffs: np.ndarray, spec: DomainSpec, grid: int | None = None) -> np.ndarray:
    """Evaluate coefficient arrays on the grid.

    coeffs has shape (..., K, .., K) with `dimension` trailing mode axes;
    the result replaces them by (M+1, .., M+1) grid axes.  Any leading axes
    (ensembles, stencil states) pass through.
    """
    M = spec.grid if grid is None else grid
    synth, _ = _axis_matrices(spec.boundary, spec.modes, M)
    out = coeffs
    for _ in range(spec.dimension):
        # contract the first trailing mode axis, append a grid axis
        out = np.tensordot(out, synth, axes=([out.ndim - spec.dimension], [0]))
    return out


def analyze(values: np.ndarray, spec: DomainSpec, grid: int | None = None) -> np.ndarray:
    """Project grid values back onto the retained eigenmodes.

    Exact inverse of synthesize for band-limited input; for general input
    this is the trapezoid-rule approximation of the L2 projection.
    """
    M = spec.grid if grid is None else grid
    _, analysis = _axis_matrices(spec.boundary, spec.modes, M)
    out = values
    for _ in range(spec.dimension):
        out = np.tensordot(out, analysis, axes=([out.ndim - spec.dimension], [0]))
    return out


@dataclass(frozen=True)
class SpectralField:
    """A state x as truncated eigen-coefficients over a DomainSpec.

    Treated as an immutable value; the coefficient array is not copied on
    construction and must not be mutated afterwards.
    """

    spec: DomainSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != self.spec.field_shape():
            raise DomainError(
                f"coefficient shape {c.shape} does not match domain {self.spec.field_shape()}"
            )
        if not np.all(np.isfinite(c)):
            raise DomainError("non-finite coefficients")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, spec: DomainSpec) -> "SpectralField":
        return cls(spec, np.zeros(spec.field_shape()))

    @classmethod
    def from_modes(cls, spec: DomainSpec, entries: dict) -> "SpectralField":
        """Build a field from {multi-index (or int for d=1): coefficient}."""
        c = np.zeros(spec.field_shape())
        ax = spec.axis_indices()
        for k, v in entries.items():
            idx = np.atleast_1d(np.asarray(k, dtype=int))
            pos = tuple(int(np.searchsorted(ax, i)) for i in idx)
            if any(p >= spec.modes or ax[p] != i for p, i in zip(pos, idx)):
                raise DomainError(f"multi-index {k} not in the retained set")
            c[pos] = v
        return cls(spec, c)

    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def grid_values(self, grid: int | None = None) -> np.ndarray:
        return synthesize(self.coeffs, self.spec, grid=grid)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.spec, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.spec, self.coeffs - other.coeffs)

    def __rmul__(self, c: float) -> "SpectralField":
        return SpectralField(self.spec, float(c) * self.coeffs)


def sup_norm(field: SpectralField, grid: int | None = None) -> float:
    """Uniform norm approximated by the max of |x| over the evaluation grid."""
    return float(np.abs(field.grid_values(grid=grid)).max())


def sup_norm_flat(coeffs_flat: np.ndarray, spec: DomainSpec, grid: int | None = None) -> np.ndarray:
    """sup-norm of batched flat coefficient rows, shape (...,) out."""
    shaped = coeffs_flat.reshape(coeffs_flat.shape[:-1] + spec.field_shape())
    vals = synthesize(shaped, spec, grid=grid)
    d = spec.dimension
    return np.abs(vals).max(axis=tuple(range(vals.ndim - d, vals.ndim)))
