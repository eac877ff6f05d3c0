"""Monte Carlo evaluation of the transition semigroup and its calculus.

P(t)f(x) = E f(X(t,x)) is estimated by ensemble means over exact-noise
trajectories; the spatial gradient uses the probabilistic representation

    <DP(t)f(x), h> = (1/t) E[ f(X(t,x)) M^h(t) ],

with M^h the running stochastic integral of the tangent flow co-integrated
by the solver (no differentiation of f).  The resolvent

    u(x) = int_0^inf e^{-lam t} P(t)f(x) dt

and the evolution source term int_0^t P(s) g(t-s,.)(x) ds are computed by
composite quadrature over a geometric node grid, with all nodes evaluated
along one continuously recorded ensemble (per-path quadrature sums give
exact Monte Carlo errors under the induced correlation) and a power-law
head extrapolation matching the t^{-(1+gamma)/2} gradient singularity.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import domain as dom
from . import reaction as rx
from . import solver as sv
from ._util import fingerprint, ols_loglog
from .noise import NoiseStream


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class SemigroupEstimate:
    value: float
    stderr: float
    n_samples: int
    t: float
    fingerprint: str = ""


@dataclass(frozen=True)
class QuadratureBudget:
    """Sampling and quadrature resolution for time-integrated estimators."""

    tolerance: float = 1e-2
    n_paths: int = 2048
    nodes_per_decade: int = 10
    t_min: float = 1e-4
    t_max: float | None = None
    steps_per_scale: int = 50
    dt_cap: float = 5e-3
    batch_size: int = 4096
    threads: int = 1


def _flat(x, spec: dom.DomainSpec) -> np.ndarray:
    if isinstance(x, dom.SpectralField):
        return x.flat()
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != spec.n_modes:
        raise EstimatorError(f"state has {x.size} coefficients, domain wants {spec.n_modes}")
    return x


def run_ensemble(spec: dom.DomainSpec, reaction: rx.ReactionSpec | None, *,
                 x_states, f, record_times, seed: int, n_paths: int,
                 tangent_dirs=None, stages=None, dt: float = 1e-3,
                 batch_size: int = 4096, threads: int = 1, guard: float = 1e6):
    """Run a coupled ensemble and record observables at the given times.

    x_states: (S, K) initial rows sharing each path's noise; f: callable on
    coefficient rows, or a list of callables (one per record time).
    Returns (values (T, S, n), bel (T, D, S, n) or None).

    Paths are split into fixed-size batches; batch b consumes the stream
    (seed, trajectory=b), so results are bitwise independent of the thread
    count and identical for any threads >= 1.
    """
    x_states = np.atleast_2d(np.asarray(x_states, dtype=float))
    S = x_states.shape[0]
    record_times = [float(t) for t in record_times]
    T = len(record_times)
    fs = f if isinstance(f, (list, tuple)) else [f] * T
    if len(fs) != T:
        raise EstimatorError("need one observable per record time")
    if stages is None:
        stages = [(dt, max(record_times))]

    values = np.empty((T, S, n_paths))
    bel = None
    D = 0
    if tangent_dirs is not None:
        tangent_dirs = np.atleast_2d(np.asarray(tangent_dirs, dtype=float))
        D = tangent_dirs.shape[0]
        bel = np.empty((T, D, S, n_paths))

    starts = list(range(0, n_paths, batch_size))

    def run_batch(b):
        lo = starts[b]
        hi = min(lo + batch_size, n_paths)
        state = sv.initial_state(x_states, hi - lo, tangent_dirs,
                                 broadcast_tangents=(reaction is None))
        stream = NoiseStream(seed, trajectory=b)

        def on_record(i, st):
            values[i, :, lo:hi] = fs[i](st.coeffs)
            if bel is not None:
                bel[i, :, :, lo:hi] = st.bel

        sv.run_recorded(state, spec, reaction, stream, stages, record_times,
                        on_record, guard=guard)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run_batch, range(len(starts))))
    else:
        for b in range(len(starts)):
            run_batch(b)
    return values, bel


def _estimate(samples: np.ndarray, t: float, fp: str = "") -> SemigroupEstimate:
    n = samples.size
    return SemigroupEstimate(
        value=float(samples.mean()),
        stderr=float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        n_samples=n, t=t, fingerprint=fp,
    )


def _fp(spec, seed, dt, n, t):
    return fingerprint({"K": spec.modes, "gamma": spec.gamma, "seed": seed,
                        "dt": dt, "n": n, "t": t})


def estimate_Pt(f, x, t: float, n_samples: int, *, spec: dom.DomainSpec,
                reaction: rx.ReactionSpec | None = None, dt: float = 1e-3,
                seed: int = 0, batch_size: int = 4096, threads: int = 1) -> SemigroupEstimate:
    """Ensemble-mean estimate of P(t)f(x); exact (zero error) at t = 0."""
    if t < 0:
        raise EstimatorError("t must be >= 0")
    xv = _flat(x, spec)
    if t == 0:
        return SemigroupEstimate(float(f(xv)), 0.0, 1, 0.0, _fp(spec, seed, dt, 1, 0.0))
    values, _ = run_ensemble(spec, reaction, x_states=xv[None], f=f, record_times=[t],
                             seed=seed, n_paths=n_samples, dt=dt,
                             batch_size=batch_size, threads=threads)
    return _estimate(values[0, 0], t, _fp(spec, seed, dt, n_samples, t))


def bel_gradient(f, x, h, t: float, n_samples: int, *, spec: dom.DomainSpec,
                 reaction: rx.ReactionSpec | None = None, dt: float = 1e-3,
                 seed: int = 0, batch_size: int = 4096, threads: int = 1) -> SemigroupEstimate:
    """Probabilistic-gradient estimate of <DP(t)f(x), h>; needs t > 0."""
    if t <= 0:
        raise EstimatorError("the gradient representation needs t > 0")
    xv = _flat(x, spec)
    hv = _flat(h, spec)
    values, bel = run_ensemble(spec, reaction, x_states=xv[None], f=f, record_times=[t],
                               seed=seed, n_paths=n_samples, tangent_dirs=hv[None],
                               dt=dt, batch_size=batch_size, threads=threads)
    samples = values[0, 0] * bel[0, 0, 0] / t
    return _estimate(samples, t, _fp(spec, seed, dt, n_samples, t))


def bel_second_difference(f, x, h, k, t: float, n_samples: int, *,
                          spec: dom.DomainSpec, reaction: rx.ReactionSpec | None = None,
                          eps: float = 1e-3, dt: float = 1e-3, seed: int = 0,
                          batch_size: int = 4096, threads: int = 1) -> SemigroupEstimate:
    """D^2 P(t)f(x)(h, k) via coupled-noise central differences of the gradient."""
    if t <= 0:
        raise EstimatorError("t must be > 0")
    if not 0 < eps <= 1e-2:
        raise EstimatorError("eps must lie in (0, 1e-2]")
    xv = _flat(x, spec)
    kv = _flat(k, spec)
    hv = _flat(h, spec)
    states = np.stack([xv + eps * kv, xv - eps * kv])
    values, bel = run_ensemble(spec, reaction, x_states=states, f=f, record_times=[t],
                               seed=seed, n_paths=n_samples, tangent_dirs=hv[None],
                               dt=dt, batch_size=batch_size, threads=threads)
    g = values[0] * bel[0, 0] / t  # (2, n) coupled gradient integrands
    samples = (g[0] - g[1]) / (2 * eps)
    return _estimate(samples, t, _fp(spec, seed, dt, n_samples, t))


def gradient_decay_probe(f, t_grid, base_points, directions, n_samples: int, *,
                         spec: dom.DomainSpec, reaction: rx.ReactionSpec | None = None,
                         dt: float = 1e-3, seed: int = 0, batch_size: int = 4096,
                         threads: int = 1) -> dict:
    """Probe sup_x ||DP(t)f(x)|| on a log time grid and fit the decay slope.

    base_points: (B, K) rows; directions: (D, K) unit-sup-norm rows.  The
    per-time statistic is the max over (base, direction) of the absolute
    gradient estimate; slope is the log-log OLS fit over the grid.
    """
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    bases = np.atleast_2d(np.asarray(base_points, dtype=float))
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    values, bel = run_ensemble(spec, reaction, x_states=bases, f=f,
                               record_times=list(t_grid), seed=seed, n_paths=n_samples,
                               tangent_dirs=dirs, dt=dt, batch_size=batch_size,
                               threads=threads)
    # (T, D, B): mean and stderr of the gradient estimator per probe
    integ = values[:, None, :, :] * bel / t_grid[:, None, None, None]
    means = integ.mean(axis=-1)
    stderrs = integ.std(axis=-1, ddof=1) / math.sqrt(n_samples)
    stat = np.abs(means).max(axis=(1, 2))
    slope, intercept, r2, slope_se = ols_loglog(t_grid, stat)
    return {"t": t_grid, "sup_gradient": stat, "slope": slope, "r2": r2,
            "slope_stderr": slope_se, "per_probe_mean": means,
            "per_probe_stderr": stderrs,
            "fingerprint": _fp(spec, seed, dt, n_samples, list(t_grid))}


# -- time quadrature --------------------------------------------------------

def staged_schedule(t_min: float, t_max: float, lam_max: float,
                    steps_per_scale: int = 50, dt_cap: float = 5e-3):
    """Fixed staged dt schedule, fine near 0 and coarser by decade.

    Stage boundaries sit at 100*t_min*10^j; each stage's dt divides its span
    exactly and respects dt*lam_max <= 45.
    """
    cap = 45.0 / lam_max if lam_max > 0 else np.inf
    cap = min(cap, dt_cap)
    stages = []
    start, bound, dt = 0.0, 100.0 * t_min, t_min
    while start < t_max - 1e-15:
        end = min(bound, t_max)
        d = min(dt, cap)
        n = max(1, int(math.ceil((end - start) / d - 1e-9)))
        stages.append(((end - start) / n, end))
        start = end
        dt = bound / steps_per_scale
        bound *= 10.0
    return stages


def _snap_nodes(t_min, t_max, nodes_per_decade, stages):
    """Geometric nodes snapped onto the staged step grid (sorted, unique)."""
    n_nodes = max(4, int(math.ceil(math.log10(t_max / t_min) * nodes_per_decade)) + 1)
    raw = np.geomspace(t_min, t_max, n_nodes)
    snapped = []
    start = 0.0
    for d, end in stages:
        for t in raw:
            if start - 1e-15 < t <= end + 1e-15:
                k = max(1, int(round((t - start) / d)))
                tt = start + k * d
                if tt <= end + 1e-12:
                    snapped.append(round(tt, 12))
        start = end
    snapped.append(round(stages[-1][1], 12))
    return np.unique(np.asarray(snapped))


def _gradient_singularity(f, gamma: float) -> float:
    """Small-t exponent q of ||DP(t)f|| ~ t^{-q}: q = (1-alpha)(1+gamma)/2.

    alpha is the datum's Hoelder order (0 for merely bounded f).  The
    time integral of the gradient exists only for q < 1, which excludes
    gamma = 1 with rough f (there u is Zygmund, not differentiable).
    """
    a = getattr(f, "alpha", None)
    a = 0.0 if a is None else min(1.0, max(0.0, float(a)))
    q = (1.0 - a) * (1.0 + gamma) / 2.0
    if q >= 1.0 - 1e-9:
        raise EstimatorError(
            f"gradient integrand t^-{q:g} is not integrable (gamma={gamma:g}, "
            f"datum Hoelder order {a:g}); probe values, not gradients"
        )
    return q


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros_like(nodes)
    d = np.diff(nodes)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass
class QuadratureResult:
    """Per-path time integrals over a coupled stencil of states."""

    nodes: np.ndarray
    weights: np.ndarray
    path_values: np.ndarray        # (S, n) per-path integrals incl. head
    node_means: np.ndarray         # (T, S)
    node_stderrs: np.ndarray       # (T, S)
    head: np.ndarray               # (S,) mean head contribution
    tail_bound: float
    quad_error: float
    n_samples: int
    fingerprint: str = ""

    def mc_stderr(self) -> np.ndarray:
        return self.path_values.std(axis=-1, ddof=1) / math.sqrt(self.n_samples)


def _path_quadrature(nodes, integrand, head_factor):
    """Trapezoid over nodes plus head extrapolation; thinned-grid error probe."""
    w = _trapezoid_weights(nodes)
    I = np.einsum("t,tsn->sn", w, integrand)
    head = head_factor * integrand[0]
    I = I + head
    thin_idx = np.unique(np.r_[0:len(nodes):2, len(nodes) - 1])
    w_thin = _trapezoid_weights(nodes[thin_idx])
    I_thin = np.einsum("t,tsn->sn", w_thin, integrand[thin_idx]) + head
    quad_err = float(np.abs((I - I_thin).mean(axis=-1)).max())
    return I, w, head.mean(axis=-1), quad_err


def resolvent_samples(f, x_states, lam: float, budget: QuadratureBudget, *,
                      spec: dom.DomainSpec, reaction: rx.ReactionSpec | None = None,
                      seed: int = 0, tangent_dirs=None, gradient: bool = False,
                      f_sup: float | None = None) -> QuadratureResult:
    """Per-path samples of u = R(lam, N)f (or <Du, h> with gradient=True)
    over a coupled stencil of initial states."""
    if lam <= 0:
        raise EstimatorError("lam must be > 0")
    if gradient and tangent_dirs is None:
        raise EstimatorError("gradient sampling needs a tangent direction")
    q_head = _gradient_singularity(f, spec.gamma) if gradient else 0.0
    sup = f_sup if f_sup is not None else getattr(f, "sup", 1.0)
    t_max = budget.t_max
    if t_max is None:
        t_max = max(1.0, math.log(10.0 * max(sup, 1e-12) / (lam * budget.tolerance)) / lam)
    lam_max = float(spec.eigenvalues().max())
    stages = staged_schedule(budget.t_min, t_max, lam_max,
                             budget.steps_per_scale, budget.dt_cap)
    nodes = _snap_nodes(budget.t_min, t_max, budget.nodes_per_decade, stages)
    x_states = np.atleast_2d(np.asarray(x_states, dtype=float))
    values, bel = run_ensemble(spec, reaction, x_states=x_states, f=f,
                               record_times=list(nodes), seed=seed,
                               n_paths=budget.n_paths, tangent_dirs=tangent_dirs,
                               stages=stages, batch_size=budget.batch_size,
                               threads=budget.threads)
    damp = np.exp(-lam * nodes)
    if gradient:
        integrand = damp[:, None, None] / nodes[:, None, None] * (values * bel[:, 0])
        head_factor = nodes[0] / (1.0 - q_head)
    else:
        integrand = damp[:, None, None] * values
        head_factor = nodes[0]
    I, w, head, quad_err = _path_quadrature(nodes, integrand, head_factor)
    tail = math.exp(-lam * t_max) * sup / lam
    if gradient:
        tail = abs(float(integrand[-1].mean())) / lam
    return QuadratureResult(
        nodes=nodes, weights=w, path_values=I,
        node_means=integrand.mean(axis=-1), node_stderrs=integrand.std(axis=-1, ddof=1) / math.sqrt(budget.n_paths),
        head=head, tail_bound=tail, quad_error=quad_err, n_samples=budget.n_paths,
        fingerprint=_fp(spec, seed, stages[0][0], budget.n_paths, t_max),
    )


@dataclass(frozen=True)
class ResolventEstimate:
    value: float
    stderr: float
    lam: float
    nodes: np.ndarray
    weights: np.ndarray
    node_estimates: np.ndarray
    node_stderrs: np.ndarray
    node_n: int
    head: float
    tail_bound: float
    quad_error: float
    mc_error: float
    partial: bool
    fingerprint: str = ""

    def total_error(self) -> float:
        return max(self.mc_error, self.quad_error + self.tail_bound)

    def node_table(self):
        """Audit rows (t, weight, estimate, stderr, n) per quadrature node."""
        return [(float(t), float(w), float(e), float(s), self.node_n)
                for t, w, e, s in zip(self.nodes, self.weights,
                                      self.node_estimates, self.node_stderrs)]


def _to_resolvent_estimate(q: QuadratureResult, lam: float,
                           budget: QuadratureBudget) -> ResolventEstimate:
    mc = float(q.mc_stderr()[0])
    partial = (q.quad_error + q.tail_bound + mc) > budget.tolerance
    return ResolventEstimate(
        value=float(q.path_values[0].mean()), stderr=mc, lam=lam, nodes=q.nodes,
        weights=q.weights, node_estimates=q.node_means[:, 0],
        node_stderrs=q.node_stderrs[:, 0], node_n=q.n_samples, head=float(q.head[0]),
        tail_bound=q.tail_bound, quad_error=q.quad_error, mc_error=mc,
        partial=partial, fingerprint=q.fingerprint,
    )


def resolvent(f, x, lam: float, budget: QuadratureBudget, *, spec: dom.DomainSpec,
              reaction: rx.ReactionSpec | None = None, seed: int = 0) -> ResolventEstimate:
    """u(x) = R(lam, N)f(x) by node-wise Monte Carlo plus quadrature."""
    q = resolvent_samples(f, _flat(x, spec)[None], lam, budget, spec=spec,
                          reaction=reaction, seed=seed)
    return _to_resolvent_estimate(q, lam, budget)


def resolvent_gradient(f, x, h, lam: float, budget: QuadratureBudget, *,
                       spec: dom.DomainSpec, reaction: rx.ReactionSpec | None = None,
                       seed: int = 0) -> ResolventEstimate:
    """<Du(x), h> = int_0^inf e^{-lam t} <DP(t)f(x), h> dt (needs gamma < 1)."""
    q = resolvent_samples(f, _flat(x, spec)[None], lam, budget, spec=spec,
                          reaction=reaction, seed=seed,
                          tangent_dirs=_flat(h, spec)[None], gradient=True)
    return _to_resolvent_estimate(q, lam, budget)


def evolution_samples(f, g, t: float, x_states, budget: QuadratureBudget, *,
                      spec: dom.DomainSpec, reaction: rx.ReactionSpec | None = None,
                      seed: int = 0, tangent_dirs=None, gradient: bool = False) -> QuadratureResult:
    """Per-path samples of the evolution mild solution v(t, x) over a stencil.

    v(t,x) = P(t)f(x) + int_0^t P(s) g(t-s, .)(x) ds; g is a TestFunction
    (time-constant) or a callable s -> TestFunction.  With gradient=True the
    sampled quantity is the tangent pairing of the source term plus the
    P(t)f gradient, i.e. <Dv(t,x), h>.
    """
    if t <= 0:
        raise EstimatorError("t must be > 0")
    g_at = g if callable(g) and not hasattr(g, "sup") else (lambda s: g)
    q_head = _gradient_singularity(g_at(t), spec.gamma) if gradient else 0.0
    lam_max = float(spec.eigenvalues().max())
    stages = staged_schedule(budget.t_min, t, lam_max, budget.steps_per_scale,
                             budget.dt_cap)
    nodes = _snap_nodes(budget.t_min, t, budget.nodes_per_decade, stages)
    x_states = np.atleast_2d(np.asarray(x_states, dtype=float))
    observables = [g_at(t - s) for s in nodes]
    record_times = list(nodes)
    f_index = None
    if f is not None:
        # evaluate f at the final time alongside the last source node
        f_index = len(record_times)
        record_times = record_times + [t]
        observables = observables + [f]
    values, bel = run_ensemble(spec, reaction, x_states=x_states, f=observables,
                               record_times=record_times, seed=seed,
                               n_paths=budget.n_paths, tangent_dirs=tangent_dirs,
                               stages=stages, batch_size=budget.batch_size,
                               threads=budget.threads)
    T = len(nodes)
    if gradient:
        integrand = values[:T] * bel[:T, 0] / nodes[:, None, None]
        head_factor = nodes[0] / (1.0 - q_head)
    else:
        integrand = values[:T]
        head_factor = nodes[0]
    I, w, head, quad_err = _path_quadrature(nodes, integrand, head_factor)
    if f_index is not None:
        if gradient:
            I = I + values[f_index] * bel[f_index, 0] / t
        else:
            I = I + values[f_index]
    return QuadratureResult(
        nodes=nodes, weights=w, path_values=I, node_means=integrand.mean(axis=-1),
        node_stderrs=integrand.std(axis=-1, ddof=1) / math.sqrt(budget.n_paths),
        head=head, tail_bound=0.0, quad_error=quad_err, n_samples=budget.n_paths,
        fingerprint=_fp(spec, seed, stages[0][0], budget.n_paths, t),
    )


def evolution_mild(f, g, t: float, x, budget: QuadratureBudget, *,
                   spec: dom.DomainSpec, reaction: rx.ReactionSpec | None = None,
                   seed: int = 0) -> SemigroupEstimate:
    """MC + quadrature estimate of v(t, x); g time-constant or s-indexed."""
    if t == 0:
        xv = _flat(x, spec)
        return SemigroupEstimate(float(f(xv)) if f is not None else 0.0, 0.0, 1, 0.0)
    q = evolution_samples(f, g, t, _flat(x, spec)[None], budget, spec=spec,
                          reaction=reaction, seed=seed)
    est = _estimate(q.path_values[0], t, q.fingerprint)
    return est
