"""Campaign orchestration: validate, run subcommands, summarize artifacts.

Artifacts carry the config fingerprint, package version and seed, contain
no timestamps, and are written with deterministic formatting, so identical
(config, seed) reruns are byte-identical at any worker-thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import domain as dom
from . import functions as fn
from . import regularity as rg
from . import semigroup as sg
from . import solver as sv
from ._util import write_csv
from .config import ExperimentConfig, validate
from .noise import NoiseStream


def _field_from(spec: dom.DomainSpec, entries) -> np.ndarray:
    """Flat initial state from [{mode: int|list, coeff: float}, ...]."""
    if not entries:
        return np.zeros(spec.n_modes)
    mapping = {}
    for e in entries:
        k = e["mode"]
        key = tuple(k) if isinstance(k, (list, tuple)) else (int(k),) * spec.dimension
        mapping[key] = float(e["coeff"])
    return dom.SpectralField.from_modes(spec, mapping).flat()


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "fingerprint": cfg.fingerprint(),
            "seed": cfg.seed, "version": __version__}


def _write_report(out: Path, payload: dict):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def cmd_validate(cfg: ExperimentConfig, out: Path) -> int:
    rep = validate(cfg)
    payload = _meta(cfg, "validate")
    payload.update({"ok": rep.ok, "errors": rep.errors, "notes": rep.notes})
    _write_report(out, payload)
    print(rep.message())
    return 0 if rep.ok else 1


def _common(cfg: ExperimentConfig):
    rep = validate(cfg)
    if not rep.ok:
        raise SystemExit(rep.message())
    spec = cfg.domain_spec()
    reaction = cfg.reaction_spec()
    est = cfg.estimator()
    return spec, reaction, est


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    spec, reaction, est = _common(cfg)
    camp = cfg.campaign()
    scfg = cfg.solver_config()
    times = camp.get("times") or list(np.round(np.linspace(0.1, scfg.horizon, 10), 10))
    x0 = _field_from(spec, camp.get("x0"))
    n = int(est["samples"])
    nm = min(4, spec.n_modes)
    rows = []

    def observe(rows_out):
        def on_record(i, st):
            c = st.coeffs[0]  # (n_batch, K)
            rows_out.append((i, c[:, :nm].copy(), dom.sup_norm_flat(c, spec)))
        return on_record

    # batched, deterministic reduction in batch order
    batch = int(est["batch_size"])
    acc = {i: [] for i in range(len(times))}
    for b, lo in enumerate(range(0, n, batch)):
        nb = min(batch, n - lo)
        state = sv.initial_state(x0[None], nb)
        recs = []
        sv.run_recorded(state, spec, reaction, NoiseStream(cfg.seed, trajectory=b),
                        [(scfg.dt, max(times))], times, observe(recs))
        for i, modes, sups in recs:
            acc[i].append((modes, sups))
    for i, t in enumerate(times):
        modes = np.concatenate([m for m, _ in acc[i]], axis=0)
        sups = np.concatenate([s for _, s in acc[i]])
        row = [t]
        for k in range(nm):
            row += [modes[:, k].mean(), modes[:, k].var(ddof=1) if n > 1 else 0.0]
        row += [sups.mean(), sups.max()]
        rows.append(row)
    header = ["t"]
    for k in range(nm):
        header += [f"mode{k}_mean", f"mode{k}_var"]
    header += ["sup_mean", "sup_max"]
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trajectories.csv", header, rows)
    payload = _meta(cfg, "simulate")
    payload.update({"times": times, "n_samples": n, "columns": header})
    _write_report(out, payload)
    print(f"simulate: {len(times)} record times, {n} paths -> {out / 'trajectories.csv'}")
    return 0


def cmd_semigroup(cfg: ExperimentConfig, out: Path) -> int:
    spec, reaction, est = _common(cfg)
    camp = cfg.campaign()
    f = fn.from_config(spec, camp.get("function", {}))
    x0 = _field_from(spec, camp.get("x0"))
    times = camp.get("times") or [0.1, 0.5, 1.0]
    ests = []
    for t in times:
        e = sg.estimate_Pt(f, x0, float(t), int(est["samples"]), spec=spec,
                           reaction=reaction, dt=cfg.solver_config().dt,
                           seed=cfg.seed, batch_size=int(est["batch_size"]),
                           threads=cfg.threads)
        ests.append({"t": e.t, "value": e.value, "stderr": e.stderr, "n": e.n_samples})
    payload = _meta(cfg, "semigroup")
    payload.update({"function": f.label, "estimates": ests})
    _write_report(out, payload)
    print(json.dumps(ests, indent=2))
    return 0


def cmd_gradient(cfg: ExperimentConfig, out: Path) -> int:
    spec, reaction, est = _common(cfg)
    camp = cfg.campaign()
    f = fn.from_config(spec, camp.get("function", {}))
    x0 = _field_from(spec, camp.get("x0"))
    h = _field_from(spec, camp.get("direction") or [{"mode": 1, "coeff": 1.0}])
    times = camp.get("times") or [0.1, 1.0]
    eps = float(camp.get("fd_eps", 1e-3))
    results = []
    for t in times:
        g = sg.bel_gradient(f, x0, h, float(t), int(est["samples"]), spec=spec,
                            reaction=reaction, dt=cfg.solver_config().dt,
                            seed=cfg.seed, batch_size=int(est["batch_size"]),
                            threads=cfg.threads)
        row = {"t": g.t, "gradient": g.value, "stderr": g.stderr, "n": g.n_samples}
        if camp.get("fd_check", True):
            states = np.stack([x0 + eps * h, x0 - eps * h])
            vals, _ = sg.run_ensemble(spec, reaction, x_states=states, f=f,
                                      record_times=[float(t)], seed=cfg.seed + 1,
                                      n_paths=int(est["samples"]),
                                      dt=cfg.solver_config().dt,
                                      batch_size=int(est["batch_size"]),
                                      threads=cfg.threads)
            fd = (vals[0, 0] - vals[0, 1]) / (2 * eps)
            row["fd"] = float(fd.mean())
            row["fd_stderr"] = float(fd.std(ddof=1) / np.sqrt(fd.size))
        results.append(row)
    payload = _meta(cfg, "gradient")
    payload.update({"function": f.label, "results": results})
    _write_report(out, payload)
    print(json.dumps(results, indent=2))
    return 0


def _budget(est, threads) -> sg.QuadratureBudget:
    return sg.QuadratureBudget(
        tolerance=float(est["tolerance"]), n_paths=int(est["samples"]),
        nodes_per_decade=int(est["nodes_per_decade"]), t_min=float(est["t_min"]),
        t_max=(None if est.get("t_max") in (None, "null") else float(est["t_max"])),
        batch_size=int(est["batch_size"]), threads=threads,
    )


def _write_nodes(out: Path, est: sg.ResolventEstimate):
    write_csv(out / "nodes.csv", ["t", "weight", "estimate", "stderr", "n"],
              est.node_table())


def cmd_resolvent(cfg: ExperimentConfig, out: Path) -> int:
    spec, reaction, est = _common(cfg)
    camp = cfg.campaign()
    f = fn.from_config(spec, camp.get("function", {}))
    x0 = _field_from(spec, camp.get("x0"))
    lam = float(est["lambda"])
    budget = _budget(est, cfg.threads)
    r = sg.resolvent(f, x0, lam, budget, spec=spec, reaction=reaction, seed=cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    _write_nodes(out, r)
    payload = _meta(cfg, "resolvent")
    payload.update({
        "function": f.label, "lambda": lam, "value": r.value, "stderr": r.stderr,
        "head": r.head, "tail_bound": r.tail_bound, "quad_error": r.quad_error,
        "mc_error": r.mc_error, "partial": r.partial, "n": r.node_n,
    })
    if camp.get("direction"):
        h = _field_from(spec, camp["direction"])
        gr = sg.resolvent_gradient(f, x0, h, lam, budget, spec=spec,
                                   reaction=reaction, seed=cfg.seed)
        payload["gradient"] = {"value": gr.value, "stderr": gr.stderr,
                               "quad_error": gr.quad_error, "partial": gr.partial}
    _write_report(out, payload)
    print(f"resolvent value {r.value:.6g} +- {r.stderr:.2g} "
          f"(quad {r.quad_error:.2g}, tail {r.tail_bound:.2g})"
          + (" [partial]" if r.partial else ""))
    return 0


def cmd_evolution(cfg: ExperimentConfig, out: Path) -> int:
    spec, reaction, est = _common(cfg)
    camp = cfg.campaign()
    f = fn.from_config(spec, camp["initial"]) if camp.get("initial") else None
    g = fn.from_config(spec, camp.get("source", {"kind": "rough"}))
    x0 = _field_from(spec, camp.get("x0"))
    t = float(camp.get("t", 1.0))
    budget = _budget(est, cfg.threads)
    q = sg.evolution_samples(f, g, t, x0[None], budget, spec=spec,
                             reaction=reaction, seed=cfg.seed)
    value = float(q.path_values[0].mean())
    stderr = float(q.mc_stderr()[0])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "nodes.csv", ["t", "weight", "estimate", "stderr", "n"],
              [(float(tt), float(w), float(e), float(s), q.n_samples)
               for tt, w, e, s in zip(q.nodes, q.weights, q.node_means[:, 0],
                                      q.node_stderrs[:, 0])])
    payload = _meta(cfg, "evolution")
    payload.update({"t": t, "value": value, "stderr": stderr,
                    "quad_error": q.quad_error, "source": g.label,
                    "initial": None if f is None else f.label})
    _write_report(out, payload)
    print(f"v({t:g}, x) = {value:.6g} +- {stderr:.2g}")
    return 0


def cmd_regularity(cfg: ExperimentConfig, out: Path) -> int:
    spec, reaction, est = _common(cfg)
    camp = cfg.campaign()
    alpha = camp.get("alpha")
    alpha = None if alpha in (None, "none") else float(alpha)
    budget = _budget(est, cfg.threads)
    bundle = rg.verify_schauder(
        spec.gamma, alpha, reaction, budget, spec=spec, lam=float(est["lambda"]),
        seed=cfg.seed, statistic=camp.get("statistic", "max"),
        include_evolution=bool(camp.get("include_evolution", False)),
        evolution_t=float(camp.get("evolution_t", 1.0)),
    )
    out.mkdir(parents=True, exist_ok=True)
    payload = _meta(cfg, "regularity")
    payload["bundle"] = json.loads(rg.bundle_to_json(bundle))
    _write_report(out, payload)
    rep = bundle["report"]
    write_csv(out / "scales.csv", ["scale", "statistic", "stderr", "masked_in"],
              [(float(s), float(v), float(e), bool(m))
               for s, v, e, m in zip(rep.scales, rep.stats, rep.stderrs, rep.mask)])
    print(f"{rep.target}: exponent {rep.exponent:.3f} "
          f"(predicted {rep.predicted}, R2 {rep.r2:.3f}) -> {rep.verdict}")
    if "evolution_report" in bundle:
        er = bundle["evolution_report"]
        print(f"{er.target}: exponent {er.exponent:.3f} "
              f"(predicted {er.predicted}, R2 {er.r2:.3f}) -> {er.verdict}")
    return 0 if rep.verdict in ("pass", "measured") else 1


def cmd_report(art_dirs, out: Path) -> int:
    """Summarize regularity artifacts: predicted vs measured exponents."""
    rows = []
    for d in art_dirs:
        p = Path(d) / "report.json"
        if not p.exists():
            continue
        with open(p) as fh:
            payload = json.load(fh)
        if payload.get("command") != "regularity":
            continue
        b = payload["bundle"]
        for key in ("report", "evolution_report"):
            if key in b:
                r = b[key]
                rows.append((Path(d).name, r["target"], r["mode"],
                             r["predicted"], r["exponent"],
                             f"[{r['ci95'][0]:.3f}, {r['ci95'][1]:.3f}]",
                             f"{r['r2']:.3f}", r["verdict"]))
    lines = ["# Regularity campaign summary", "",
             "| campaign | target | mode | predicted | measured | 95% CI | R2 | verdict |",
             "|---|---|---|---|---|---|---|---|"]
    for row in rows:
        pred = "-" if row[3] is None else f"{row[3]:.3f}"
        meas = "-" if row[4] is None else f"{row[4]:.3f}"
        lines.append(f"| {row[0]} | {row[1]} | {row[2]} | {pred} | {meas} "
                     f"| {row[5]} | {row[6]} | {row[7]} |")
    out.mkdir(parents=True, exist_ok=True)
    text = "\n".join(lines) + "\n"
    (out / "summary.md").write_text(text)
    print(text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spdelab",
        description="Reaction-diffusion SPDE laboratory: simulation, semigroup "
                    "estimation, probabilistic gradients, resolvents and "
                    "regularity measurement.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_cmds = {
        "validate": cmd_validate, "simulate": cmd_simulate,
        "semigroup": cmd_semigroup, "gradient": cmd_gradient,
        "resolvent": cmd_resolvent, "evolution": cmd_evolution,
        "regularity": cmd_regularity,
    }
    for name in run_cmds:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default="artifacts")
        p.add_argument("--threads", type=int, default=None)
    p = sub.add_parser("report")
    p.add_argument("artifact_dirs", nargs="+")
    p.add_argument("--out-dir", default="artifacts")
    args = parser.parse_args(argv)

    if args.command == "report":
        return cmd_report(args.artifact_dirs, Path(args.out_dir))
    cfg = ExperimentConfig.from_yaml(args.config).override(seed=args.seed,
                                                           threads=args.threads)
    try:
        return run_cmds[args.command](cfg, Path(args.out_dir))
    except (dom.DomainError, sv.SolverError, sg.EstimatorError, ValueError) as e:
        diag = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(diag), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
