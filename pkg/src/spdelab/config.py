"""Experiment configuration: one structured YAML file, validated as a whole.

Flags may override only the scalar fields seed, out_dir and threads; the
campaign itself is an archival object.  validate() runs every hypothesis
validator (admissibility of the color per the cube thresholds, reaction
growth/dissipativity, solver step cap) and reports all violated clauses.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import domain as dom
from . import reaction as rx
from . import solver as sv
from ._util import fingerprint

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "domain": {"dimension": 1, "boundary": "dirichlet", "gamma": 0.0,
               "modes": 32, "grid": None},
    "reaction": {"m": 1, "terms": [{"power": 1, "coefficient": 1.0},
                                   {"power": 3, "coefficient": -1.0}],
                 "certificate": None},
    "solver": {"dt": 1e-3, "horizon": 1.0},
    "estimator": {"samples": 4096, "batch_size": 4096, "lambda": 1.0,
                  "tolerance": 1e-2, "nodes_per_decade": 10, "t_min": 1e-4,
                  "t_max": None},
    "campaign": {"kind": "simulate"},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(raw=_merge(DEFAULTS, d or {}))

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def override(self, seed=None, threads=None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if threads is not None:
            raw["threads"] = int(threads)
        return ExperimentConfig(raw=raw)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def threads(self) -> int:
        return int(self.raw["threads"])

    def fingerprint(self) -> str:
        return fingerprint(self.raw)

    def domain_spec(self) -> dom.DomainSpec:
        d = self.raw["domain"]
        grid = d.get("grid") or 4 * int(d["modes"]) + 1
        return dom.DomainSpec(int(d["dimension"]), str(d["boundary"]).lower(),
                              float(d["gamma"]), int(d["modes"]), int(grid))

    def reaction_spec(self) -> rx.ReactionSpec | None:
        r = self.raw["reaction"]
        terms = r.get("terms") or []
        if not terms:
            return None
        coeffs = {}
        for t in terms:
            cos = tuple((tuple(int(f) for f in np.atleast_1d(term["freq"])), float(term["amp"]))
                        for term in t.get("cosine", []))
            coeffs[int(t["power"])] = rx.CoefficientFn(float(t.get("coefficient", 0.0)), cos)
        cert = r.get("certificate")
        if cert:
            cert = rx.DissipativityCertificate(float(cert["a"]), float(cert["c"]),
                                               float(cert["theta"]))
        return rx.ReactionSpec.from_powers(int(r["m"]), coeffs, cert)

    def solver_config(self) -> sv.SolverConfig:
        s = self.raw["solver"]
        return sv.SolverConfig(dt=float(s["dt"]), horizon=float(s["horizon"]))

    def estimator(self) -> dict:
        return self.raw["estimator"]

    def campaign(self) -> dict:
        return self.raw["campaign"]


@dataclass
class ValidationReport:
    ok: bool
    errors: list
    notes: list

    def message(self) -> str:
        if self.ok:
            return "config accepted: " + "; ".join(self.notes)
        return "config rejected:\n" + "\n".join(f"- {e}" for e in self.errors)


def validate(cfg: ExperimentConfig) -> ValidationReport:
    """Run every hypothesis validator; list all violated clauses."""
    errors, notes = [], []
    spec = None
    try:
        spec = cfg.domain_spec()
        notes.append(
            f"domain: d={spec.dimension} {spec.boundary} gamma={spec.gamma:g} "
            f"K={spec.modes} M={spec.grid}"
        )
    except dom.DomainError as e:
        errors.append(f"domain: {e}")
    reaction = None
    try:
        reaction = cfg.reaction_spec()
        if reaction is None:
            notes.append("reaction: absent (F = 0)")
        else:
            rep = rx.validate_dissipativity(reaction)
            if not rep.accepted:
                errors.append(f"reaction dissipativity: {rep.reason} at (z,h)={rep.violation}")
            else:
                cert = rep.certificate
                notes.append(
                    "reaction: m=%d accepted%s" % (
                        reaction.m,
                        "" if cert is None else
                        f" with certificate (a={cert.a:g}, c={cert.c:g}, theta={cert.theta:g})",
                    )
                )
    except rx.ReactionError as e:
        errors.append(f"reaction: {e}")
    if spec is not None:
        try:
            cfg.solver_config().validate(spec)
            notes.append(f"solver: dt={cfg.solver_config().dt:g}")
        except sv.SolverError as e:
            errors.append(f"solver: {e}")
    est = cfg.estimator()
    if int(est["samples"]) < 1:
        errors.append("estimator: samples must be >= 1")
    if float(est["lambda"]) <= 0:
        errors.append("estimator: lambda must be > 0")
    return ValidationReport(ok=not errors, errors=errors, notes=notes)
