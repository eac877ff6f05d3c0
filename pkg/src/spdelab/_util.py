"""Small shared helpers: seed derivation, fingerprints, deterministic output."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def derive_seed(master: int, *tags) -> int:
    """Deterministic child seed from a master seed and string/int tags.

    Stable across processes and platforms (no salted hashing).
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for t in tags:
        h.update(b"|")
        h.update(str(t).encode())
    return int.from_bytes(h.digest()[:8], "little")


def fingerprint(payload: dict) -> str:
    """Short stable hash tying artifacts to their configuration."""
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_csv(path, header: list[str], rows):
    """Deterministic CSV writer (repr-based float formatting, LF endings)."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def ols_loglog(x, y):
    """OLS fit of log2 y against log2 x.

    Returns (slope, intercept, r2, slope_stderr); stderr uses the n-2 dof
    residual variance (zero when n == 2).
    """
    lx = np.log2(np.asarray(x, dtype=float))
    ly = np.log2(np.asarray(y, dtype=float))
    n = lx.size
    if n < 2:
        raise ValueError("need at least two points to fit")
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = ly - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    if n > 2:
        sxx = float(((lx - lx.mean()) ** 2).sum())
        stderr = np.sqrt(ss_res / (n - 2) / sxx) if sxx > 0 else np.inf
    else:
        stderr = 0.0
    return slope, intercept, r2, float(stderr)
