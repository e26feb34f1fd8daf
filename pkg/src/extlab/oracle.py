"""Brute-force reference paths every fast kernel must match.

These are deliberately structure-free: a row-major double loop for pair
counting, a dense surface quadrature for the sphere transform, and a full
lattice scan for the fractal support.  They ship in the library (not just
the test tree) so the verify command can cross-check an installation in
the field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .annulus import AnnulusQuery
from .measures import (
    DiscreteMeasure,
    FractalSpec,
    _lattice_points,
    build_sphere_measure,
)


@dataclass(frozen=True)
class OracleReport:
    name: str
    fast_value: float
    oracle_value: float
    abs_diff: float
    rel_diff: float
    tolerance: float
    passed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def compare(name: str, fast: float, oracle: float, tol: float,
            relative: bool = False) -> OracleReport:
    abs_diff = abs(fast - oracle)
    denom = max(abs(oracle), 1e-300)
    rel_diff = abs_diff / denom
    passed = (rel_diff <= tol) if relative else (abs_diff <= tol)
    return OracleReport(name, float(fast), float(oracle), float(abs_diff),
                        float(rel_diff), float(tol), bool(passed))


def brute_force_annulus(m: DiscreteMeasure, q: AnnulusQuery) -> float:
    """Direct double loop over ordered pairs, row-major, compensated sum.

    Same squared-distance arithmetic and half-open band convention as the
    indexed path; the diagonal drops out automatically since t > 0.
    """
    if len(m) > 10_000:
        raise ValueError("oracle capped at 1e4 points")
    pts, w = m.points, m.weights
    px, py, pz = pts[:, 0], pts[:, 1], pts[:, 2]
    tsq = q.t * q.t
    hsq = (q.t * (1.0 + q.eps)) ** 2
    row_terms = []
    for i in range(len(m)):
        dx = px[i] - px
        dy = py[i] - py
        dz = pz[i] - pz
        dsq = dx * dx + dy * dy + dz * dz
        sel = (dsq >= tsq) & (dsq < hsq)
        if np.any(sel):
            row_terms.append(w[i] * math.fsum(w[sel]))
    return math.fsum(row_terms)


def quadrature_sphere_ft(xi: np.ndarray, n: int = 10_000) -> float:
    """Fourier transform of unnormalized sphere surface measure (mass 4*pi)
    by direct Fibonacci-lattice quadrature.

    Returns the real part; the imaginary part is pure discretization noise
    since the underlying measure is symmetric.
    """
    if n < 1_000:
        raise ValueError("quadrature needs at least 1e3 nodes")
    xi = np.asarray(xi, dtype=np.float64)
    sphere = build_sphere_measure(n)
    phase = -2.0 * np.pi * (sphere.points @ xi)
    return float(4.0 * np.pi * np.mean(np.cos(phase)))


def exhaustive_fractal_scan(spec: FractalSpec) -> np.ndarray:
    """Surviving finest-stage lattice points by full distance scans.

    Membership in every stage's neighborhood is tested against *all* points
    of that stage's lattice (no nearest-point shortcut), independent of the
    builder's rounding path.
    """
    if spec.stage > 2:
        raise ValueError("exhaustive scan capped at stage 2")
    cand = _lattice_points(spec.q_sequence[spec.stage - 1])
    alive = np.ones(len(cand), dtype=bool)
    for i in range(1, spec.stage + 1):
        lattice = _lattice_points(spec.q_sequence[i - 1])
        r = spec.radius(i)
        for k in range(len(cand)):
            if not alive[k]:
                continue
            d = lattice - cand[k]
            dmin = np.sqrt((d * d).sum(axis=1).min())
            alive[k] = dmin <= r
    return cand[alive]
