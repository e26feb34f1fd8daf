"""Weighted point-cloud measures: graph surfaces, lattice-neighborhood
fractals, the unit sphere, and atomic counterexamples.

Every builder returns a :class:`DiscreteMeasure` normalized to unit mass
(weights sum to 1), the standing convention for all downstream statistics;
they are all scale-covariant, so nothing depends on the normalization
beyond bookkeeping.  Measures are immutable once built and serialize to a
CSV of (x, y, z, w) rows at 17 significant digits plus a JSON sidecar with
provenance, round-tripping bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MASS_TOL = 1e-12


class BuildError(ValueError):
    """A builder could not produce a valid measure."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud approximating a measure on R^3.

    points : (n, 3) float64, weights : (n,) nonnegative float64 summing to
    ``mass`` (1e-12 tolerance), meta : provenance (builder name, parameters,
    resolution).  ``density`` optionally carries pointwise values of a
    density f, attached by :func:`density_apply`; the weights themselves are
    never rescaled by f so signed/complex densities stay exact.
    """

    points: np.ndarray
    weights: np.ndarray
    mass: float = 1.0
    meta: dict = field(default_factory=dict)
    density: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise BuildError("points must have shape (n, 3)")
        if w.shape != (pts.shape[0],):
            raise BuildError("weights must match points")
        if pts.shape[0] < 1:
            raise BuildError("measure needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise BuildError("non-finite point coordinates")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise BuildError("weights must be finite and nonnegative")
        if abs(float(w.sum()) - self.mass) > MASS_TOL:
            raise BuildError(
                f"weights sum to {w.sum()!r}, expected mass {self.mass!r}"
            )
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        return self.weights @ self.points / self.mass

    def circumradius(self) -> float:
        d = self.points - self.centroid()
        return float(np.sqrt((d * d).sum(axis=1).max()))

    def rotated(self, matrix: np.ndarray) -> "DiscreteMeasure":
        return replace(self, points=self.points @ np.asarray(matrix).T)


@dataclass(frozen=True)
class SurfaceProfile:
    """Graphing function G over a disk, with pointwise gradient access.

    ``singular`` lists base-plane points where the gradient is undefined;
    grid builders keep nodes off those points (half-cell offset, plus a
    quarter-cell nudge for odd resolutions).
    """

    name: str
    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    domain_radius: float = 1.0
    singular: tuple[tuple[float, float], ...] = ()


def _r(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    return np.sqrt(y1 * y1 + y2 * y2)


def _flat_eval(y1, y2):
    return np.zeros_like(y1)


def _flat_grad(y1, y2):
    z = np.zeros_like(y1)
    return z, z.copy()


def _paraboloid_eval(y1, y2):
    return y1 * y1 + y2 * y2


def _paraboloid_grad(y1, y2):
    return 2.0 * y1, 2.0 * y2


def _cone_eval(y1, y2):
    return _r(y1, y2)


def _cone_grad(y1, y2):
    r = _r(y1, y2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return y1 / r, y2 / r


def _sqrt_eval(y1, y2):
    return np.sqrt(_r(y1, y2))


def _sqrt_grad(y1, y2):
    # |grad G| = r^{-1/2} / 2: integrable over the disk but unbounded at 0,
    # the model case of a W^1_1 graph that is not Lipschitz.
    r = _r(y1, y2)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = 0.5 / np.sqrt(r) ** 3
        return y1 * f, y2 * f


def _flat_bump_eval(y1, y2):
    r2 = y1 * y1 + y2 * y2
    out = np.zeros_like(r2)
    nz = r2 > 0
    with np.errstate(divide="ignore"):
        out[nz] = np.exp(-1.0 / r2[nz])
    return out


def _flat_bump_grad(y1, y2):
    # Vanishes to infinite order at the origin; extend the gradient by 0
    # there so exp underflow never produces 0 * inf.
    r2 = y1 * y1 + y2 * y2
    g1 = np.zeros_like(r2)
    g2 = np.zeros_like(r2)
    nz = r2 > 1e-8
    with np.errstate(divide="ignore"):
        f = 2.0 * np.exp(-1.0 / r2[nz]) / (r2[nz] * r2[nz])
    g1[nz] = y1[nz] * f
    g2[nz] = y2[nz] * f
    return g1, g2


def _sphere_cap_eval(y1, y2):
    return np.sqrt(1.0 - (y1 * y1 + y2 * y2))


def _sphere_cap_grad(y1, y2):
    z = _sphere_cap_eval(y1, y2)
    return -y1 / z, -y2 / z


PROFILES: dict[str, SurfaceProfile] = {
    "flat": SurfaceProfile("flat", _flat_eval, _flat_grad),
    "paraboloid": SurfaceProfile("paraboloid", _paraboloid_eval, _paraboloid_grad),
    "cone": SurfaceProfile("cone", _cone_eval, _cone_grad, singular=((0.0, 0.0),)),
    "sqrt": SurfaceProfile("sqrt", _sqrt_eval, _sqrt_grad, singular=((0.0, 0.0),)),
    "flat-bump": SurfaceProfile("flat-bump", _flat_bump_eval, _flat_bump_grad),
    "sphere-cap": SurfaceProfile(
        "sphere-cap", _sphere_cap_eval, _sphere_cap_grad, domain_radius=0.8
    ),
}

PROFILE_NAMES = tuple(PROFILES)


def get_profile(name: str) -> SurfaceProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise BuildError(f"unknown profile {name!r}; known: {sorted(PROFILES)}") from None


def _disk_grid(profile: SurfaceProfile, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Cell centers of the n x n grid over the profile's disk.

    Centers sit half a cell off the boundary; any center that lands on a
    declared singular point (only possible for odd n with a centered
    singularity) is nudged by a quarter cell, which perturbs the midpoint
    rule on a single cell by O(h) and nothing else.
    """
    R = profile.domain_radius
    h = 2.0 * R / n
    axis = -R + (np.arange(n) + 0.5) * h
    y1, y2 = np.meshgrid(axis, axis, indexing="ij")
    y1 = y1.ravel()
    y2 = y2.ravel()
    inside = y1 * y1 + y2 * y2 <= R * R
    y1, y2 = y1[inside], y2[inside]
    for sx, sy in profile.singular:
        hit = (np.abs(y1 - sx) < 1e-12) & (np.abs(y2 - sy) < 1e-12)
        y1 = np.where(hit, y1 + 0.25 * h, y1)
        y2 = np.where(hit, y2 + 0.25 * h, y2)
    return y1, y2, h


def build_graph_measure(profile: SurfaceProfile, n: int) -> DiscreteMeasure:
    """Unit-mass measure on the graph z = G(y) over the profile's disk.

    Points are (y1, y2, G(y1, y2)) at the cell centers of an n x n grid;
    weights are uniform (equal base-plane cell areas), i.e. the pushforward
    of normalized planar Lebesgue measure under y -> (y, G(y)).  Weighting
    by base area rather than surface area keeps the builder total for
    profiles whose gradient is unbounded.
    """
    if n < 8:
        raise BuildError("grid resolution must be at least 8")
    y1, y2, _ = _disk_grid(profile, n)
    z = profile.evaluate(y1, y2)
    bad = ~np.isfinite(z)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise BuildError(
            f"profile {profile.name!r} non-finite at node ({y1[i]!r}, {y2[i]!r})"
        )
    pts = np.column_stack([y1, y2, z])
    k = pts.shape[0]
    w = np.full(k, 1.0 / k)
    w[-1] = 1.0 - w[:-1].sum()  # exact unit mass
    return DiscreteMeasure(
        pts, w, meta={"builder": "graph", "profile": profile.name, "n": n}
    )


def w11_norm_estimate(profile: SurfaceProfile, n: int) -> float:
    """Midpoint-rule estimate of the gradient integral over the disk.

    Finiteness of this integral is exactly membership of G in the class of
    integrable-gradient graphs; declared singular points are avoided by the
    half-cell grid offset.
    """
    if n < 32:
        raise BuildError("gradient integration needs n >= 32")
    y1, y2, h = _disk_grid(profile, n)
    g1, g2 = profile.gradient(y1, y2)
    mag = np.sqrt(g1 * g1 + g2 * g2)
    bad = ~np.isfinite(mag)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise BuildError(
            f"profile {profile.name!r} gradient non-finite at offset node "
            f"({y1[i]!r}, {y2[i]!r})"
        )
    return float(mag.sum() * h * h)


@dataclass(frozen=True)
class FractalSpec:
    """Parameters of the lattice-neighborhood fractal at finite stage.

    The stage-i set is the q_i^{-d/s} Euclidean neighborhood of the scaled
    integer lattice q_i^{-1}(Z^d intersect [0, q_i]^d); the construction
    intersects stages 1..stage.  The admissible q-sequence starts at 2 and
    grows super-geometrically (q_{i+1} > q_i^i); the canonical minimal one
    is (2, 3, 10, ...).
    """

    s: float
    q_sequence: tuple[int, ...] = (2, 3, 10)
    stage: int = 1
    d: int = 3

    def __post_init__(self) -> None:
        if self.d != 3:
            raise BuildError("only ambient dimension 3 is supported")
        if not (0.0 < self.s < self.d):
            raise BuildError("dimension target s must lie in (0, d)")
        if self.stage < 1 or self.stage > 3:
            raise BuildError("stage must be in 1..3 (cell counts explode beyond)")
        q = self.q_sequence
        if len(q) < self.stage:
            raise BuildError("q_sequence shorter than requested stage")
        if q[0] != 2:
            raise BuildError("q_sequence must start at 2")
        for i in range(len(q) - 1):
            if q[i + 1] <= q[i] ** (i + 1):
                raise BuildError(
                    f"q_sequence violates q_{i + 2} > q_{i + 1}^{i + 1}"
                )

    def radius(self, i: int) -> float:
        """Neighborhood radius at stage i (1-based)."""
        return float(self.q_sequence[i - 1]) ** (-self.d / self.s)


def canonical_q_sequence(stage: int) -> tuple[int, ...]:
    q = [2]
    while len(q) < stage:
        q.append(q[-1] ** len(q) + 1)
    return tuple(q)


def _lattice_axis(q: int) -> np.ndarray:
    return np.arange(q + 1, dtype=np.float64) / q


def _lattice_points(q: int) -> np.ndarray:
    ax = _lattice_axis(q)
    g = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.column_stack([a.ravel() for a in g])


def _dist_to_lattice(pts: np.ndarray, q: int) -> np.ndarray:
    """Distance from each point in [0,1]^3 to the nearest q-lattice point.

    The lattice is a product set, so the nearest point is found per
    coordinate by rounding (clipped to [0, q]).
    """
    k = np.clip(np.round(pts * q), 0, q)
    d = pts - k / q
    return np.sqrt((d * d).sum(axis=1))


def build_fractal_measure(spec: FractalSpec) -> DiscreteMeasure:
    """Uniform atoms on finest-stage lattice points surviving every stage.

    A candidate (a point of the stage-`stage` lattice) survives when it lies
    within radius q_i^{-d/s} of the stage-i lattice for every i <= stage.
    """
    q_fine = spec.q_sequence[spec.stage - 1]
    pts = _lattice_points(q_fine)
    alive = np.ones(len(pts), dtype=bool)
    for i in range(1, spec.stage + 1):
        alive &= _dist_to_lattice(pts, spec.q_sequence[i - 1]) <= spec.radius(i)
        if not np.any(alive):
            raise BuildError(f"fractal intersection emptied at stage {i}")
    pts = pts[alive]
    k = len(pts)
    w = np.full(k, 1.0 / k)
    w[-1] = 1.0 - w[:-1].sum()
    return DiscreteMeasure(
        pts,
        w,
        meta={
            "builder": "fractal",
            "s": spec.s,
            "q_sequence": list(spec.q_sequence[: spec.stage]),
            "stage": spec.stage,
            "neighborhood": "euclidean-ball",
        },
    )


def build_sphere_measure(n: int) -> DiscreteMeasure:
    """n near-equal-area points on the unit sphere (Fibonacci lattice)."""
    if n < 12:
        raise BuildError("sphere measure needs at least 12 points")
    i = np.arange(n, dtype=np.float64) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    theta = 2.0 * np.pi * i / golden
    pts = np.column_stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]
    )
    w = np.full(n, 1.0 / n)
    w[-1] = 1.0 - w[:-1].sum()
    return DiscreteMeasure(pts, w, meta={"builder": "sphere", "n": n})


def build_atomic_measure(
    atoms: Sequence[tuple[Sequence[float], float]]
) -> DiscreteMeasure:
    """Measure with exactly the given (point, weight) atoms, mass-normalized."""
    if not atoms:
        raise BuildError("need at least one atom")
    pts = np.array([a[0] for a in atoms], dtype=np.float64)
    w = np.array([a[1] for a in atoms], dtype=np.float64)
    if np.any(w < 0):
        raise BuildError("atom weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise BuildError("atom weights sum to zero")
    return DiscreteMeasure(pts, w / total, meta={"builder": "atoms", "n": len(atoms)})


def two_atom_measure(distance: float = 1.0) -> DiscreteMeasure:
    return build_atomic_measure(
        [((0.0, 0.0, 0.0), 1.0), ((distance, 0.0, 0.0), 1.0)]
    )


def density_apply(m: DiscreteMeasure, f: Callable[[np.ndarray], np.ndarray],
                  name: str = "custom") -> DiscreteMeasure:
    """Attach pointwise density values f(p_j) to a measure.

    The weights are untouched; downstream evaluators combine w_j with the
    stored (possibly signed or complex) values, so f dmu is represented
    exactly rather than through |f|-rescaled weights.
    """
    vals = np.asarray(f(m.points))
    if vals.shape != (len(m),):
        raise BuildError("density must return one value per point")
    if not np.all(np.isfinite(vals)):
        i = int(np.argmax(~np.isfinite(vals)))
        raise BuildError(f"density non-finite at point index {i}")
    meta = dict(m.meta)
    meta["density"] = name
    return replace(m, meta=meta, density=vals)


def pairwise_distance_sample(
    m: DiscreteMeasure, max_pairs: int = 2_000_000, seed: int = 0
) -> np.ndarray:
    """Distances of (up to) max_pairs distinct index pairs, seeded subsample."""
    n = len(m)
    total = n * (n - 1) // 2
    rng = np.random.Generator(np.random.PCG64(seed))
    if total <= max_pairs:
        iu = np.triu_indices(n, k=1)
        d = m.points[iu[0]] - m.points[iu[1]]
    else:
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n, size=max_pairs)
        keep = i != j
        d = m.points[i[keep]] - m.points[j[keep]]
    return np.sqrt((d * d).sum(axis=1))


# -- serialization -----------------------------------------------------------

_FMT = "%.17g"  # 17 significant digits: lossless float64 round-trip


def save_measure_csv(m: DiscreteMeasure, path: str | Path) -> tuple[Path, Path]:
    """Write points/weights CSV and a JSON sidecar with meta.

    Returns (csv_path, sidecar_path); the sidecar is `<path>.meta.json`.
    """
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("x,y,z,w\n")
        for (x, y, z), w in zip(m.points, m.weights):
            fh.write(
                f"{_FMT % x},{_FMT % y},{_FMT % z},{_FMT % w}\n"
            )
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    with open(sidecar, "w") as fh:
        json.dump({"mass": m.mass, "meta": m.meta}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path, sidecar


def load_measure_csv(path: str | Path) -> DiscreteMeasure:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    mass, meta = 1.0, {}
    if sidecar.exists():
        with open(sidecar) as fh:
            side = json.load(fh)
        mass, meta = side.get("mass", 1.0), side.get("meta", {})
    return DiscreteMeasure(data[:, :3], data[:, 3], mass=mass, meta=meta)
