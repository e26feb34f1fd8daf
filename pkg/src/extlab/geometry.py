"""3D vectors, unit-quaternion rotations, and Haar-uniform rotation sampling.

Reproducibility contract
------------------------
All randomness flows through :class:`RngState`, which wraps NumPy's PCG64
bit generator (O'Neill's permuted congruential generator, 128-bit state,
64-bit output).  Gaussian deviates are produced by an explicit Box-Muller
transform on 53-bit uniform doubles drawn from that generator, so the
sample stream is fully pinned down by (algorithm, seed, draw order) and
reproduces bit-for-bit across platforms and runs.  Substreams for parallel
or per-task use are obtained by PCG64's jump-ahead, never by reseeding.

Vectors are plain float64 ndarrays of shape (3,) (or (n, 3) for batches).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Vec3 = np.ndarray  # shape (3,), float64

_UNIT_TOL = 1e-9
_TWO_PI = 2.0 * np.pi


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def norm(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))


@dataclass
class RngState:
    """Seeded PCG64 stream with jump-ahead substreams.

    ``substream(k)`` returns an independent stream k jumps ahead; the root
    stream (k = 0) is never shared with substreams, so draws interleave
    deterministically no matter how workers are scheduled.
    """

    seed: int
    jumps: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        bitgen = np.random.PCG64(self.seed)
        if self.jumps:
            bitgen = bitgen.jumped(self.jumps)
        self._gen = np.random.Generator(bitgen)

    def substream(self, k: int) -> "RngState":
        if k <= 0:
            raise ValueError("substream index must be positive")
        return RngState(self.seed, jumps=self.jumps + k)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1), one 64-bit draw each."""
        return self._gen.random(n)

    def gaussian(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller on uniform pairs.

        Consumes exactly 2*ceil(n/2) uniforms; u1 is reflected to (0, 1]
        so log(u1) is always finite.
        """
        m = (n + 1) // 2
        u1 = 1.0 - self._gen.random(m)
        u2 = self._gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m, dtype=np.float64)
        z[0::2] = r * np.cos(_TWO_PI * u2)
        z[1::2] = r * np.sin(_TWO_PI * u2)
        return z[:n]

    def integers(self, lo: int, hi: int, n: int) -> np.ndarray:
        return self._gen.integers(lo, hi, size=n)


@dataclass(frozen=True)
class Rotation:
    """Rotation of R^3 stored as a unit quaternion (w, x, y, z)."""

    q: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=np.float64)
        if q.shape != (4,):
            raise ValueError("quaternion must have shape (4,)")
        n = float(np.sqrt(np.dot(q, q)))
        if not np.isfinite(n) or n < 1e-12:
            raise ValueError("degenerate quaternion")
        object.__setattr__(self, "q", q / n)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def about_axis(axis: np.ndarray, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.sqrt(np.dot(axis, axis))
        half = 0.5 * angle
        return Rotation(np.concatenate(([np.cos(half)], np.sin(half) * axis)))

    def compose(self, other: "Rotation") -> "Rotation":
        """Hamilton product; self applied after other."""
        a, b = self.q, other.q
        w = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
        x = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
        y = a[0] * b[2] + a[2] * b[0] + a[3] * b[1] - a[1] * b[3]
        z = a[0] * b[3] + a[3] * b[0] + a[1] * b[2] - a[2] * b[1]
        return Rotation(np.array([w, x, y, z]))

    def __mul__(self, other: "Rotation") -> "Rotation":
        return self.compose(other)

    def matrix(self) -> np.ndarray:
        """Equivalent 3x3 orthogonal matrix with det +1."""
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation(np.array([w, -x, -y, -z]))


def sample_haar_rotation(rng: RngState) -> Rotation:
    """One rotation distributed per Haar (uniform) measure on SO(3).

    A 4-vector of independent standard Gaussians is isotropic in R^4, so
    its normalization is uniform on S^3, i.e. Haar-uniform as a unit
    quaternion.  A zero draw (probability zero, but cheap to guard) is
    resampled.
    """
    while True:
        g = rng.gaussian(4)
        n = float(np.sqrt(np.dot(g, g)))
        if n > 1e-12:
            return Rotation(g)


def sample_haar_quaternions(rng: RngState, m: int) -> np.ndarray:
    """(m, 4) array of Haar-uniform unit quaternions, vectorized."""
    g = rng.gaussian(4 * m).reshape(m, 4)
    n = np.sqrt(np.einsum("ij,ij->i", g, g))
    bad = n <= 1e-12
    while np.any(bad):  # pragma: no cover - probability zero
        k = int(bad.sum())
        g[bad] = rng.gaussian(4 * k).reshape(k, 4)
        n = np.sqrt(np.einsum("ij,ij->i", g, g))
        bad = n <= 1e-12
    return g / n[:, None]


def apply_rotation(r: Rotation, p: np.ndarray) -> np.ndarray:
    """Rotate a point (3,) or batch (n, 3); preserves norms to 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    return p @ r.matrix().T


def rotate_batch(quats: np.ndarray, v: Vec3) -> np.ndarray:
    """Apply m unit quaternions (m, 4) to one vector; returns (m, 3).

    Uses the sandwich identity v' = v + 2 q_v x (q_v x v + w v), which
    avoids building m rotation matrices.
    """
    w = quats[:, 0:1]
    qv = quats[:, 1:]
    t = 2.0 * np.cross(qv, np.broadcast_to(v, qv.shape))
    return v + w * t + np.cross(qv, t)


def ks_distance_to_uniform(z: np.ndarray, lo: float = -1.0, hi: float = 1.0) -> float:
    """Kolmogorov-Smirnov distance of a sample to Uniform[lo, hi]."""
    z = np.sort(np.asarray(z, dtype=np.float64))
    m = z.size
    cdf = np.clip((z - lo) / (hi - lo), 0.0, 1.0)
    upper = np.abs(np.arange(1, m + 1) / m - cdf)
    lower = np.abs(np.arange(0, m) / m - cdf)
    return float(np.maximum(upper, lower).max())


def pushforward_uniformity_stat(n_samples: int, v: Vec3, rng: RngState) -> float:
    """KS distance between the z-coordinate of Haar-rotated v and Uniform[-1, 1].

    For Haar-distributed rotations the image of any fixed unit vector is
    uniform on the sphere, so its z-coordinate is uniform on [-1, 1]; the
    statistic being small (and independent of v) certifies that numerically.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    v = np.asarray(v, dtype=np.float64)
    if abs(norm(v) - 1.0) > _UNIT_TOL:
        raise ValueError(f"direction must be a unit vector, got |v| = {norm(v)!r}")
    quats = sample_haar_quaternions(rng, n_samples)
    z = rotate_batch(quats, v)[:, 2]
    return ks_distance_to_uniform(z)
