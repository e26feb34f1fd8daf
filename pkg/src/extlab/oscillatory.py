"""Extension transforms, the sphere's closed-form Fourier transform, and a
mollified two-sided identity linking frequency and physical pair geometry.

Conventions: Fourier transform with kernel exp(-2 pi i x.xi); the unit
sphere's unnormalized surface measure (mass 4 pi) transforms to
2 sin(2 pi |xi|)/|xi|, its probability version to sin(2 pi r)/(2 pi r).
The 1/|xi| envelope of the former is the stationary-phase decay rate that
the decay checks pin down with an explicit constant of 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annulus import AnnulusQuery, CellIndex, annulus_measure
from .geometry import RngState, Rotation
from .measures import DiscreteMeasure

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class ExtensionSample:
    """One evaluation of the extension transform at (x, theta)."""

    x: np.ndarray
    theta: Rotation
    value: complex


@dataclass(frozen=True)
class MollifierSpec:
    """Gaussian mollifier width and frequency-integration parameters.

    The cutoff must satisfy freq_cutoff >= 5/delta so the damped integrand
    tail beyond the cutoff is below ~1e-6 of the total.
    """

    delta: float
    freq_cutoff: float
    mc_samples: int = 200_000

    def __post_init__(self) -> None:
        if not (self.delta > 0.0):
            raise ValueError("mollifier width must be positive")
        if self.freq_cutoff < 5.0 / self.delta:
            raise ValueError("freq_cutoff must be at least 5/delta")
        if self.mc_samples < 1_000:
            raise ValueError("need at least 1e3 MC samples")


@dataclass(frozen=True)
class MollifiedIdentityResult:
    physical: float
    frequency: float
    freq_stderr: float
    conclusive: bool

    def as_dict(self) -> dict:
        return {
            "physical": self.physical,
            "frequency": self.frequency,
            "freq_stderr": self.freq_stderr,
            "conclusive": self.conclusive,
        }


def _require_density(m: DiscreteMeasure) -> np.ndarray:
    if m.density is None:
        raise ValueError("measure has no attached density; use density_apply")
    return m.density


def extension_transform(m: DiscreteMeasure, theta: Rotation, x: np.ndarray) -> complex:
    """sum_j f(p_j) w_j exp(-2 pi i x.(theta p_j)).

    The direct, auditable form; batch evaluators restructure the same sum
    but are always cross-checked against this one.
    """
    f = _require_density(m)
    x = np.asarray(x, dtype=np.float64)
    rotated = m.points @ theta.matrix().T
    phase = -2.0 * np.pi * (rotated @ x)
    return complex(np.sum(f * m.weights * np.exp(1j * phase)))


def sample_extension(m: DiscreteMeasure, theta: Rotation, x: np.ndarray) -> ExtensionSample:
    return ExtensionSample(np.asarray(x, dtype=np.float64), theta,
                           extension_transform(m, theta, x))


def sphere_surface_ft_radial(r: np.ndarray) -> np.ndarray:
    """Closed form 2 sin(2 pi r)/r for the mass-4pi sphere measure, as a
    function of |xi|; continuous value 4 pi at r = 0."""
    return FOUR_PI * np.sinc(2.0 * np.asarray(r, dtype=np.float64))


def sphere_surface_ft(xi: np.ndarray) -> float:
    """Fourier transform of the unnormalized unit-sphere surface measure."""
    xi = np.asarray(xi, dtype=np.float64).reshape(3)
    r = np.sqrt(xi @ xi)
    return float(sphere_surface_ft_radial(r))


def measure_ft(m: DiscreteMeasure, xi: np.ndarray) -> np.ndarray:
    """mu-hat at a batch of frequencies (k, 3); weights only, no density."""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    out = np.empty(xi.shape[0], dtype=np.complex128)
    chunk = max(1, 20_000_000 // max(len(m), 1))
    for lo in range(0, xi.shape[0], chunk):
        phase = -2.0 * np.pi * (xi[lo : lo + chunk] @ m.points.T)
        out[lo : lo + chunk] = np.exp(1j * phase) @ m.weights
    return out


def smoothed_shell_kernel(r: np.ndarray, t: float, delta: float) -> np.ndarray:
    """Radial convolution of the normalized radius-t sphere shell with the
    self-dual Gaussian of width delta.

    Closed form [exp(-pi (r-t)^2/d^2) - exp(-pi (r+t)^2/d^2)] / (4 pi r t d),
    evaluated stably via expm1 with the exact limit delta^-3 exp(-pi t^2/d^2)
    at r = 0.
    """
    r = np.asarray(r, dtype=np.float64)
    d2 = delta * delta
    small = r < 1e-300
    rs = np.where(small, 1.0, r)
    main = np.exp(-np.pi * (rs - t) ** 2 / d2)
    ratio = -np.expm1(-4.0 * np.pi * rs * t / d2)
    out = main * ratio / (FOUR_PI * rs * t * delta)
    limit = np.exp(-np.pi * t * t / d2) / delta**3
    return np.where(small, limit, out)


def _pairwise_kernel_sum(m: DiscreteMeasure, t: float, delta: float) -> float:
    """sum_{i,j} w_i w_j K(|p_i - p_j|), diagonal included."""
    pts, w = m.points, m.weights
    n = len(m)
    chunk = max(1, 4_000_000 // n)
    total = 0.0
    for lo in range(0, n, chunk):
        d = pts[lo : lo + chunk, None, :] - pts[None, :, :]
        dist = np.sqrt((d * d).sum(axis=2))
        k = smoothed_shell_kernel(dist, t, delta)
        total += float((w[lo : lo + chunk, None] * w[None, :] * k).sum())
    return total


def mollified_identity_check(
    m: DiscreteMeasure, t: float, spec: MollifierSpec, rng: RngState
) -> MollifiedIdentityResult:
    """Compare physical and frequency sides of the smoothed shell pairing.

    Physical side: the pairwise kernel sum above, exact up to float error;
    this is the ground truth.  Frequency side: importance-sampled Monte
    Carlo integral of sinc-shell * |mu-hat|^2 under the Gaussian damping.
    The proposal is a three-component Gaussian mixture: a core component
    covering the low-frequency region where |mu-hat|^2 = O(1) (sampling by
    the damping alone leaves that region to rare huge-weight draws and the
    variance explodes), a geometric bridge, and a component at the damping
    width itself.  Plancherel makes the two sides equal up to MC error and
    the cutoff tail.  If the MC standard error exceeds half the physical
    value the comparison is flagged inconclusive rather than failed.
    """
    if not (0.5 <= t <= 2.0):
        raise ValueError("shell radius t must lie in [0.5, 2]")
    physical = _pairwise_kernel_sum(m, t, spec.delta)

    sigma_damp = 1.0 / (np.sqrt(2.0 * np.pi) * spec.delta)
    sigmas = np.array([0.6, min(2.5, sigma_damp), sigma_damp])
    alphas = np.array([0.45, 0.25, 0.30])
    mc = spec.mc_samples
    comp = np.searchsorted(np.cumsum(alphas), rng.uniform(mc), side="right")
    comp = np.minimum(comp, len(sigmas) - 1)
    xi = rng.gaussian(3 * mc).reshape(mc, 3) * sigmas[comp][:, None]
    rsq = (xi * xi).sum(axis=1)
    r = np.sqrt(rsq)
    # mixture density at each sample
    dens = np.zeros(mc, dtype=np.float64)
    for a, s in zip(alphas, sigmas):
        dens += a * (2.0 * np.pi * s * s) ** -1.5 * np.exp(-rsq / (2.0 * s * s))
    vals = np.zeros(mc, dtype=np.float64)
    keep = r <= spec.freq_cutoff
    mu_sq = np.abs(measure_ft(m, xi[keep])) ** 2
    integrand = (
        np.sinc(2.0 * t * r[keep]) * mu_sq
        * np.exp(-np.pi * spec.delta**2 * rsq[keep])
    )
    vals[keep] = integrand / dens[keep]
    frequency = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(mc))
    conclusive = stderr <= 0.5 * abs(physical)
    return MollifiedIdentityResult(physical, frequency, stderr, conclusive)


def averaged_convolution_value(
    m: DiscreteMeasure, t: float, eps: float, idx: CellIndex | None = None
) -> float:
    """A(t, eps)/eps: finite-eps surrogate for the rotation-averaged
    self-convolution at shell radius t.

    Stabilizes as eps shrinks exactly when the annulus condition holds;
    grows like 1/eps for atomic measures.
    """
    return annulus_measure(m, AnnulusQuery(t, eps), idx) / eps
