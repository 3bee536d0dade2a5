"""Geometry on the unit hypersphere S^{d-1}.

Points are plain numpy arrays: a single point has shape ``(d,)`` and a batch
has shape ``(n, d)``. :func:`unit_vector` and :func:`as_unit_rows` are the
only constructors that enforce the unit-norm invariant; everything else
assumes its inputs are already on the sphere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "unit_vector",
    "as_unit_rows",
    "geodesic_distance",
    "SphericalCap",
    "cap_contains",
    "a2_constant",
    "delta_bound",
    "covering_net",
    "covering_radius_bound",
    "random_rotation",
    "max_density_estimate",
]


def unit_vector(coords) -> np.ndarray:
    """Return ``coords`` rescaled to unit length as a float array of shape (d,)."""
    x = np.asarray(coords, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d coordinate vector, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("unit vectors need dimension d >= 2")
    norm = np.linalg.norm(x)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return x / norm


def as_unit_rows(points, renormalize: bool = True, atol: float = 1e-8) -> np.ndarray:
    """Coerce ``points`` to an ``(n, d)`` array of unit rows.

    With ``renormalize=False`` rows further than ``atol`` from unit norm raise
    ``ValueError`` naming the first offending row.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError(f"expected an (n, d) array with d >= 2, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
        bad = int(np.flatnonzero(~np.isfinite(norms) | (norms == 0.0))[0])
        raise ValueError(f"row {bad} is zero or non-finite")
    if not renormalize:
        off = np.abs(norms - 1.0) > atol
        if np.any(off):
            bad = int(np.flatnonzero(off)[0])
            raise ValueError(f"row {bad} has norm {norms[bad]!r}, not unit length")
    return x / norms[:, None]


def geodesic_distance(x, y) -> np.ndarray | float:
    """Great-circle angle ``arccos(x . y)`` between unit vectors, in ``[0, pi]``.

    Evaluated as ``2 atan2(|x - y|, |x + y|)``, which equals the arccos of the
    clamped inner product but stays accurate for nearly equal or nearly
    antipodal points. Broadcasts over leading axes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    diff = np.linalg.norm(x - y, axis=-1)
    total = np.linalg.norm(x + y, axis=-1)
    out = 2.0 * np.arctan2(diff, total)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SphericalCap:
    """Open geodesic ball ``{y : d(center, y) < radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", unit_vector(self.center))
        if not 0.0 < self.radius <= math.pi:
            raise ValueError(f"cap radius must lie in (0, pi], got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


def cap_contains(cap: SphericalCap, x) -> np.ndarray | bool:
    """Strict membership test; vectorized over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cap.dim:
        raise ValueError(f"dimension mismatch: cap is in d={cap.dim}, point has {x.shape[-1]}")
    inside = np.asarray(geodesic_distance(cap.center, x)) < cap.radius
    return bool(inside) if inside.ndim == 0 else inside


def a2_constant(d: int) -> float:
    """``2^{d-1} * 2 pi^{(d-1)/2} / Gamma((d-1)/2)``.

    Bounds the surface measure of a geodesic ball of radius ``2 eps`` by
    ``a2_constant(d) * eps^{d-1}``.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d}")
    h = 0.5 * (d - 1)
    return 2.0 ** (d - 1) * 2.0 * math.pi**h / math.gamma(h)


def delta_bound(M: float, d: int, epsilon: float) -> float:
    """``M * a2_constant(d) * epsilon^{d-1}``; zero at ``epsilon = 0``."""
    if M <= 0:
        raise ValueError("M must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return M * a2_constant(d) * epsilon ** (d - 1)


def random_rotation(d: int, rng) -> np.ndarray:
    """Haar-distributed orthogonal ``d x d`` matrix."""
    rng = np.random.default_rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _cube_cells_per_axis(d: int, epsilon: float) -> int:
    # cell half-width 1/k; worst chord from a face point to its cell centre is
    # sqrt(d-1)/k, and radial projection onto the ball is 1-Lipschitz
    return int(math.floor(math.sqrt(d - 1) / (2.0 * math.sin(0.5 * epsilon)))) + 1


def covering_radius_bound(d: int, epsilon: float) -> float:
    """Guaranteed covering radius of ``covering_net(d, epsilon, ...)``; always < epsilon."""
    if d == 2:
        m = int(math.floor(math.pi / epsilon)) + 1
        return math.pi / m
    k = _cube_cells_per_axis(d, epsilon)
    return 2.0 * math.asin(math.sqrt(d - 1) / (2.0 * k))


def covering_net(d: int, epsilon: float, rng_seed=0, max_points: int | None = None) -> np.ndarray:
    """Finite set of centres whose open ``epsilon``-balls cover S^{d-1}.

    d = 2 uses ``floor(pi / epsilon) + 1`` equally spaced angles with a seeded
    random phase. For d >= 3 the surface of the cube ``[-1, 1]^d`` is cut
    into ``k^{d-1}`` cells per face, the cell centres are projected radially
    onto the sphere and the whole net is rotated by a seeded Haar rotation.
    The point count scales like ``epsilon^{-(d-1)}``.

    Parameters
    ----------
    d : int
        Ambient dimension, ``d >= 2``.
    epsilon : float
        Covering radius, ``0 < epsilon <= pi/4``.
    rng_seed : int or Generator
        Seed of the random phase / rotation; the net is a deterministic
        function of it.
    max_points : int, optional
        Raise ``ValueError`` instead of building a larger net.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d}")
    if not 0.0 < epsilon <= math.pi / 4:
        raise ValueError(f"epsilon must lie in (0, pi/4], got {epsilon}")
    rng = np.random.default_rng(rng_seed)
    if d == 2:
        m = int(math.floor(math.pi / epsilon)) + 1
        if max_points is not None and m > max_points:
            raise ValueError(f"net would need {m} points")
        theta = rng.uniform(0.0, 2.0 * math.pi) + 2.0 * math.pi * np.arange(m) / m
        return np.column_stack([np.cos(theta), np.sin(theta)])
    k = _cube_cells_per_axis(d, epsilon)
    m = 2 * d * k ** (d - 1)
    if max_points is not None and m > max_points:
        raise ValueError(f"net would need {m} points")
    ticks = -1.0 + (2.0 * np.arange(k) + 1.0) / k
    face = np.array(list(itertools.product(ticks, repeat=d - 1)))
    blocks = []
    for axis in range(d):
        for sign in (-1.0, 1.0):
            pts = np.insert(face, axis, sign, axis=1)
            blocks.append(pts)
    net = np.vstack(blocks)
    net /= np.linalg.norm(net, axis=1, keepdims=True)
    return net @ random_rotation(d, rng).T


def _mixture_ascent(mix, x: np.ndarray, iters: int) -> np.ndarray:
    """Minorize-maximize ascent of a vMF mixture density on the sphere.

    ``x <- normalize(sum_k r_k(x) kappa_k mu_k)`` with ``r_k`` the component
    posteriors; each step cannot decrease the density.
    """
    from .model import component_log_densities

    for _ in range(iters):
        logp = component_log_densities(mix, x) + np.log(np.where(mix.weights > 0, mix.weights, 1.0))
        logp[:, mix.weights == 0] = -np.inf
        logp -= logp.max(axis=1, keepdims=True)
        r = np.exp(logp)
        r /= r.sum(axis=1, keepdims=True)
        step = (r * mix.kappas) @ mix.means
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        ok = norm[:, 0] > 0
        if not np.any(ok):
            break
        x = np.where(ok[:, None], step / np.where(norm > 0, norm, 1.0), x)
    return x


def max_density_estimate(mix, grid_size: int = 10_000, rng_seed=0, refine: int = 10) -> float:
    """Estimate ``max_x g(x)`` of a vMF mixture ``g``.

    Evaluates the density on a covering net of roughly ``grid_size`` points
    plus the component mean directions, then hill-climbs from the ``refine``
    best candidates. The result is never below the density at any grid point.
    """
    from .model import mixture_log_density

    d = mix.dim
    if d == 2:
        eps = math.pi / max(grid_size - 1, 4)
    else:
        # invert the cube-net size 2 d k^{d-1} ~ grid_size
        k = max(2, int(round((grid_size / (2 * d)) ** (1.0 / (d - 1)))))
        eps = 2.0 * math.asin(math.sqrt(d - 1) / (2.0 * k)) * (1 + 1e-9)
    eps = min(eps, math.pi / 4)
    grid = covering_net(d, eps, rng_seed)
    cand = np.vstack([grid, mix.means])
    vals = mixture_log_density(mix, cand)
    best = np.argsort(vals)[::-1][:refine]
    climbed = _mixture_ascent(mix, cand[best], iters=500)
    top = max(vals.max(), mixture_log_density(mix, climbed).max())
    return float(np.exp(top))
