"""Likelihood degeneracy of vMF mixtures, and empirical ball-count bounds.

:func:`divergence_sequence` walks a mixture towards the boundary of the
parameter space: one component is centred on an observation and its
concentration is sent to infinity, which makes the ordinary likelihood
unbounded while the penalized one stays bounded.

:func:`verify_ball_count_bounds` checks, by simulation, how many of ``n``
draws from a mixture can fall into any geodesic ball of radius ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .model import PenaltyConfig, VmfMixture, log_likelihood, sample_mixture
from .sphere import a2_constant, as_unit_rows, covering_net, delta_bound, max_density_estimate

__all__ = [
    "DivergenceTrace",
    "geometric_q_grid",
    "divergence_sequence",
    "BallCountRow",
    "BallCountReport",
    "epsilon_grid",
    "verify_ball_count_bounds",
]

XI0 = 0.1
MAX_NET_CENTERS = 200_000


@dataclass
class DivergenceTrace:
    """Log-likelihood and penalized log-likelihood along a degenerating path."""

    q_values: np.ndarray
    loglik: np.ndarray
    penalized_loglik: np.ndarray
    weight_sums: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.q_values = np.asarray(self.q_values, dtype=np.int64)
        self.loglik = np.asarray(self.loglik, dtype=float)
        self.penalized_loglik = np.asarray(self.penalized_loglik, dtype=float)
        if not (len(self.q_values) == len(self.loglik) == len(self.penalized_loglik)):
            raise ValueError("trace columns must have equal lengths")
        if np.any(np.diff(self.q_values) <= 0):
            raise ValueError("q_values must be strictly increasing")

    @property
    def growth(self) -> float:
        """``loglik[-1] - loglik[0]``."""
        return float(self.loglik[-1] - self.loglik[0])

    def increasing_from(self) -> int:
        """Smallest index from which ``loglik`` never decreases."""
        steps = np.diff(self.loglik)
        bad = np.flatnonzero(steps < 0)
        return 0 if bad.size == 0 else int(bad[-1] + 1)

    @property
    def penalized_argmax(self) -> int:
        return int(np.argmax(self.penalized_loglik))

    def has_interior_penalized_max(self) -> bool:
        return self.penalized_argmax < len(self.q_values) - 1


def geometric_q_grid(q_max: int) -> np.ndarray:
    """``1, 2, 4, ...`` up to ``q_max``, with ``q_max`` itself appended."""
    if q_max < 1:
        raise ValueError("q_max must be at least 1")
    q = [1]
    while q[-1] * 2 <= q_max:
        q.append(q[-1] * 2)
    if q[-1] != q_max:
        q.append(q_max)
    return np.array(q, dtype=np.int64)


def divergence_sequence(
    data,
    base_mix: VmfMixture,
    anchor: tuple[int, int],
    q_max: int,
    penalty: PenaltyConfig | None = None,
    q_values=None,
) -> DivergenceTrace:
    """Evaluate the likelihood along the degenerating sequence.

    Component ``l`` gets mean ``x_m`` and concentration ``q``; all weights
    become ``(1 - 1/q) pi_k + 1/(q p)``. Everything else in ``base_mix`` is
    kept.

    Parameters
    ----------
    data : (n, d) array
    base_mix : VmfMixture
    anchor : (l, m)
        Component index and observation index.
    q_max : int
        Largest concentration on the path.
    penalty : PenaltyConfig, optional
        Defaults to ``psi_n = 1/n``.
    q_values : sequence of int, optional
        Overrides the geometric grid.
    """
    x = as_unit_rows(data)
    n = x.shape[0]
    l, m = anchor
    if not 0 <= l < base_mix.p:
        raise IndexError(f"component index {l} out of range for p={base_mix.p}")
    if not 0 <= m < n:
        raise IndexError(f"observation index {m} out of range for n={n}")
    pen = (penalty or PenaltyConfig.from_zeta(1.0)).resolve(x)
    qs = geometric_q_grid(q_max) if q_values is None else np.asarray(q_values, dtype=np.int64)
    p = base_mix.p
    means = base_mix.means.copy()
    means[l] = x[m]
    ll, pll, wsum = [], [], []
    for q in qs:
        weights = (1.0 - 1.0 / q) * base_mix.weights + 1.0 / (q * p)
        kappas = base_mix.kappas.copy()
        kappas[l] = float(q)
        mix = VmfMixture(weights / weights.sum(), means, kappas)
        val = log_likelihood(mix, x)
        ll.append(val)
        pll.append(val - pen.resolved_psi * kappas.sum())
        wsum.append(weights.sum())
    return DivergenceTrace(qs, ll, pll, np.array(wsum))


@dataclass(frozen=True)
class BallCountRow:
    n: int
    trial: int
    regime: str
    epsilon: float
    sup_fraction: float
    bound: float
    centers: str

    @property
    def violated(self) -> bool:
        return self.sup_fraction > self.bound


@dataclass
class BallCountReport:
    """Outcome of :func:`verify_ball_count_bounds`.

    ``passed`` looks only at the largest ``n``, where the almost-sure
    statements are supposed to have kicked in.
    """

    M: float
    rows: list[BallCountRow]

    @property
    def largest_n(self) -> int:
        return max((r.n for r in self.rows), default=0)

    @property
    def violations(self) -> list[BallCountRow]:
        return [r for r in self.rows if r.violated]

    @property
    def passed(self) -> bool:
        top = self.largest_n
        return not any(r.violated for r in self.rows if r.n == top)

    def worst_ratio(self) -> float:
        return max(r.sup_fraction / r.bound for r in self.rows)


def _lower_edge(n: int, M: float, d: int) -> float:
    return (math.log(n) / (M * n * a2_constant(d))) ** (1.0 / (d - 1))


def epsilon_grid(n: int, M: float, d: int, regime: str, size: int = 5) -> np.ndarray:
    """Radii spanning one regime.

    The fixed and uniform regimes cover ``log n / (M n A2) <= eps^{d-1} < xi0``
    geometrically (upper edge excluded); the small regime takes fractions
    of the lower edge.
    """
    lo = _lower_edge(n, M, d)
    hi = XI0 ** (1.0 / (d - 1))
    if regime == "small_regime":
        return lo * np.linspace(0.1, 0.9, size)
    if regime not in ("fixed_regime", "uniform_regime"):
        raise ValueError(f"unknown regime {regime!r}")
    if lo >= hi:
        return np.empty(0)
    return np.geomspace(lo, hi, size + 1)[:-1]


def _sup_ball_fraction(tree: cKDTree, pts: np.ndarray, eps: float, rng) -> tuple[float, str]:
    n, d = pts.shape
    chord = 2.0 * math.sin(0.5 * eps)
    try:
        centers = covering_net(d, eps, rng, max_points=MAX_NET_CENTERS)
        kind = "net"
    except ValueError:
        # net too large: use the observations themselves as centres
        centers = pts
        kind = "data"
    counts = tree.query_ball_point(centers, chord * (1 - 1e-12), return_length=True)
    return float(np.max(counts)) / n, kind


def verify_ball_count_bounds(
    mix_true: VmfMixture,
    n_values,
    epsilon_mode: str = "fixed_regime",
    trials: int = 20,
    seed: int = 0,
    grid_size: int = 5,
    M: float | None = None,
) -> BallCountReport:
    """Monte-Carlo check of the ball-count inequalities.

    For every ``n``, trial and radius the largest fraction of the sample
    inside one ball ``B_eps(mu)`` is compared with

    * ``2 delta(eps)`` in ``"fixed_regime"``,
    * ``4 delta(eps)`` in ``"uniform_regime"``,
    * ``2 (log n)^2 / n`` in ``"small_regime"``,

    where ``delta(eps) = M A2 eps^{d-1}`` and ``M`` is the maximum of the
    true density. The supremum over ``mu`` runs over a covering net of
    radius ``eps``, or over the sample points once that net gets too large,
    so it can only under-estimate the true supremum.
    """
    n_values = [int(v) for v in n_values]
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be increasing")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    d = mix_true.dim
    if M is None:
        M = max_density_estimate(mix_true)
    rows = []
    for n in n_values:
        eps_grid = epsilon_grid(n, M, d, epsilon_mode, grid_size)
        for t in range(trials):
            ss = np.random.SeedSequence([seed, n, t])
            data_seed, net_seed = ss.spawn(2)
            pts, _ = sample_mixture(mix_true, n, np.random.default_rng(data_seed))
            tree = cKDTree(pts)
            net_rng = np.random.default_rng(net_seed)
            for eps in eps_grid:
                frac, kind = _sup_ball_fraction(tree, pts, float(eps), net_rng)
                if epsilon_mode == "small_regime":
                    bound = 2.0 * math.log(n) ** 2 / n
                else:
                    factor = 2.0 if epsilon_mode == "fixed_regime" else 4.0
                    bound = factor * delta_bound(M, d, float(eps))
                rows.append(BallCountRow(n, t, epsilon_mode, float(eps), frac, bound, kind))
    return BallCountReport(M, rows)
