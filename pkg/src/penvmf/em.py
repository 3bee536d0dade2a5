"""Penalized EM for finite von Mises-Fisher mixtures.

The traced objective is ``l_n(gamma) - psi_n * sum_h kappa_h``. Each
iteration runs one E-step on the current mixture and one penalized M-step;
the penalty only changes the concentration update, which solves

    A_d(kappa_h) = (|r_h| - psi_n) / N_h,   r_h = sum_i w_ih x_i,  N_h = sum_i w_ih

and sets ``kappa_h = 0`` when the right-hand side is negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .model import PenaltyConfig, VmfMixture, _weighted_log_terms
from .special import kappa_approx, solve_kappa_exact
from .sphere import as_unit_rows

__all__ = [
    "EmConfig",
    "FitReport",
    "DegenerateComponentError",
    "FitFailureError",
    "e_step",
    "m_step",
    "initialize",
    "fit",
]

RHO_CEILING = 1.0 - 1e-10
MIN_COMPONENT_MASS = 1e-12
KMEANS_ITERS = 20
INIT_MODES = ("kmeans", "random", "scatter")
SCATTER_KAPPA_RANGE = (0.1, 100.0)


class DegenerateComponentError(RuntimeError):
    """A component lost (numerically) all of its responsibility mass."""

    def __init__(self, component: int, mass: float):
        super().__init__(f"component {component} has total responsibility {mass:.3g} < {MIN_COMPONENT_MASS}")
        self.component = component
        self.mass = mass


class FitFailureError(RuntimeError):
    """Every restart of a fit ended in a degenerate component."""


@dataclass(frozen=True)
class EmConfig:
    """Settings for :func:`fit`.

    Parameters
    ----------
    p : int
        Number of mixture components.
    max_iters : int
        Upper bound on EM iterations per restart.
    tol : float
        Stop once ``|pll_k - pll_{k-1}| < tol * |pll_k|``.
    kappa_update : {"approx", "exact"}
        Closed-form approximation of the concentration update, or the exact
        inverse of the Bessel ratio. Only "exact" guarantees ascent.
    init : {"kmeans", "random", "scatter"}
        Spherical k-means seeding; ``p`` distinct data points with
        ``kappa = 1``; or fully random parameters (see :func:`initialize`).
    restarts : int
        Independent initializations; the best final objective wins.
    penalty : PenaltyConfig
        Resolved against the data once, before iterating.
    seed : int
        Restart ``r`` draws from ``SeedSequence([seed, r])``.
    """

    p: int = 2
    max_iters: int = 500
    tol: float = 1e-8
    kappa_update: str = "approx"
    init: str = "kmeans"
    restarts: int = 1
    penalty: PenaltyConfig = field(default_factory=lambda: PenaltyConfig.from_zeta(1.0))
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.kappa_update not in ("approx", "exact"):
            raise ValueError(f"kappa_update must be 'approx' or 'exact', got {self.kappa_update!r}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")


@dataclass
class FitReport:
    """Result of :func:`fit`.

    ``pll_trace[0]`` is the objective at the initial mixture, so a run that
    stops after ``k`` iterations has ``k + 1`` trace entries.
    ``responsibilities`` are recomputed at the returned mixture.
    """

    mixture: VmfMixture
    pll_trace: np.ndarray
    iterations: int
    converged: bool
    responsibilities: np.ndarray
    restart: int = 0
    failed_restarts: int = 0
    psi_n: float = 0.0

    @property
    def pll(self) -> float:
        return float(self.pll_trace[-1])


def _responsibilities(log_terms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    row_lse = logsumexp(log_terms, axis=1, keepdims=True)
    resp = np.exp(log_terms - row_lse)
    # exp rounding leaves rows a few ulps off one
    resp /= resp.sum(axis=1, keepdims=True)
    return resp, row_lse[:, 0]


def e_step(mix: VmfMixture, data) -> np.ndarray:
    """Posterior component probabilities, an ``(n, p)`` matrix with unit row sums."""
    x = as_unit_rows(data)
    if x.shape[0] == 0:
        raise ValueError("e_step needs at least one observation")
    resp, _ = _responsibilities(_weighted_log_terms(mix, x))
    return resp


def _psi(penalty, data: np.ndarray) -> float:
    if isinstance(penalty, PenaltyConfig):
        if penalty.psi_n is None:
            penalty = penalty.resolve(data)
        return penalty.resolved_psi
    psi = float(penalty)
    if psi < 0:
        raise ValueError("psi_n must be non-negative")
    return psi


def _invert_ratio(d: int, rho: float, kappa_update: str) -> float:
    if rho <= 0.0:
        return 0.0
    rho = min(rho, RHO_CEILING)
    if kappa_update == "exact":
        return solve_kappa_exact(d, rho)
    return kappa_approx(d, rho)


def m_step(resp, data, penalty, kappa_update: str = "approx") -> VmfMixture:
    """Penalized maximization step.

    Parameters
    ----------
    resp : (n, p) array
        Responsibilities with unit row sums.
    data : (n, d) array
        Unit vectors.
    penalty : PenaltyConfig or float
        Penalty rule, or ``psi_n`` directly.
    kappa_update : {"approx", "exact"}

    Raises
    ------
    DegenerateComponentError
        If some column of ``resp`` sums to less than ``1e-12``.
    """
    x = as_unit_rows(data)
    resp = np.asarray(resp, dtype=float)
    if resp.ndim != 2 or resp.shape[0] != x.shape[0]:
        raise ValueError(f"responsibilities of shape {resp.shape} do not match {x.shape[0]} observations")
    psi = _psi(penalty, x)
    n, d = x.shape
    mass = resp.sum(axis=0)
    for h, m in enumerate(mass):
        if m < MIN_COMPONENT_MASS:
            raise DegenerateComponentError(h, float(m))
    weights = mass / mass.sum()
    resultants = resp.T @ x
    lengths = np.linalg.norm(resultants, axis=1)
    means = np.empty_like(resultants)
    kappas = np.empty(resp.shape[1])
    for h in range(resp.shape[1]):
        if lengths[h] > 0:
            means[h] = resultants[h] / lengths[h]
        else:
            # no preferred direction; kappa is forced to zero below anyway
            means[h] = np.eye(d)[0]
        kappas[h] = _invert_ratio(d, (lengths[h] - psi) / mass[h], kappa_update)
    return VmfMixture(weights, means, kappas)


def _spherical_kmeans(x: np.ndarray, p: int, rng: np.random.Generator, iters: int = KMEANS_ITERS):
    n = x.shape[0]
    # k-means++ seeding with 1 - cosine as the dissimilarity
    centers = [x[rng.integers(n)]]
    for _ in range(1, p):
        dist = 1.0 - np.max(x @ np.array(centers).T, axis=1)
        dist = np.clip(dist, 0.0, None)
        total = dist.sum()
        idx = rng.choice(n, p=dist / total) if total > 0 else rng.integers(n)
        centers.append(x[idx])
    centers = np.array(centers)
    labels = np.zeros(n, dtype=int)
    for _ in range(iters):
        sim = x @ centers.T
        labels = np.argmax(sim, axis=1)
        for h in range(p):
            members = labels == h
            if not np.any(members):
                # refill an empty cluster with the worst-served point
                worst = int(np.argmin(sim[np.arange(n), labels]))
                labels[worst] = h
                members = labels == h
            s = x[members].sum(axis=0)
            norm = np.linalg.norm(s)
            centers[h] = s / norm if norm > 0 else x[members][0]
    return centers, labels


def initialize(data, cfg: EmConfig, rng=None) -> VmfMixture:
    """Starting mixture for one EM run.

    ``init="random"`` picks ``p`` distinct observations as mean directions
    with unit concentrations and equal weights. ``init="kmeans"`` runs
    spherical k-means and sets each concentration from the cluster's mean
    resultant length through :func:`kappa_approx`. ``init="scatter"``
    draws uniform mean directions, log-uniform concentrations on
    ``[0.1, 100]`` and flat-Dirichlet weights; with many restarts it
    explores far more basins than the data-point starts.
    """
    x = as_unit_rows(data)
    n, d = x.shape
    if n < cfg.p:
        raise ValueError(f"need at least p={cfg.p} observations, got {n}")
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    if cfg.init == "random":
        idx = rng.choice(n, size=cfg.p, replace=False)
        return VmfMixture(np.full(cfg.p, 1.0 / cfg.p), x[idx], np.ones(cfg.p))
    if cfg.init == "scatter":
        means = rng.standard_normal((cfg.p, d))
        lo, hi = np.log(SCATTER_KAPPA_RANGE)
        kappas = np.exp(rng.uniform(lo, hi, cfg.p))
        weights = rng.dirichlet(np.ones(cfg.p))
        return VmfMixture(weights / weights.sum(), means, kappas)
    centers, labels = _spherical_kmeans(x, cfg.p, rng)
    counts = np.bincount(labels, minlength=cfg.p).astype(float)
    kappas = np.empty(cfg.p)
    for h in range(cfg.p):
        rbar = np.linalg.norm(x[labels == h].mean(axis=0))
        kappas[h] = kappa_approx(d, min(rbar, RHO_CEILING))
    return VmfMixture(counts / n, centers, kappas)


def _run(x: np.ndarray, start: VmfMixture, psi: float, cfg: EmConfig) -> FitReport:
    mix = start
    resp, row_lse = _responsibilities(_weighted_log_terms(mix, x))
    trace = [float(row_lse.sum()) - psi * float(mix.kappas.sum())]
    converged = False
    it = 0
    while it < cfg.max_iters:
        mix = m_step(resp, x, psi, cfg.kappa_update)
        resp, row_lse = _responsibilities(_weighted_log_terms(mix, x))
        trace.append(float(row_lse.sum()) - psi * float(mix.kappas.sum()))
        it += 1
        if abs(trace[-1] - trace[-2]) < cfg.tol * abs(trace[-1]):
            converged = True
            break
    return FitReport(mix, np.array(trace), it, converged, resp, psi_n=psi)


def fit(data, cfg: EmConfig) -> FitReport:
    """Fit a ``cfg.p``-component vMF mixture by penalized EM.

    Runs ``cfg.restarts`` independent starts and keeps the one with the
    highest final penalized log-likelihood (ties go to the lower restart
    index). A start that hits a degenerate component is dropped.

    Raises
    ------
    FitFailureError
        If every restart degenerates.
    """
    x = as_unit_rows(data)
    if x.shape[0] < cfg.p:
        raise ValueError(f"need at least p={cfg.p} observations, got {x.shape[0]}")
    psi = _psi(cfg.penalty, x)
    best = None
    failed = 0
    for r in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, r]))
        try:
            report = _run(x, initialize(x, cfg, rng), psi, cfg)
        except DegenerateComponentError:
            failed += 1
            continue
        if not math.isfinite(report.pll):
            failed += 1
            continue
        report.restart = r
        if best is None or report.pll > best.pll:
            best = report
    if best is None:
        raise FitFailureError(f"all {cfg.restarts} restarts ended in a degenerate component")
    best.failed_restarts = failed
    return best
