"""von Mises-Fisher components, finite mixtures, penalties and samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .special import log_norm_const
from .sphere import a2_constant, as_unit_rows, unit_vector

__all__ = [
    "VmfComponent",
    "VmfMixture",
    "PenaltyConfig",
    "PenaltyConditionReport",
    "log_density",
    "component_log_densities",
    "mixture_log_density",
    "log_likelihood",
    "penalty_value",
    "penalized_log_likelihood",
    "circular_variance",
    "check_penalty_conditions",
    "sample_vmf",
    "sample_mixture",
    "sample_uniform_sphere",
]


@dataclass(frozen=True, eq=False)
class VmfComponent:
    """Mean direction ``mu`` (renormalized on construction) and concentration ``kappa``."""

    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "mu", unit_vector(self.mu))
        kappa = float(self.kappa)
        if not (kappa >= 0.0 and math.isfinite(kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        object.__setattr__(self, "kappa", kappa)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class VmfMixture:
    """A ``p``-component vMF mixture stored as arrays.

    Attributes
    ----------
    weights : ndarray, shape (p,)
        Mixing proportions, non-negative and summing to one.
    means : ndarray, shape (p, d)
        Unit mean directions, one per row.
    kappas : ndarray, shape (p,)
        Concentrations, non-negative.
    """

    weights: np.ndarray
    means: np.ndarray
    kappas: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        mu = as_unit_rows(self.means)
        k = np.atleast_1d(np.asarray(self.kappas, dtype=float)).copy()
        if not (w.shape[0] == mu.shape[0] == k.shape[0]) or w.ndim != 1 or k.ndim != 1:
            raise ValueError("weights, means and kappas must describe the same number of components")
        if w.shape[0] < 1:
            raise ValueError("a mixture needs at least one component")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("mixing weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixing weights sum to {w.sum()!r}, not 1")
        if np.any(k < 0) or not np.all(np.isfinite(k)):
            raise ValueError("concentrations must be finite and non-negative")
        for name, arr in (("weights", w), ("means", mu), ("kappas", k)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_components(cls, weights, components) -> "VmfMixture":
        components = list(components)
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError("all components must share one dimension")
        return cls(weights, np.array([c.mu for c in components]), np.array([c.kappa for c in components]))

    @property
    def components(self) -> list[VmfComponent]:
        return [VmfComponent(m, k) for m, k in zip(self.means, self.kappas)]

    @property
    def p(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __repr__(self) -> str:
        return (
            f"VmfMixture(p={self.p}, d={self.dim}, weights={self.weights.tolist()}, "
            f"kappas={self.kappas.tolist()})"
        )


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != d:
        raise ValueError(f"dimension mismatch: model has d={d}, data has d={x.shape[-1]}")
    return x, single


def log_density(comp: VmfComponent, x) -> np.ndarray | float:
    """``log c_d(kappa) + kappa mu^T x`` for one point or a batch of rows."""
    pts, single = _points(x, comp.dim)
    out = log_norm_const(comp.dim, comp.kappa) + comp.kappa * (pts @ comp.mu)
    return float(out[0]) if single else out


def component_log_densities(mix: VmfMixture, x) -> np.ndarray:
    """``(n, p)`` matrix of per-component log densities."""
    pts, _ = _points(x, mix.dim)
    log_c = np.array([log_norm_const(mix.dim, k) for k in mix.kappas])
    return log_c + (pts @ mix.means.T) * mix.kappas


def _weighted_log_terms(mix: VmfMixture, pts: np.ndarray) -> np.ndarray:
    terms = component_log_densities(mix, pts)
    live = mix.weights > 0
    with np.errstate(divide="ignore"):
        log_w = np.log(mix.weights)
    terms = terms + log_w
    terms[:, ~live] = -np.inf
    return terms


def mixture_log_density(mix: VmfMixture, x) -> np.ndarray | float:
    """log of ``sum_k pi_k f(x; mu_k, kappa_k)``, via log-sum-exp.

    Components with zero weight are skipped.
    """
    pts, single = _points(x, mix.dim)
    out = logsumexp(_weighted_log_terms(mix, pts), axis=1)
    return float(out[0]) if single else out


def log_likelihood(mix: VmfMixture, data) -> float:
    pts, _ = _points(data, mix.dim)
    if pts.shape[0] == 0:
        raise ValueError("log-likelihood of an empty dataset is undefined")
    return float(np.sum(mixture_log_density(mix, pts)))


@dataclass(frozen=True)
class PenaltyConfig:
    """Linear concentration penalty ``-psi_n * kappa`` per component.

    ``rule`` decides how ``psi_n`` is obtained:

    ``"fixed"``
        ``psi_n`` is given directly (``psi_n = 0`` switches the penalty off).
    ``"zeta"``
        ``psi_n = zeta / n``.
    ``"circular_variance"``
        ``psi_n = S_x / n`` with ``S_x = 1 - |mean(x)|``.

    Rules other than ``"fixed"`` leave ``psi_n`` unset until :meth:`resolve`
    sees the data.
    """

    rule: str = "fixed"
    psi_n: float | None = 0.0
    zeta: float | None = None
    circ_var: float | None = None

    def __post_init__(self):
        if self.rule not in ("fixed", "zeta", "circular_variance"):
            raise ValueError(f"unknown penalty rule {self.rule!r}")
        if self.rule == "fixed" and (self.psi_n is None or self.psi_n < 0):
            raise ValueError("fixed penalty needs psi_n >= 0")
        if self.rule == "zeta" and not (self.zeta is not None and self.zeta > 0):
            raise ValueError("zeta rule needs zeta > 0")
        if self.psi_n is not None and self.psi_n < 0:
            raise ValueError("psi_n must be non-negative")

    @classmethod
    def fixed(cls, psi_n: float) -> "PenaltyConfig":
        return cls("fixed", psi_n=float(psi_n))

    @classmethod
    def from_zeta(cls, zeta: float) -> "PenaltyConfig":
        return cls("zeta", psi_n=None, zeta=float(zeta))

    @classmethod
    def circular_variance(cls) -> "PenaltyConfig":
        return cls("circular_variance", psi_n=None)

    def psi_for(self, n: int) -> float:
        """Coefficient the rule assigns to a sample of size ``n``."""
        if self.rule == "fixed":
            return float(self.psi_n)
        if self.rule == "zeta":
            return self.zeta / n
        if self.circ_var is None:
            raise ValueError("circular-variance penalty has not been resolved against data")
        return self.circ_var / n

    def resolve(self, data) -> "PenaltyConfig":
        """Copy with ``psi_n`` computed from ``data``."""
        x = np.atleast_2d(np.asarray(data, dtype=float))
        n = x.shape[0]
        if self.rule == "circular_variance":
            s = circular_variance(x)
            return PenaltyConfig("circular_variance", psi_n=s / n, circ_var=s)
        return PenaltyConfig(self.rule, psi_n=self.psi_for(n), zeta=self.zeta)

    @property
    def resolved_psi(self) -> float:
        if self.psi_n is None:
            raise ValueError(f"penalty rule {self.rule!r} needs resolve(data) before use")
        return float(self.psi_n)


def circular_variance(data) -> float:
    """``1 - |mean resultant vector|`` of the sample."""
    x = np.atleast_2d(np.asarray(data, dtype=float))
    return float(1.0 - np.linalg.norm(x.mean(axis=0)))


def penalty_value(cfg: PenaltyConfig, kappas) -> float:
    """``-psi_n * sum(kappas)``."""
    return -cfg.resolved_psi * float(np.sum(kappas))


def penalized_log_likelihood(mix: VmfMixture, data, cfg: PenaltyConfig) -> float:
    return log_likelihood(mix, data) + penalty_value(cfg, mix.kappas)


@dataclass
class PenaltyConditionReport:
    """Outcome of :func:`check_penalty_conditions`.

    ``c3_per_n`` holds one boolean per grid size; ``c3`` requires the
    inequality from some grid size onwards up to the largest one.
    """

    c1: bool
    c2: bool
    c3: bool
    n_grid: list[int]
    psi: list[float]
    kappa_star_log: list[float]
    c3_per_n: list[bool]
    c3_from_n: int | None
    c2_decay: dict[float, list[float]] = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return self.c1 and self.c2 and self.c3


def check_penalty_conditions(cfg: PenaltyConfig, d: int, n_grid, M: float) -> PenaltyConditionReport:
    """Numerically check the three penalty conditions on a grid of sample sizes.

    * Additivity holds by construction for ``-psi_n * sum(kappa)``.
    * The positive part of the per-component penalty must vanish and
      ``|penalty(kappa)| / n`` must shrink along the grid for
      ``kappa`` in {1, 10, 100}.
    * For each ``n`` the penalty at the boundary
      ``kappa*(n) = exp((M n A2 / log n)^{1/(2d-2)})`` of the heavy-penalty
      region must not exceed ``-3 (log n)^2 log kappa*(n)``. This is compared
      in log space so that astronomically large ``kappa*`` stay finite.
    """
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    psis = [cfg.psi_for(n) for n in n_grid]
    a2 = a2_constant(d)

    c1 = True

    probe = np.geomspace(1e-3, 1e6, 50)
    positive_part_zero = all(max(0.0, -psi * k) == 0.0 for psi in psis for k in probe)
    decay = {}
    decays = True
    for kappa in (1.0, 10.0, 100.0):
        seq = [abs(-psi * kappa) / n for psi, n in zip(psis, n_grid)]
        decay[kappa] = seq
        nonincreasing = all(b <= a for a, b in zip(seq, seq[1:]))
        shrinks = seq[-1] == 0.0 or (len(seq) > 1 and seq[-1] <= 1e-2 * seq[0])
        decays = decays and nonincreasing and shrinks
    c2 = positive_part_zero and decays

    per_n = []
    log_kstar = []
    for psi, n in zip(psis, n_grid):
        log_n = math.log(n)
        lk = (M * n * a2 / log_n) ** (1.0 / (2 * d - 2))
        log_kstar.append(lk)
        rhs = 3.0 * log_n**2 * lk
        # psi * kappa* >= 3 (log n)^2 log kappa*
        per_n.append(psi > 0 and (math.log(psi) + lk) >= math.log(rhs))
    c3_from = None
    for i in range(len(per_n)):
        if all(per_n[i:]):
            c3_from = n_grid[i]
            break
    return PenaltyConditionReport(
        c1=c1,
        c2=c2,
        c3=c3_from is not None,
        n_grid=n_grid,
        psi=psis,
        kappa_star_log=log_kstar,
        c3_per_n=per_n,
        c3_from_n=c3_from,
        c2_decay=decay,
    )


def _wood_cosines(kappa: float, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``w = mu^T x`` for n vMF samples by Wood's rejection scheme."""
    m1 = d - 1.0
    b = m1 / (math.sqrt(4.0 * kappa * kappa + m1 * m1) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m1 * math.log1p(-x0 * x0)
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        batch = max(16, int(need * 1.3) + 8)
        z = rng.beta(0.5 * m1, 0.5 * m1, size=batch)
        u = rng.uniform(size=batch)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        accept = kappa * w + m1 * np.log1p(-x0 * w) - c >= np.log(u)
        got = w[accept][:need]
        out[filled : filled + got.size] = got
        filled += got.size
    return out


def _householder_to(mu: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply the reflection that maps e_1 to ``mu`` to every row of ``pts``."""
    e1 = np.zeros_like(mu)
    e1[0] = 1.0
    u = e1 - mu
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return pts
    u /= nu
    return pts - 2.0 * np.outer(pts @ u, u)


def sample_vmf(comp: VmfComponent, n: int, rng_seed=None) -> np.ndarray:
    """``n`` exact vMF draws as an ``(n, d)`` array.

    The cosine to the mean direction comes from Wood's (1994) rejection
    sampler, the tangent direction is uniform, and the north pole is
    reflected onto ``mu``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng_seed)
    d = comp.dim
    w = _wood_cosines(comp.kappa, d, n, rng)
    v = rng.standard_normal((n, d - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = np.column_stack([w, np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v])
    return _householder_to(comp.mu, pts)


def sample_mixture(mix: VmfMixture, n: int, rng_seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Draw labels from the weights, then points from the chosen components."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng_seed)
    labels = rng.choice(mix.p, size=n, p=mix.weights)
    pts = np.empty((n, mix.dim))
    for k, comp in enumerate(mix.components):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            pts[idx] = sample_vmf(comp, idx.size, rng)
    return pts, labels


def sample_uniform_sphere(d: int, n: int, rng_seed=None) -> np.ndarray:
    """Uniform points on S^{d-1} from normalized isotropic Gaussians."""
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    rng = np.random.default_rng(rng_seed)
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)

