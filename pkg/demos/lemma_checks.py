"""
Numerical checks of the consistency conditions
==============================================

Two ingredients of the consistency argument can be probed directly: no
small spherical cap holds too many sample points, and the penalty
psi_n = 1/n dominates the likelihood gain near the boundary of the
parameter space once n is large enough.
"""

from penvmf import PenaltyConfig, VmfMixture, check_penalty_conditions
from penvmf.degeneracy import verify_ball_count_bounds
from penvmf.model import sample_uniform_sphere
from penvmf.sphere import max_density_estimate

for d in (2, 3, 4):
    truth = VmfMixture([0.5, 0.5], sample_uniform_sphere(d, 2, d), [10.0, 1.0])
    M = max_density_estimate(truth)

    rep = verify_ball_count_bounds(truth, [20_000], "fixed_regime", trials=3, seed=0)
    print(f"d={d}: max density {M:.3f}, {len(rep.rows)} cap checks, "
          f"worst count/bound {rep.worst_ratio():.3f}, {'pass' if rep.passed else 'FAIL'}")

    cond = check_penalty_conditions(PenaltyConfig.from_zeta(1.0), d, [10**k for k in range(3, 10)], M)
    print(f"      penalty 1/n: C1 {cond.c1}, C2 {cond.c2}, C3 holds from n = {cond.c3_from_n}")
    none = check_penalty_conditions(PenaltyConfig.fixed(0.0), d, [10**k for k in range(3, 10)], M)
    print(f"      no penalty:  C3 {none.c3}")
