"""
Why the likelihood needs a penalty
==================================

Put one component's mean on a data point and let its concentration grow.
The plain log-likelihood keeps climbing, so the unpenalized MLE does not
exist. Subtracting psi_n * kappa turns the climb into a peak.
"""

import numpy as np

from penvmf import VmfMixture, sample_mixture
from penvmf.degeneracy import divergence_sequence

truth = VmfMixture([0.5, 0.5], [[1, 0], [0, 1]], [10.0, 1.0])
x, _ = sample_mixture(truth, 50, rng_seed=3)

# the climb only starts once 1/sqrt(q) is below the gap to the nearest
# neighbour of the anchor point, so the path has to go far out
trace = divergence_sequence(x, truth, anchor=(0, 0), q_max=10**12)
print(f"{'q':>14} {'loglik':>12} {'penalized':>16}")
for q, ll, pll in list(zip(trace.q_values, trace.loglik, trace.penalized_loglik))[::4]:
    print(f"{q:>14d} {ll:12.3f} {pll:16.3f}")

# growth is only logarithmic in q: about (d - 1)/2 nats per factor e
slope = np.polyfit(np.log(trace.q_values[-6:]), trace.loglik[-6:], 1)[0]
print(f"tail slope d loglik / d log q = {slope:.3f}")
print("penalized maximum at q =", trace.q_values[trace.penalized_argmax])

# at that rate the path only overtakes its starting value very far out
catch_up = (trace.loglik[0] - trace.loglik[-1]) / slope
print(f"loglik passes its q = 1 value near q = 1e12 * e^{catch_up:.0f}")
