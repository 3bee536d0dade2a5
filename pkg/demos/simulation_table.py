"""
A small simulation table
========================

Replicate the two-component study at a reduced number of replications.
Pass a larger count on the command line for the full run, e.g.
``python demos/simulation_table.py 500``.
"""

import sys
from dataclasses import replace
from pathlib import Path

from penvmf import io
from penvmf.simulation import run_experiment

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 50
config = Path(__file__).resolve().parents[1] / "configs" / "table1_d2.spec"
name, cells = io.load_experiment_specs(config)

# each cell is one sample size; replicate r always uses the same seeds
for spec in cells:
    res = run_experiment(replace(spec, replications=reps))
    print(f"d={spec.d} n={spec.n} ({res.n_ok} replicates)")
    print(res.format_table())
    print()
