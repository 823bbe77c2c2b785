"""Probe alternative multiplier choices for the model1/model4 cells,
then measure interior-selection frequency for the p=50 tuning example."""

import sys
import time

import numpy as np

from sdar.bench import ExperimentSpec, lambda_candidates, run_experiment, tune_lambdas
from sdar.datagen import gen_model, sample

CELLS = [
    ("model4 c1=6 c2=3", dict(problem="model4", p=100, n1=200, n2=200, n_test=200,
                              replications=80, lambda_grid1=(12.0,), lambda_grid2=(6.0,),
                              grid_divisor=2.0, seed=0, methods=("csdar",))),
    ("model4 c1=6 c2=6", dict(problem="model4", p=100, n1=200, n2=200, n_test=200,
                              replications=80, lambda_grid1=(12.0,), lambda_grid2=(12.0,),
                              grid_divisor=2.0, seed=0, methods=("csdar",))),
    ("model4 c1=8 c2=3", dict(problem="model4", p=100, n1=200, n2=200, n_test=200,
                              replications=80, lambda_grid1=(16.0,), lambda_grid2=(6.0,),
                              grid_divisor=2.0, seed=0, methods=("csdar",))),
    ("model1 c1=4.5 c2=3", dict(problem="model1", p=100, n1=200, n2=200, n_test=200,
                                replications=60, lambda_grid1=(9.0,), lambda_grid2=(6.0,),
                                grid_divisor=2.0, seed=0, methods=("sdar",))),
    ("model1 c1=5 c2=3", dict(problem="model1", p=100, n1=200, n2=200, n_test=200,
                              replications=60, lambda_grid1=(10.0,), lambda_grid2=(6.0,),
                              grid_divisor=2.0, seed=0, methods=("sdar",))),
]

for name, kw in CELLS:
    t0 = time.time()
    table = run_experiment(ExperimentSpec(**kw))
    dt = time.time() - t0
    print(f"## {name}  ({dt:.0f}s)")
    for row in table.rows:
        print(f"  {row.method}: mean={row.mean_error} sd={row.std_error} "
              f"reps={row.replications} failed={row.failed}")
    sys.stdout.flush()

# Interior-selection frequency: model 2 instances at p=50, 3-candidate
# lambda1 grid, singleton lambda2.
for grid1 in [(8.0, 16.0, 24.0)]:
    spec = ExperimentSpec(problem="model2", p=50, n1=100, n2=100, n_test=10,
                          replications=1, lambda_grid1=grid1, lambda_grid2=(8.0,),
                          grid_divisor=4.0, seed=0, methods=("sdar",))
    cands = lambda_candidates(grid1, 4.0, 50, 100, 100)
    t0 = time.time()
    picks = []
    for s in range(20):
        problem = gen_model(2, 50, seed=[501, s])
        data = sample(problem, 100, 100, [502, s])
        try:
            lam1, lam2 = tune_lambdas(data, spec)
        except Exception as exc:  # noqa: BLE001 - diagnostic
            picks.append(f"ERR:{type(exc).__name__}")
            continue
        picks.append(grid1[int(np.argmin(np.abs(np.array(cands) - lam1)))])
        sys.stdout.write(".")
        sys.stdout.flush()
    dt = time.time() - t0
    print(f"\n## interior grid1={grid1}  ({dt:.0f}s)")
    print("  picks:", picks)
    from collections import Counter
    print("  counts:", Counter(picks))
    sys.stdout.flush()
