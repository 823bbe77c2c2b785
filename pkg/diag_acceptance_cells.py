"""Dry-run the three table-reproduction acceptance cells end to end."""

import time

from sdar.bench import ExperimentSpec, run_experiment

CELLS = [
    ("model2", dict(problem="model2", p=100, n1=200, n2=200, n_test=200,
                    replications=24, lambda_grid1=(16.0,), lambda_grid2=(8.0,),
                    grid_divisor=4.0, seed=0, methods=("sdar", "oracle"))),
    ("model1", dict(problem="model1", p=100, n1=200, n2=200, n_test=200,
                    replications=66, lambda_grid1=(12.0,), lambda_grid2=(12.0,),
                    grid_divisor=2.0, seed=0, methods=("sdar",))),
    ("model4", dict(problem="model4", p=100, n1=200, n2=200, n_test=200,
                    replications=80, lambda_grid1=(16.0,), lambda_grid2=(12.0,),
                    grid_divisor=2.0, seed=0, methods=("csdar",))),
]

for name, kw in CELLS:
    t0 = time.time()
    table = run_experiment(ExperimentSpec(**kw))
    dt = time.time() - t0
    print(f"## {name}  ({dt:.0f}s)")
    for row in table.rows:
        print(f"  {row.method}: mean={row.mean_error} sd={row.std_error} "
              f"reps={row.replications} failed={row.failed}")
    import sys
    sys.stdout.flush()
