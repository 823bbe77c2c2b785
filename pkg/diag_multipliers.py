"""One-time diagnostic: test error per effective lambda multiplier.

Scans c1 (graph radius / scale) and c2 (direction radius / scale) at the
acceptance sizes, p=100 and n1=n2=200, to pick the frozen singleton-grid
multipliers the acceptance runs use.  Output is one line per cell.
"""

import sys
import time

import numpy as np

from sdar.bench import BENCH_SOLVER, _generate_problem, ExperimentSpec
from sdar.classify import classify_sdar
from sdar.copula import DegenerateVarianceError, classify_csdar, csdar_from_solutions, rank_statistics
from sdar.core import NumericalError
from sdar.datagen import sample, sample_mixture
from sdar.estimate import (
    FitConfig,
    class_moments,
    default_scale,
    sdar_from_solutions,
    solve_direction_program,
    solve_graph_program,
)
from sdar.solver import InfeasibleError, NumericalBreakdownError

C1S = (2.0, 2.5, 3.0, 4.0, 5.0)
C2S = (0.5, 1.0, 2.0)
SEEDS = range(8)
P = 100
N = 200


def run(problem_name, method):
    scale = default_scale(P, N, N)
    spec = ExperimentSpec(problem=problem_name, p=P, n1=N, n2=N, n_test=200,
                          replications=1, methods=(method,),
                          lambda_grid1=(1.0,), lambda_grid2=(1.0,), seed=0)
    # errors[c1][c2] -> list of per-seed test errors
    table = {c1: {c2: [] for c2 in C2S} for c1 in C1S}
    skipped = 0
    t_start = time.time()
    for rep in SEEDS:
        prob = _generate_problem(spec, rep)
        train = sample(prob, N, N, seed=[0, 0, rep])
        test = sample_mixture(prob, 200, seed=[0, 1, rep])
        try:
            if method == "sdar":
                m1 = class_moments(train, 1)
                m2 = class_moments(train, 2)
                sig1, sig2 = m1.sigma_hat, m2.sigma_hat
                delta = m2.mu_hat - m1.mu_hat
            else:
                stats = rank_statistics(train)
                sig1, sig2 = stats.sigma_tilde1, stats.sigma_tilde2
                delta = stats.mu2_hat
        except DegenerateVarianceError:
            skipped += 1
            continue
        ds = {}
        for c1 in C1S:
            cfg = FitConfig(lambda1=c1 * scale, lambda2=c1 * scale, solver=BENCH_SOLVER)
            t0 = time.time()
            try:
                d, rep1 = solve_graph_program(sig1, sig2, cfg)
                ds[c1] = d if rep1.converged else None
                tag = "ok" if rep1.converged else "noconv"
            except (InfeasibleError, NumericalBreakdownError) as e:
                ds[c1] = None
                tag = type(e).__name__
            print(f"  seed {rep} c1={c1}: graph {tag} {time.time()-t0:.1f}s", file=sys.stderr)
        bs = {}
        for c2 in C2S:
            cfg = FitConfig(lambda1=c2 * scale, lambda2=c2 * scale, solver=BENCH_SOLVER)
            try:
                b, rep2 = solve_direction_program(sig2, delta, cfg)
                bs[c2] = b if rep2.converged else None
            except (InfeasibleError, NumericalBreakdownError):
                bs[c2] = None
        for c1 in C1S:
            if ds[c1] is None:
                continue
            for c2 in C2S:
                if bs[c2] is None:
                    continue
                try:
                    if method == "sdar":
                        model = sdar_from_solutions(m1, m2, ds[c1], bs[c2], c1 * scale, c2 * scale)
                        got = classify_sdar(test.features, model)
                    else:
                        model = csdar_from_solutions(stats, ds[c1], bs[c2], c1 * scale, c2 * scale)
                        got = classify_csdar(test.features, model)
                except NumericalError:
                    continue
                table[c1][c2].append(float(np.mean(got != test.labels)))
    print(f"## {problem_name} {method}  ({time.time()-t_start:.0f}s, {skipped} degenerate seeds skipped)")
    for c1 in C1S:
        cells = []
        for c2 in C2S:
            errs = table[c1][c2]
            cells.append(f"c2={c2}: {np.mean(errs):.3f}/{len(errs)}" if errs else f"c2={c2}:   -  ")
        print(f"  c1={c1}: " + "   ".join(cells))
    sys.stdout.flush()


if __name__ == "__main__":
    run("model2", "sdar")
    run("model1", "sdar")
    run("model4", "csdar")
