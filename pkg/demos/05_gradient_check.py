"""
Checking the hand-written backward pass
=======================================

Central finite differences against the analytic gradient, on small random
networks with weights large enough that no parameter group is degenerate.
"""

from vidattn.verify import check_instance, group_errors, tiny_instance

worst = {}
for seed in range(20):
    inst = tiny_instance(seed)
    report = check_instance(inst, eps=1e-5, tol=1e-4)
    T, D = inst.features.shape
    print(f"seed {seed:2d}  T={T} D={D} H={inst.params.dims.hidden}  "
          f"max rel err {report.max_relative_error:.2e}  {'ok' if report.passed else 'FAIL'}")
    for g, e in group_errors(report).items():
        worst[g] = max(worst.get(g, 0.0), e)

print()
for g, e in worst.items():
    print(f"{g:18s} {e:.2e}")
