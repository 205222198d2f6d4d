"""
Auditing the gradient engine
============================

Runs the central-finite-difference audit over every differentiable
building block, from single layers up to the composite three-score
adversarial value, and prints the worst relative error of each.

The command line equivalent is:
    qsumm gradcheck --seed 0
"""

from qsumm.gradcheck import SUITE_TOLERANCE, component_suite

errors = component_suite(seed=0)
worst = max(errors.values())

for name, err in errors.items():
    flag = "ok" if err < SUITE_TOLERANCE else "FAIL"
    print(f"{name:20s} {err:12.4e}  {flag}")

print(f"\nworst {worst:.4e} against tolerance {SUITE_TOLERANCE:.0e}")
