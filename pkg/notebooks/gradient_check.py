"""
Checking gradients against finite differences
=============================================

Every parameter of a small PAN and HPAN model is perturbed in turn and the
central-difference slope of the loss is compared with the tape gradient.
"""

# %%
from pannet.gradcheck import check_model, default_config

for variant in ("PAN", "HPAN"):
    report, groups = check_model(default_config(variant))
    print(f"{variant}: {'PASS' if report.passed else 'FAIL'}, worst {report.worst:.2e}")
    for group, err in sorted(groups.items()):
        print(f"  {group:<14s} {err:.2e}")

# %%
# A tolerance far below finite-difference accuracy must fail: the check is
# only meaningful if it can.
report, _ = check_model(default_config("HPAN"), tol=1e-12)
print("tol 1e-12 passes?", report.passed)
