"""Growth constants of a normal-dependent right-hand side.

f = 0.5 + 0.1 (nu^0)^2 grows quadratically with the tilt of the normal,
so its normal derivative is unbounded.  Composing with the cut-off normal
theta(v~)/v~ nu caps the growth at a level set by k.

    python demos/03_growth_audit_and_cutoff.py
"""

import numpy as np

from scalarflow.ambient import make_metric
from scalarflow.prescribe import AuditSpec, CutoffConfig, cutoff_theta, growth_audit, make_f

metric = make_metric("exp-warp", 2)
f = make_f("normal-tilt", base=0.5, eps=0.1)
spec = AuditSpec(x0_range=(0.0, 2.0))

t = np.array([0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 10.0])
print("theta(t) with k = 2:", np.round(cutoff_theta(t, CutoffConfig(2.0)), 4))

print(f"\n{'k':>5} {'c1':>8} {'c2':>8} {'c3':>8} {'c3 (bounded)':>13} "
      f"{'cut-off':>8}  holds raw / cut")
for k in (1.5, 2.0, 4.0, 8.0):
    rep = growth_audit(f, metric, spec, CutoffConfig(k))
    print(f"{k:5.1f} {rep['c1']:8.3f} {rep['c2']:8.3f} {rep['c3']:8.3f} {rep['c3_strong']:13.3f} "
          f"{rep['c3_strong_cutoff']:8.3f}  {rep.strong_bound_raw} / {rep.strong_bound_cutoff}")
