"""Linear constraints satisfied by the ensemble carry over to the prediction.

If every realization matches a boundary profile exactly, so does the PhIK
prediction.  If realizations violate it by at most eps, the prediction's
violation is bounded by a computable quantity.  Both facts are checked here.

Run: python3 notebooks/04_constraint_bounds.py
"""
import numpy as np

from phik.experiments import bound_trial, exact_preservation_case, make_config

cfg = make_config("verify-bounds", {"grid": [21, 21], "M": 200})
exact = exact_preservation_case(cfg)
print(f"exact boundary match: passed={exact['passed']}  max violation={exact['max_violation']:.2e}")

corrupt = exact_preservation_case(make_config("verify-bounds", {"corrupt_realization": 3}))
print(f"one corrupted realization: {corrupt['error']}")

cfg = make_config("verify-bounds")
for n_levels in (1, 2, 3):
    reps = [bound_trial(n_levels, t, cfg) for t in range(100)]
    ratio = np.array([r.measured / r.bound for r in reps])
    print(f"{n_levels}-level: bound holds in {sum(r.holds for r in reps)}/100 trials, "
          f"measured/bound median {np.median(ratio):.3f}, max {ratio.max():.3f}")

r = bound_trial(2, 0, cfg)
print("\none two-level report:")
for key in ("norm_kind", "epsilon", "sigma_g", "bound", "measured", "level_coefficients"):
    print(f"  {key}: {getattr(r, key)}")
