"""Reconstructing the modified Branin field from eight observations.

Ordinary Kriging only sees the data; PhIK borrows its mean and covariance
from 1000 realizations of a randomized Branin model.  The second half
shows how a relative nugget changes the picture.

Run: python3 notebooks/01_branin_reconstruction.py
"""
from phik.experiments import make_config, run_reconstruct

print("seed  phik     kriging")
for seed in range(1, 6):
    cfg = make_config("reconstruct", {"seed": seed, "methods": ["phik", "kriging"]})
    res = {r["method"]: r["rel_error"] for r in run_reconstruct(cfg, write=False)["results"]}
    print(f"{seed:>4}  {res['phik']:.4f}   {res['kriging']:.4f}")

# The randomized model is offset from the true field, so the answer depends
# strongly on where the eight points land.  A nugget proportional to the
# mean prior variance smooths the fit at the price of exact interpolation.
print("\nPhIK with a relative nugget (alpha = f * mean variance)")
print("f        " + "  ".join(f"seed{s}" for s in range(1, 6)))
for f in (0.0, 1e-2, 3e-2, 1e-1):
    errs = []
    for seed in range(1, 6):
        cfg = make_config("reconstruct", {"seed": seed, "methods": ["phik"],
                                          "alpha": {"relative": f} if f else "auto"})
        errs.append(run_reconstruct(cfg, write=False)["results"][0]["rel_error"])
    print(f"{f:<8g} " + "  ".join(f"{e:.3f}" for e in errs))
