"""Latent-space analyses: progress map, linear dynamics, clusters.

These tools operate on points in the code space, independent of how the
points were produced. The demo uses synthetic latent traces so it runs
instantly; in practice the points come from encoding student programs.
"""

import numpy as np

from treevec import (Trace, detect_outliers, dynsys_step, embed, fit_dynsys,
                     fit_gmm, fit_projection, gmm_assign, gmm_logdensity,
                     project, simulate, stability_check)

rng = np.random.default_rng(3)
n = 16

# --- progress/variance map -------------------------------------------------
# traces drift from a shared empty-program code x0 toward the solution x*
x0 = rng.normal(size=n)
x_star = rng.normal(size=n)
traces = []
for _ in range(20):
    # every step closes about half the remaining gap to the solution
    x = x0 + 0.3 * rng.normal(size=n)
    pts = [x]
    for _ in range(5):
        x = x + 0.5 * (x_star - x) + 0.02 * rng.normal(size=n)
        pts.append(x)
    traces.append(Trace("s", "t", np.asarray(pts)))
points = np.vstack([tr.points for tr in traces])

pm = fit_projection(points, x0, x_star)
print("progress map anchors: start ->", np.round(project(pm, x0), 6),
      " solution ->", np.round(project(pm, x_star), 6))
mid = embed(pm, np.array([0.5, 0.0]))
print("halfway point embeds back to progress", round(project(pm, mid)[0], 3))

# --- linear dynamical system -------------------------------------------------
ds = fit_dynsys(traces, x_star.reshape(1, -1), reg=1e-5)
report = stability_check(ds)[0]
print(f"\nfitted dynamics: op norm of I - W = {report['op_norm']:.3f}, "
      f"contraction sufficient: {report['sufficient']}")
path = simulate(ds, x0, tol=1e-6, max_iters=500)
print(f"simulating from the empty program reaches the solution in "
      f"{len(path) - 1} steps (final distance "
      f"{np.linalg.norm(path[-1] - x_star):.2e})")
print("one predicted step from x0 moves",
      round(float(np.linalg.norm(dynsys_step(ds, x0) - x0)), 3), "units")

# --- clustering and outliers -------------------------------------------------
# fit a mixture density to two well-separated groups in a 2-D slice of
# the code space, then score a new batch that contains two stray points
blob_a = rng.normal(size=(60, 2))
blob_b = rng.normal(size=(60, 2)) + np.array([10.0, 0.0])
cohort = np.vstack([blob_a, blob_b])
gmm = fit_gmm(cohort, k=2, seed=3)
labels = gmm_assign(gmm, cohort)
print(f"\nGMM found clusters of sizes {np.bincount(labels).tolist()}")

batch = np.vstack([rng.normal(size=(10, 2)),                       # group one
                   rng.normal(size=(10, 2)) + [10.0, 0.0],         # group two
                   [[5.0, 9.0], [5.0, -9.0]]])                     # strays
flagged = detect_outliers(gmm_logdensity(gmm, batch))
print("low-density points in the new batch flagged as outliers:", flagged)
