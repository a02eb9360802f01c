"""Walk through the diffusion backbone: schedule, corruption, exact denoising.

Builds the default variance-preserving schedule, corrupts a point cloud,
checks the closed-form noise prediction against finite differences, and runs
the full deterministic reverse chain on a single-Gaussian world to show it
reproduces the prior.  Figures land in demos/output/.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tdg import (
    AnalyticDenoiser,
    Condition,
    GaussianMixture,
    LatentState,
    analytic_noise_prediction,
    build_vp_schedule,
    forward_diffuse,
    reverse_step,
)
from tdg.mixture import condition_restrict, log_marginal_density

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# --- the schedule -----------------------------------------------------------
sched = build_vp_schedule(1000, 1e-4, 0.02)
print(f"schedule: T={sched.T}, abar_0={sched.alpha_bar[0]}, abar_T={sched.alpha_bar[-1]:.2e}")

fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(np.arange(sched.T + 1) / sched.T, sched.alpha_bar)
ax.set_xlabel("normalized time t/T")
ax.set_ylabel("signal ratio")
ax.set_title("variance-preserving schedule")
fig.tight_layout()
fig.savefig(OUT / "01_schedule.png", dpi=120)
print(f"wrote {OUT / '01_schedule.png'}")

# --- forward corruption -----------------------------------------------------
gen = np.random.default_rng(0)
x0 = gen.normal([1.5, -1.0], 0.3, size=(400, 2))
fig, axes = plt.subplots(1, 4, figsize=(12, 3), sharex=True, sharey=True)
for ax, t in zip(axes, (0, 300, 600, 1000)):
    eps = gen.standard_normal((400, 2))
    x_t = forward_diffuse(x0, t, eps, sched)
    ax.scatter(x_t[:, 0], x_t[:, 1], s=4, alpha=0.5)
    ax.set_title(f"t={t} (abar={sched.alpha_bar[t]:.3f})")
fig.tight_layout()
fig.savefig(OUT / "01_forward.png", dpi=120)
print(f"wrote {OUT / '01_forward.png'}")

# --- exact denoiser vs finite differences -----------------------------------
world = GaussianMixture(
    weights=[0.4, 0.6],
    means=[[-1.0, 0.5], [1.5, -0.7]],
    variances=[[0.8, 0.5], [0.4, 1.2]],
)
uncond = Condition("unconditional", [1.0, 1.0])
x = np.array([0.6, -0.2])
t = 400
analytic = analytic_noise_prediction(world, uncond, LatentState(x, t), sched)

restricted = condition_restrict(world, uncond)
grad = np.empty(2)
for i in range(2):
    h = 1e-5 * (1 + abs(x[i]))
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    grad[i] = (
        log_marginal_density(restricted, sched, t, xp)
        - log_marginal_density(restricted, sched, t, xm)
    ) / (2 * h)
fd = -np.sqrt(1 - sched.alpha_bar[t]) * grad
print(f"analytic eps: {analytic}")
print(f"finite-diff : {fd}")
print(f"relative err: {np.linalg.norm(analytic - fd) / np.linalg.norm(fd):.2e}")

# --- deterministic chain reproduces a Gaussian prior -------------------------
prior = GaussianMixture(weights=[1.0], means=[[0.4, -0.7]], variances=[[1.3, 1.3]])
denoiser = AnalyticDenoiser(prior, sched)
n = 2000
x = np.random.default_rng(1).standard_normal((n, 2))
for t in range(sched.T, 0, -1):
    x = reverse_step(LatentState(x, t), denoiser(x, None, t), sched).x
print(f"chain output mean {x.mean(axis=0)} (prior [0.4, -0.7])")
print(f"chain output var  {x.var(axis=0, ddof=1)} (prior [1.3, 1.3])")
