"""One tied run, step by step: eta schedule, averaged fraction, divergence.

Runs a single seed through the tied sampler on the composition world and
plots the per-step diagnostics next to the two trajectories' endpoints.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tdg import TiedSamplerConfig, tied_sample, cfg_sample, make_composition_world
from tdg.experiments import default_experiment_schedule, default_experiment_tie

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

cw = make_composition_world()
sched = default_experiment_schedule()
tie = default_experiment_tie()
print(f"tie schedule: strict above tau={tie.t_max}, independent below tau={tie.t_min}, k={tie.k}")

seed = 3
cfg = TiedSamplerConfig(guidance_scale=3.5, steps=sched.T, tie=tie, seed=seed)
trace = []
x_ref, x_guide = tied_sample(
    cw.world, cw.cond_reference, cw.cond_guide, cfg, sched, on_step=trace.append
)
x_base = cfg_sample(cw.world, cw.cond_reference, cfg, sched)

print(f"tied reference sample : {x_ref}  in target region: {cw.in_target_region(x_ref)}")
print(f"tied guide sample     : {x_guide} (discarded downstream)")
print(f"independent baseline  : {x_base}  in target region: {cw.in_target_region(x_base)}")

taus = [d.tau for d in trace]
fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
axes[0].plot(taus, [d.eta for d in trace])
axes[0].set_xlabel("tau")
axes[0].set_ylabel("eta")
axes[0].set_title("tying fraction")
axes[0].invert_xaxis()
axes[1].plot(taus, [d.averaged_fraction for d in trace])
axes[1].set_xlabel("tau")
axes[1].set_ylabel("averaged fraction")
axes[1].set_title("elements averaged per step")
axes[1].invert_xaxis()
axes[2].plot(taus, [d.trajectory_l2 for d in trace])
axes[2].set_xlabel("tau")
axes[2].set_ylabel("|x_R - x_G|")
axes[2].set_title("trajectory divergence")
axes[2].invert_xaxis()
fig.tight_layout()
fig.savefig(OUT / "02_diagnostics.png", dpi=120)
print(f"wrote {OUT / '02_diagnostics.png'}")

# endpoint scatter over a few seeds
fig, ax = plt.subplots(figsize=(5, 5))
for mark, sampler, label in (
    ("o", lambda s: tied_sample(cw.world, cw.cond_reference, cw.cond_guide,
                                TiedSamplerConfig(3.5, sched.T, tie, s), sched)[0], "tied"),
    ("x", lambda s: cfg_sample(cw.world, cw.cond_reference,
                               TiedSamplerConfig(3.5, sched.T, tie, s), sched), "independent"),
):
    pts = np.array([sampler(s) for s in range(40)])
    ax.scatter(pts[:, 0], pts[:, 1], marker=mark, alpha=0.7, label=label)
for mean in cw.world.means:
    ax.scatter(*mean, marker="+", c="k", s=80)
ax.axhline(0, c="grey", lw=0.5)
ax.axvline(0, c="grey", lw=0.5)
ax.set_xlabel("class axis (reference < 0)")
ax.set_ylabel("attribute axis (target > 0)")
ax.legend()
ax.set_title("endpoints over 40 seeds")
fig.tight_layout()
fig.savefig(OUT / "02_endpoints.png", dpi=120)
print(f"wrote {OUT / '02_endpoints.png'}")
