"""Render the step-size and load-scaling sweeps as PNG figures.

Helper plotting surface only; the plotted numbers come from the tested
sweep code paths, the rendering itself is untested. Requires matplotlib.

Usage: python scripts/sweep_figures.py [--out DIR] [--samples N]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from capcred import (
    RngPolicy,
    load_system_spec,
    sample_batch,
    sweep_load_scale,
    sweep_step_size,
)

SYSTEMS = Path(__file__).resolve().parents[1] / "systems"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", type=Path, default=Path("figures"))
    parser.add_argument("--samples", type=int, default=50_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    system = load_system_spec(SYSTEMS / "toy3.json")
    batch = sample_batch(system, args.samples, RngPolicy(master_seed=args.seed), threads=4)

    deltas = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0]
    rows = sweep_step_size(system, batch, "c1", deltas,
                           methods=("mri_fd", "elcc_bisection", "elcc_secant"))
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in ("mri_fd", "elcc_bisection", "elcc_secant"):
        pts = [(r["delta_mw"], r["alpha"]) for r in rows if r["method"] == method]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("perturbation step (MW)")
    ax.set_ylabel("accreditation factor")
    ax.axhline(0.9, color="gray", lw=0.8, ls="--")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out / "step_size_sweep.png", dpi=150)
    print(f"wrote {args.out / 'step_size_sweep.png'}")

    multipliers = [0.95, 0.975, 1.0, 1.025, 1.05]
    rows = sweep_load_scale(system, batch, multipliers, "c1", method="mri_ipa")
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r["multiplier"] for r in rows if r["alpha"] != ""]
    ys = [r["alpha"] for r in rows if r["alpha"] != ""]
    ax.plot(xs, ys, marker="s")
    ax.set_xlabel("load multiplier")
    ax.set_ylabel("accreditation factor")
    fig.tight_layout()
    fig.savefig(args.out / "load_scale_sweep.png", dpi=150)
    print(f"wrote {args.out / 'load_scale_sweep.png'}")


if __name__ == "__main__":
    main()
