#!/usr/bin/env python3
"""Condition numbers of Q Q^H for random versus optimized directions.

Draws i.i.d. complex Gaussian direction sets, evaluates both parameterizations
on the same draws, and writes a log-histogram figure plus a text summary.

    python3 scripts/random_direction_study.py --D 2 --K 4 --trials 10000 --out study
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from muchapro.core import MuchaproError
from muchapro.directions import condition_number, random_direction_study, random_draws, shipped_directions


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--D", type=int, default=2)
    ap.add_argument("--K", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="random_study")
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, len(args.K), figsize=(4 * len(args.K), 3.2), squeeze=False)
    lines = []
    for ax, K in zip(axes[0], args.K):
        draws = random_draws(args.D, K, args.trials, args.seed)
        for mode, color in (("hermitian", "tab:blue"), ("unconstrained", "tab:orange")):
            st = random_direction_study(args.D, K, mode, draws=draws)
            finite = st.conditions[np.isfinite(st.conditions)]
            ax.hist(np.log10(finite), bins=60, alpha=0.6, color=color, label=mode)
            lines.append(f"D={args.D} K={K} {mode:13s} min={st.minimum:.4f} median={st.median:.3f}")
        if K == args.D ** 2:
            for mode, ls in (("hermitian", "-"), ("unconstrained", "--")):
                try:
                    c = condition_number(shipped_directions(args.D, mode), mode)
                except MuchaproError:
                    continue
                ax.axvline(np.log10(c), color="k", ls=ls, lw=1)
                lines.append(f"D={args.D} K={K} {mode:13s} optimized={c:.4f}")
        ax.set_title(f"D={args.D}, K={K}")
        ax.set_xlabel("log10 cond(Q Q^H)")
    axes[0][0].legend()
    fig.tight_layout()
    fig.savefig(out / "histograms.png", dpi=120)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


if __name__ == "__main__":
    main()
