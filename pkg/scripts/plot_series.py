#!/usr/bin/env python3
"""
Plot probe series written by `film-growth simulate`.

    python scripts/plot_series.py runs/out --probes u_l2_sq dxw_sup4 --output runs/out/series.png
"""

import argparse
import sys
from pathlib import Path

import pandas as pd


def load_series(run_dir: Path) -> dict[str, pd.DataFrame]:
    """series_seed<k>.csv files of a run directory, keyed by file stem."""
    return {path.stem: pd.read_csv(path) for path in sorted(run_dir.glob("series_seed*.csv"))}


def plot_series(frames: dict[str, pd.DataFrame], probes: list[str], output: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(
        len(probes), 1, figsize=(8, 2.6 * len(probes)), sharex=True, squeeze=False
    )
    for ax, probe in zip(axes[:, 0], probes, strict=True):
        for name, frame in frames.items():
            if probe in frame:
                ax.plot(frame["t"], frame[probe], linewidth=0.8, label=name)
        ax.set_ylabel(probe)
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel("t")
    if len(frames) <= 8:
        axes[0, 0].legend(loc="best", fontsize=7)
    fig.tight_layout()
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, dpi=150)
    plt.close(fig)
    return output


def main() -> int:
    parser = argparse.ArgumentParser(description="Plot film-growth probe series")
    parser.add_argument("run_dir", type=Path, help="Output directory of a simulate run")
    parser.add_argument("--probes", nargs="+", default=["u_l2_sq", "dxu_l2_sq", "dxw_sup4"])
    parser.add_argument("--output", type=Path, help="PNG path (default: <run_dir>/series.png)")
    args = parser.parse_args()

    frames = load_series(args.run_dir)
    if not frames:
        print(f"❌ No series_seed*.csv files in {args.run_dir}")
        return 1
    output = plot_series(frames, args.probes, args.output or args.run_dir / "series.png")
    print(f"✅ Plot written: {output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
