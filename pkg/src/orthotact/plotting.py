"""Report figures written to files next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

REPORT_PARAMS = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.0,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}

PALETTE = ["#0C5DA5", "#00A08A", "#F2AD00", "#F98400", "#5BBCD6", "#B40F20"]


def figure_path(data_path, suffix: str = ".png") -> Path:
    return Path(data_path).with_suffix(suffix)


def _finish(fig, ax_list, path) -> Path:
    for ax in ax_list:
        for spine in ("top", "right"):
            ax.spines[spine].set_visible(False)
        ax.grid(alpha=0.25, linewidth=0.5, linestyle="--")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_trace(trace, path, frames=None, max_points: int = 200_000) -> Path:
    """Bus voltage against time, with decoded frame spans shaded."""
    with plt.rc_context(REPORT_PARAMS):
        fig, ax = plt.subplots(figsize=(7.0, 2.6))
        stride = max(1, len(trace) // max_points)
        t = trace.times()[::stride] * 1e3
        ax.plot(t, trace.samples[::stride] * 1e3, color=PALETTE[0], drawstyle="steps-post")
        for f in frames or []:
            ax.axvspan(f.t_start * 1e3, f.t_end * 1e3, color=PALETTE[2], alpha=0.15, linewidth=0)
        ax.set_xlabel("time (ms)")
        ax.set_ylabel("bus voltage (mV)")
        return _finish(fig, [ax], path)


def plot_pressure(frame, path, title: str = "reconstructed pressure") -> Path:
    with plt.rc_context(REPORT_PARAMS):
        fig, ax = plt.subplots(figsize=(3.6, 3.0))
        im = ax.imshow(frame.values, cmap="viridis", origin="upper")
        for (r, c), v in np.ndenumerate(frame.values):
            ax.text(c, r, f"{v:.0f}", ha="center", va="center", fontsize=7, color="w")
        ax.set_xticks(range(frame.cols))
        ax.set_yticks(range(frame.rows))
        ax.set_title(title)
        fig.colorbar(im, ax=ax, label="kPa")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        return Path(path)


def plot_scaling(rows: list[dict], path) -> Path:
    """Chip time and frame/period length against node count (log x)."""
    n = np.array([r["n_nodes"] for r in rows], dtype=float)
    with plt.rc_context(REPORT_PARAMS):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        ax1.loglog(n, [r["T_seconds"] * 1e6 for r in rows], "o-", color=PALETTE[0])
        ax1.set_xlabel("nodes")
        ax1.set_ylabel("chip time T (µs)")
        ax2.semilogx(n, [r["frame_ms"] for r in rows], "o-", color=PALETTE[1], label="frame")
        ax2.semilogx(n, [r["period_ms"] for r in rows], "s--", color=PALETTE[3], label="period")
        ax2.axhline(20.0, color="0.5", linewidth=0.6, linestyle=":")
        ax2.set_ylim(0, 22)
        ax2.set_xlabel("nodes")
        ax2.set_ylabel("ms")
        ax2.legend(frameon=False)
        bad = [r for r in rows if r["decode_ok_rate"] < 1]
        for r in bad:
            ax2.annotate("decode<100%", (r["n_nodes"], r["frame_ms"]), fontsize=7, color=PALETTE[5])
        return _finish(fig, [ax1, ax2], path)


def plot_ber(rows: list[dict], path) -> Path:
    """Bit-error rate against noise level, one line per (jitter, ADC bits) pair."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["jitter_frac"], r["channel_adc_bits"]), []).append(r)
    with plt.rc_context(REPORT_PARAMS):
        fig, ax = plt.subplots(figsize=(4.6, 3.0))
        for i, ((jit, bits), rs) in enumerate(sorted(groups.items(), key=lambda kv: str(kv[0]))):
            rs = sorted(rs, key=lambda r: r["noise_level"])
            x = [r["noise_level"] * 1e3 for r in rs]
            # zero BER cannot sit on a log axis; draw it at half of one error
            floor = 0.5 / max(1, max(r["bits"] for r in rs))
            y = [max(r["bit_error_rate"], floor) for r in rs]
            label = f"jitter {jit:g}, adc {bits if bits != '' else 'ideal'}"
            ax.semilogy(x, y, "o-", color=PALETTE[i % len(PALETTE)], label=label)
        ax.set_xlabel("noise level (mV)")
        ax.set_ylabel("bit error rate")
        ax.legend(frameon=False)
        return _finish(fig, [ax], path)
