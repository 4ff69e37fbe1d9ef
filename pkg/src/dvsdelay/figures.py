"""Per-cell SVG figure: interval histogram (blue) with IG fit (red dashed)."""

from __future__ import annotations

import io
import os

import numpy as np

from dvsdelay.analysis import IGFit, TriggerTimeHistogram


def histogram_svg(
    hist: TriggerTimeHistogram,
    fit: IGFit | None = None,
    gap_length: float | None = None,
    quantile: float = 0.98,
) -> str:
    """Render one cell. The x range stops at the ``quantile`` of the counts."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts = np.asarray(hist.counts, dtype=float)
    edges = hist.edges()
    cum = np.cumsum(counts) / counts.sum()
    last = int(np.searchsorted(cum, quantile)) + 2
    last = min(max(last, 10), len(counts))
    x_ms = edges[: last + 1] * 1e3

    with matplotlib.rc_context({"svg.hashsalt": "dvsdelay", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(3.2, 2.4))
        ax.stairs(counts[:last], x_ms, color="tab:blue", linewidth=1.0)
        if fit is not None and np.isfinite(fit.shape):
            xs = np.linspace(edges[0], edges[last], 400)
            ax.plot(xs * 1e3, fit.n * hist.bin_width * fit.pdf(xs), "r--", linewidth=1.0)
        if gap_length:
            ax.axvline(gap_length * 1e3, color="0.5", linewidth=0.6, linestyle=":")
        title = []
        if hist.mu_bin is not None:
            title.append(f"mu={hist.mu_bin:g}")
        if hist.l_bin is not None:
            title.append(f"L={hist.l_bin:g}")
        ax.set_title(", ".join(title), fontsize=8)
        ax.set_xlabel("event triggering time (ms)", fontsize=7)
        ax.set_ylabel("count", fontsize=7)
        ax.tick_params(labelsize=6)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def figure_name(mu: float, l: float) -> str:
    return f"cell_mu{mu:g}_L{l:g}.svg"


def write_histogram_svg(path: str | os.PathLike, *args, **kwargs) -> None:
    from dvsdelay.io import atomic_write

    atomic_write(path, histogram_svg(*args, **kwargs))
