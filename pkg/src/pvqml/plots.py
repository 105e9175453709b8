"""Optional SVG charts; every chart's data is also written as CSV by the caller."""
from __future__ import annotations

import logging

log = logging.getLogger(__name__)


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        log.warning("matplotlib not installed; skipping SVG output")
        return None
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    return plt


def line_svg(path, x, series: dict, xlabel="", ylabel="", title=""):
    plt = _pyplot()
    if plt is None:
        return False
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, y in series.items():
        ax.plot(x, y, label=label)
    ax.set(xlabel=xlabel, ylabel=ylabel, title=title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return True


def bar_svg(path, labels, values, ylabel="", title=""):
    plt = _pyplot()
    if plt is None:
        return False
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar([str(v) for v in labels], values)
    ax.set(ylabel=ylabel, title=title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return True
