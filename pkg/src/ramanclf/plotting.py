"""Figures: a dependency-free SVG line chart and matplotlib report PNGs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")


@dataclass(frozen=True)
class PlotSeries:
    label: str
    x: tuple
    y: tuple
    y_err: tuple | None = None

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        if len(x) != len(y):
            raise ValueError(f"series {self.label!r}: x has {len(x)} points, y has {len(y)}")
        if len(x) == 0:
            raise ValueError(f"series {self.label!r} is empty")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.y_err is not None:
            e = tuple(float(v) for v in self.y_err)
            if len(e) != len(x):
                raise ValueError(f"series {self.label!r}: y_err length differs from x")
            if any(v < 0 for v in e):
                raise ValueError(f"series {self.label!r}: negative error bar")
            object.__setattr__(self, "y_err", e)


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _num(v):
    return f"{v:.2f}"


def _label(v):
    return f"{v:g}"


def emit_svg(series, xlabel: str = "", ylabel: str = "", title: str = "",
             width: int = 640, height: int = 420) -> str:
    """Standalone SVG with one <path> per series and one error-bar <line>
    per point that carries a y_err. Output depends only on the input."""
    series = list(series)
    if not series:
        raise ValueError("emit_svg needs at least one series")
    xs = [v for s in series for v in s.x if math.isfinite(v)]
    ys = []
    for s in series:
        for i, v in enumerate(s.y):
            if math.isfinite(v):
                e = s.y_err[i] if s.y_err else 0.0
                ys += [v - e, v + e]
    if not xs or not ys:
        raise ValueError("no finite points to plot")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = 70, 150, 40, 60
    pw, ph = width - left - right, height - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.2f}" y="{top - 14}" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    for t in _ticks(x0, x1):
        X = px(t)
        out.append(f'<line class="tick" x1="{_num(X)}" y1="{top + ph}" x2="{_num(X)}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(X)}" y="{top + ph + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in _ticks(y0, y1):
        Y = py(t)
        out.append(f'<line class="tick" x1="{left - 5}" y1="{_num(Y)}" x2="{left}" y2="{_num(Y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_num(Y + 4)}" text-anchor="end">{_label(t)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        cy = top + ph / 2
        out.append(f'<text x="18" y="{cy:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 18 {cy:.2f})">{escape(ylabel)}</text>')
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = [(px(x), py(y)) for x, y in zip(s.x, s.y) if math.isfinite(x) and math.isfinite(y)]
        d = " ".join(("M" if i == 0 else "L") + f"{_num(a)},{_num(b)}" for i, (a, b) in enumerate(pts))
        out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5">'
                   f'<title>{escape(s.label)}</title></path>')
        for a, b in pts:
            out.append(f'<circle cx="{_num(a)}" cy="{_num(b)}" r="2.5" fill="{color}"/>')
        if s.y_err is not None:
            for x, y, e in zip(s.x, s.y, s.y_err):
                if not (math.isfinite(x) and math.isfinite(y)):
                    continue
                X = _num(px(x))
                out.append(f'<line class="errbar" x1="{X}" y1="{_num(py(y - e))}" x2="{X}" '
                           f'y2="{_num(py(y + e))}" stroke="{color}"/>')
        ly = top + 10 + 18 * k
        out.append(f'<rect x="{left + pw + 12}" y="{ly - 5}" width="14" height="3" fill="{color}"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sweep_series(rows) -> list[PlotSeries]:
    """One series per model from sweep.csv rows (model, level, mean, std)."""
    by_model: dict = {}
    for r in rows:
        by_model.setdefault(r["model"], []).append(r)
    out = []
    for m, rs in by_model.items():
        rs = sorted(rs, key=lambda r: r["level"])
        err = [0.0 if math.isnan(r["std"]) else r["std"] for r in rs]
        out.append(PlotSeries(m, [100 * r["level"] for r in rs], [r["mean"] for r in rs], err))
    return out


# -- matplotlib report figures ------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    # fixed metadata keeps repeated renders byte-comparable
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})


def plot_sweep_png(rows, path, title="Test accuracy vs noise") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for s in sweep_series(rows):
        ax.errorbar(s.x, s.y, yerr=s.y_err, marker="o", ms=3, capsize=3, label=s.label)
    ax.set_xlabel("noise level (%)")
    ax.set_ylabel("test accuracy")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)
    plt.close(fig)


def plot_stability_png(result, path, edges=None) -> None:
    """One pie of accuracy bins per model."""
    from .harness import STABILITY_BINS

    edges = STABILITY_BINS if edges is None else edges
    plt = _pyplot()
    models = list(result.models)
    fig, axes = plt.subplots(1, len(models), figsize=(3.2 * len(models), 3.4), squeeze=False)
    labels = [f"[{lo:g}, {hi:g}{']' if i == len(edges) - 2 else ')'}" for i, (lo, hi) in
              enumerate(zip(edges[:-1], edges[1:]))]
    for ax, m in zip(axes[0], models):
        counts = result.histogram(m, edges)
        keep = counts > 0
        ax.pie(counts[keep], labels=[l for l, k in zip(labels, keep) if k], autopct="%1.0f%%",
               startangle=90, counterclock=False)
        ax.set_title(f"{m} (n={int(counts.sum())})")
    _save(fig, path)
    plt.close(fig)


def plot_confusion_png(confusion, class_names, path, title="") -> None:
    plt = _pyplot()
    cm = np.asarray(confusion)
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    im = ax.imshow(cm, cmap="Blues")
    k = len(cm)
    ax.set_xticks(range(k), class_names, rotation=45, ha="right")
    ax.set_yticks(range(k), class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(k):
        for j in range(k):
            ax.text(j, i, int(cm[i, j]), ha="center", va="center",
                    color="white" if cm[i, j] > cm.max() / 2 else "black")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    _save(fig, path)
    plt.close(fig)


def plot_history_png(history, path, title="") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ep = np.arange(1, len(history.train_loss) + 1)
    ax.plot(ep, history.train_loss, label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path)
    plt.close(fig)


def plot_pca_png(scores, labels, class_names, ratios, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    for c, name in enumerate(class_names):
        sel = labels == c
        ax.scatter(scores[sel, 0], scores[sel, 1], s=6, label=name)
    ax.set_xlabel(f"PC1 ({100 * ratios[0]:.1f}%)")
    ax.set_ylabel(f"PC2 ({100 * ratios[1]:.1f}%)" if len(ratios) > 1 else "PC2")
    ax.legend(fontsize=8, markerscale=2)
    _save(fig, path)
    plt.close(fig)


def write_text(path, text) -> None:
    Path(path).write_text(text)
