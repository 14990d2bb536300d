"""Small hand-written SVG charts, so the package needs no plotting library."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .coordinator import RestorationRun

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
W, H = 640, 380
ML, MR, MT, MB = 64, 120, 30, 48


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str, xr, yr):
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text x="{ML + (W - ML - MR) / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="14" y="{MT + (H - MT - MB) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {MT + (H - MT - MB) / 2})">{escape(ylabel)}</text>',
        ]
        self.legend = []

    def sx(self, x: float) -> float:
        return ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)

    def sy(self, y: float) -> float:
        return H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)

    def axes(self, xticks=None, xlabels=None):
        p = self.parts
        p.append(f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" fill="none" stroke="black"/>')
        for y in _ticks(self.y0, self.y1):
            if self.y0 <= y <= self.y1:
                yy = self.sy(y)
                p.append(f'<line x1="{ML}" x2="{W - MR}" y1="{yy:.1f}" y2="{yy:.1f}" stroke="#ddd"/>')
                p.append(f'<text x="{ML - 4}" y="{yy + 4:.1f}" text-anchor="end">{y:g}</text>')
        xs = xticks if xticks is not None else _ticks(self.x0, self.x1)
        for i, x in enumerate(xs):
            if self.x0 <= x <= self.x1:
                xx = self.sx(x)
                label = xlabels[i] if xlabels else f"{x:g}"
                p.append(f'<text x="{xx:.1f}" y="{H - MB + 16}" text-anchor="middle">{escape(str(label))}</text>')

    def polyline(self, xs, ys, color, label=None, dash=None, max_points=1200):
        xs, ys = list(xs), list(ys)
        if len(xs) > max_points:
            # thin the samples but keep the minimum so nadirs stay visible
            keep = set(range(0, len(xs), len(xs) // max_points + 1))
            keep |= {len(xs) - 1, min(range(len(ys)), key=ys.__getitem__)}
            xs, ys = zip(*[(xs[k], ys[k]) for k in sorted(keep)])
        pts = " ".join(f"{self.sx(x):.2f},{self.sy(y):.2f}" for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>')
        if label:
            self.legend.append((label, color))

    def hline(self, y, color="#888", label=None):
        if self.y0 <= y <= self.y1:
            yy = self.sy(y)
            self.parts.append(f'<line x1="{ML}" x2="{W - MR}" y1="{yy:.1f}" y2="{yy:.1f}" stroke="{color}" '
                              f'stroke-dasharray="6,4"/>')
            if label:
                self.legend.append((label, color))

    def rect(self, x, y, w, h, color):
        self.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{color}"/>')

    def svg(self) -> str:
        for i, (label, color) in enumerate(self.legend):
            y = MT + 10 + 18 * i
            self.parts.append(f'<rect x="{W - MR + 10}" y="{y - 8}" width="12" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{W - MR + 28}" y="{y + 1}">{escape(label)}</text>')
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _span(vals, pad=0.05):
    lo, hi = min(vals), max(vals)
    d = (hi - lo) or max(abs(hi), 1.0) * 0.01
    return lo - pad * d, hi + pad * d


def frequency_trace_svg(run: RestorationRun, stage: int, f_min: float | None = None) -> str:
    """Frequency of every microgrid after the load step of one stage."""
    s = next(x for x in run.stages if x.stage == stage)
    series = [(mg, tr) for mg, tr in s.traces.items() if tr is not None]
    f0 = run.config.sim_f0
    fs = [f0] + [float(v) for _, tr in series for v in tr.f]
    if f_min is not None:
        fs.append(f_min)
    t_end = max((float(tr.t[-1]) for _, tr in series), default=1.0)
    c = _Canvas(f"Frequency after stage {stage} load step", "time (s)", "frequency (Hz)", (0.0, t_end), _span(fs))
    c.axes()
    for i, (mg, tr) in enumerate(series):
        c.polyline(tr.t, tr.f, PALETTE[i % len(PALETTE)], mg)
    if f_min is not None:
        c.hline(f_min, "#000", f"limit {f_min:g} Hz")
    return c.svg()


def restored_load_svg(run: RestorationRun) -> str:
    """Cumulative restored load per stage, stacked by microgrid."""
    mgs = list(run.stages[0].restored_kw) if run.stages else []
    n = len(run.stages)
    top = max([run.total_load_kw] + [s.total_kw for s in run.stages]) * 1.05
    c = _Canvas("Restored load by stage", "stage", "restored load (kW)", (0.5, n + 0.5), (0.0, top or 1.0))
    c.axes(list(range(1, n + 1)))
    bw = (c.sx(1.0) - c.sx(0.0)) * 0.6
    for s in run.stages:
        base = 0.0
        for i, mg in enumerate(mgs):
            v = s.restored_kw[mg]
            y_top, y_bot = c.sy(base + v), c.sy(base)
            c.rect(c.sx(s.stage) - bw / 2, y_top, bw, y_bot - y_top, PALETTE[i % len(PALETTE)])
            base += v
    c.legend.extend((mg, PALETTE[i % len(PALETTE)]) for i, mg in enumerate(mgs))
    c.hline(run.total_load_kw, "#000", "total load")
    return c.svg()


def alpha_comparison_svg(runs: dict[float, RestorationRun], microgrid: str | None = None) -> str:
    """Worst nadir per stage for each alpha (or the nadir of one microgrid)."""
    series = {}
    for a, run in sorted(runs.items()):
        if microgrid is None:
            series[a] = [min(s.nadir_hz.values()) for s in run.stages]
        else:
            series[a] = run.nadirs(microgrid)
    n = max((len(v) for v in series.values()), default=1)
    vals = [f for v in series.values() for f in v] or [60.0]
    who = microgrid or "all microgrids"
    c = _Canvas(f"Frequency nadir per stage ({who})", "stage", "nadir (Hz)", (0.5, n + 0.5), _span(vals))
    c.axes(list(range(1, n + 1)))
    for i, (a, ys) in enumerate(series.items()):
        c.polyline(range(1, len(ys) + 1), ys, PALETTE[i % len(PALETTE)], f"alpha={a:g}")
    return c.svg()


def write_plots(run: RestorationRun, out_dir: str | Path, f_min: float | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "restored_load.svg"]
    paths[0].write_text(restored_load_svg(run), encoding="utf-8")
    for s in run.stages:
        if any(tr is not None for tr in s.traces.values()):
            p = out / f"frequency_stage{s.stage}.svg"
            p.write_text(frequency_trace_svg(run, s.stage, f_min), encoding="utf-8")
            paths.append(p)
    return paths
