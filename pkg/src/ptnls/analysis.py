"""Conserved-density timeseries and drift scans over trajectories.

Q(t) is the trapezoid integral of a cataloged density along a solver
trajectory, with x-derivatives taken spectrally and t-derivatives
substituted from the evolution system.  The drift of Q over a run,
normalized by max(|Q(0)|, 1e-12), is scanned over a grid of eps values;
because every cataloged euler residual carries a factor eps, the drift
should scale linearly, and the scan fits that exponent.  The eps = 0 run
sets the numerical noise floor: only members at least 10x above it enter
the fit, and at least four must qualify for the slope to be reported.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .catalog import CaseId, Kind, load_catalog
from .jetexpr import Expr, JetBatch, eval_expr
from .solver import (BlowUpError, BoundaryContaminationError, Gaussian, Grid,
                     SolverConfig, Trajectory, _case_arrays, integrate,
                     jet_values, run)

__all__ = [
    "DensityTimeseries", "DriftMember", "DriftReport",
    "density_timeseries", "drift_from_timeseries", "drift_scan",
    "default_scan_config", "fit_loglog_slope", "emit_report",
    "write_drift_csv", "write_slope_csv", "write_timeseries_csv",
    "DRIFT_CSV_HEADER", "SLOPE_CSV_HEADER",
]

DRIFT_CSV_HEADER = "case,kind,eps,mu,sigma,alpha,g,N,L,dt,T_final,Q0,drift_abs,drift_rel"
SLOPE_CSV_HEADER = "case,kind,slope,intercept,fit_residual,floor"
TIMESERIES_CSV_HEADER = "case,kind,form,eps,t,Q"

DRIFT_FLOOR_FACTOR = 10.0
MIN_FIT_MEMBERS = 4


@dataclass
class DensityTimeseries:
    case_id: CaseId
    kind: Kind
    form: str  # "Tt" or "PhiT"
    eps: float
    times: np.ndarray
    values: np.ndarray


def _density_expr(case_id: CaseId, kind: Kind, form: str) -> Expr:
    cv = load_catalog().conserved_vector(case_id, kind)
    if cv is None:
        raise ValueError(f"no conserved density cataloged for {case_id.value}/{kind.value}")
    e = cv.Tt if form == "Tt" else cv.complex_density if form == "PhiT" else None
    if e is None:
        raise ValueError(f"form must be 'Tt' or 'PhiT' and be cataloged; "
                         f"got {form!r} for {case_id.value}/{kind.value}")
    return e


def density_timeseries(traj: Trajectory, case_id: CaseId, kind: Kind,
                       form: str = "Tt") -> DensityTimeseries:
    """Q(t_k) = dx * sum_j density(t_k, x_j, jets) along the trajectory."""
    cfg = traj.cfg
    if case_id is not cfg.case_id:
        raise ValueError(f"trajectory was integrated for {cfg.case_id.value}, "
                         f"not {case_id.value}")
    e = _density_expr(case_id, kind, form)
    arrays = _case_arrays(case_id, cfg.params, cfg.grid)
    grid = cfg.grid
    values = np.empty(len(traj.snapshots))
    for i, state in enumerate(traj.snapshots):
        jets = jet_values(state, cfg, arrays)
        batch = JetBatch(np.full(grid.N, state.t), grid.x, 2, jets)
        dens = np.asarray(eval_expr(e, batch, cfg.params), dtype=float)
        values[i] = integrate(grid, np.broadcast_to(dens, (grid.N,)))
    return DensityTimeseries(case_id, kind, form, cfg.params.eps,
                             traj.times, values)


def drift_from_timeseries(ts: DensityTimeseries) -> tuple[float, float]:
    """(absolute, relative) drift: max_t |Q(t) - Q(0)|, normalized by
    max(|Q(0)|, 1e-12)."""
    q0 = float(ts.values[0])
    drift_abs = float(np.max(np.abs(ts.values - q0)))
    return drift_abs, drift_abs / max(abs(q0), 1e-12)


@dataclass
class DriftMember:
    eps: float
    Q0: float = math.nan
    drift_abs: float = math.nan
    drift_rel: float = math.nan
    failed: bool = False
    error: str = ""


@dataclass
class DriftReport:
    case_id: CaseId
    kind: Kind
    form: str
    cfg: SolverConfig
    members: tuple[DriftMember, ...]  # eps = 0 floor first, then ascending eps
    floor: float
    slope: Optional[float]
    intercept: Optional[float]
    fit_residual: Optional[float]
    slope_valid: bool
    fit_members: int

    def drop_one_slopes(self) -> list[float]:
        """Fitted slope with each qualifying member removed in turn (fit
        stability diagnostic)."""
        fit = _qualifying(self.members, self.floor)
        out = []
        for i in range(len(fit)):
            rest = fit[:i] + fit[i + 1:]
            if len(rest) >= 2:
                s, _, _ = fit_loglog_slope([m.eps for m in rest],
                                           [m.drift_rel for m in rest])
                out.append(s)
        return out


def default_scan_config(case_id: CaseId) -> SolverConfig:
    """Initial data for scans: an off-center Gaussian.  Centering it would
    start the scan at a symmetry point where the first-order drift integral
    vanishes for the odd gain profiles, hiding the linear scaling."""
    return SolverConfig(case_id=case_id, initial=Gaussian(1.0, 1.0, 0.5))


def _run_member(args) -> DriftMember:
    cfg, case_id, kind, form, sample_every = args
    eps = cfg.params.eps
    try:
        traj = run(cfg, sample_every=sample_every)
        ts = density_timeseries(traj, case_id, kind, form)
        drift_abs, drift_rel = drift_from_timeseries(ts)
        return DriftMember(eps, float(ts.values[0]), drift_abs, drift_rel)
    except (BlowUpError, BoundaryContaminationError, FloatingPointError) as exc:
        return DriftMember(eps, failed=True, error=str(exc))


def _qualifying(members: Sequence[DriftMember], floor: float) -> list[DriftMember]:
    return [m for m in members
            if not m.failed and m.eps > 0
            and m.drift_rel >= DRIFT_FLOOR_FACTOR * max(floor, 1e-300)
            and m.drift_rel > 0]


def drift_scan(case_id: CaseId, kind: Kind, eps_list: Sequence[float],
               cfg: Optional[SolverConfig] = None, form: str = "Tt",
               sample_every: int = 50, jobs: int = 1) -> DriftReport:
    """Run the solver at eps = 0 and at each eps in eps_list, then fit
    log(drift) against log(eps) over the members above the noise floor."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < MIN_FIT_MEMBERS:
        raise ValueError(f"need at least {MIN_FIT_MEMBERS} eps values")
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive (the eps = 0 floor runs implicitly)")
    if sorted(eps_list) != eps_list:
        raise ValueError("eps values must be sorted ascending")
    if cfg is None:
        cfg = default_scan_config(case_id)
    if cfg.case_id is not case_id:
        raise ValueError("cfg.case_id does not match the scanned case")

    tasks = [(replace(cfg, params=cfg.params.replace(eps=e)), case_id, kind,
              form, sample_every) for e in [0.0] + eps_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(_run_member, tasks))
    else:
        members = [_run_member(t) for t in tasks]

    floor_member = members[0]
    if floor_member.failed:
        raise BlowUpError(0.0) if "blew up" in floor_member.error else RuntimeError(
            f"eps = 0 floor run failed: {floor_member.error}")
    floor = floor_member.drift_rel

    fit = _qualifying(members, floor)
    slope = intercept = residual = None
    slope_valid = len(fit) >= MIN_FIT_MEMBERS
    if slope_valid:
        slope, intercept, residual = fit_loglog_slope(
            [m.eps for m in fit], [m.drift_rel for m in fit])
    return DriftReport(case_id, kind, form, cfg, tuple(members), floor,
                       slope, intercept, residual, slope_valid, len(fit))


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least squares of log(y) on log(x); returns (slope, intercept, rms
    residual).  Rejects non-positive data and fewer than two points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit requires strictly positive data")
    lx, ly = np.log(xs), np.log(ys)
    coeffs, res = np.polyfit(lx, ly, 1, full=True)[:2]
    rms = float(np.sqrt(res[0] / xs.size)) if len(res) else 0.0
    return float(coeffs[0]), float(coeffs[1]), rms


# ---------------------------------------------------------------------------
# report emission


def _g(value: float) -> str:
    return format(float(value), ".17g")


def _config_lines(cfg: SolverConfig, extra: Sequence[str] = ()) -> list[str]:
    p = cfg.params
    return [
        f"version={__version__}",
        f"case={cfg.case_id.value}",
        f"eps={_g(p.eps)} mu={_g(p.mu)} sigma={_g(p.sigma)} alpha={_g(p.alpha)} g={_g(p.g)}",
        f"N={cfg.grid.N} L={_g(cfg.grid.L)} dt={_g(cfg.dt)} T_final={_g(cfg.T_final)}",
        f"initial={cfg.initial!r}",
        *extra,
    ]


def write_drift_csv(reports: Sequence[DriftReport], path,
                    header_lines: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        for rep in reports:
            for line in _config_lines(rep.cfg):
                fh.write(f"# {line}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(DRIFT_CSV_HEADER + "\n")
        for rep in reports:
            p = rep.cfg.params
            for m in rep.members:
                if m.failed:
                    continue
                fh.write(",".join([
                    rep.case_id.value, rep.kind.value, _g(m.eps), _g(p.mu),
                    _g(p.sigma), _g(p.alpha), _g(p.g), str(rep.cfg.grid.N),
                    _g(rep.cfg.grid.L), _g(rep.cfg.dt), _g(rep.cfg.T_final),
                    _g(m.Q0), _g(m.drift_abs), _g(m.drift_rel)]) + "\n")


def write_slope_csv(reports: Sequence[DriftReport], path,
                    header_lines: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        for rep in reports:
            for line in _config_lines(rep.cfg):
                fh.write(f"# {line}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(SLOPE_CSV_HEADER + "\n")
        for rep in reports:
            if rep.slope_valid:
                row = [rep.case_id.value, rep.kind.value, _g(rep.slope),
                       _g(rep.intercept), _g(rep.fit_residual), _g(rep.floor)]
            else:
                row = [rep.case_id.value, rep.kind.value, "nan", "nan", "nan",
                       _g(rep.floor)]
            fh.write(",".join(row) + "\n")


def write_timeseries_csv(series: Sequence[DensityTimeseries], path,
                         header_lines: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(TIMESERIES_CSV_HEADER + "\n")
        for ts in series:
            for t, q in zip(ts.times, ts.values):
                fh.write(",".join([ts.case_id.value, ts.kind.value, ts.form,
                                   _g(ts.eps), _g(t), _g(q)]) + "\n")


# SVG emission: hand-rolled line charts, 800x500, config embedded as metadata.

_SVG_W, _SVG_H = 800, 500
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 80, 30, 40, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#17becf")


def _svg_open(title: str, meta_lines: Sequence[str]) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f"<metadata>{escape(chr(10).join(meta_lines))}</metadata>",
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{escape(title)}</text>',
    ]


class _Axes:
    """Linear mapping from data coordinates (already logged if need be) to
    the pixel frame, plus tick drawing."""

    def __init__(self, x0, x1, y0, y1):
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y0 + 0.5
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1

    def px(self, x: float) -> float:
        f = (x - self.x0) / (self.x1 - self.x0)
        return _MARGIN_L + f * (_SVG_W - _MARGIN_L - _MARGIN_R)

    def py(self, y: float) -> float:
        f = (y - self.y0) / (self.y1 - self.y0)
        return _SVG_H - _MARGIN_B - f * (_SVG_H - _MARGIN_T - _MARGIN_B)

    def frame(self, xlabel: str, ylabel: str) -> list[str]:
        left, right = _MARGIN_L, _SVG_W - _MARGIN_R
        top, bottom = _MARGIN_T, _SVG_H - _MARGIN_B
        return [
            f'<rect x="{left}" y="{top}" width="{right - left}" '
            f'height="{bottom - top}" fill="none" stroke="black"/>',
            f'<text x="{(left + right) / 2}" y="{_SVG_H - 15}" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif">{escape(xlabel)}</text>',
            f'<text x="20" y="{(top + bottom) / 2}" text-anchor="middle" font-size="13" '
            f'font-family="sans-serif" transform="rotate(-90 20 {(top + bottom) / 2})">'
            f"{escape(ylabel)}</text>",
        ]

    def xticks(self, ticks, labels) -> list[str]:
        out = []
        for t, lab in zip(ticks, labels):
            x = self.px(t)
            y = _SVG_H - _MARGIN_B
            out.append(f'<line x1="{x:.1f}" y1="{y}" x2="{x:.1f}" y2="{y + 5}" stroke="black"/>')
            out.append(f'<text x="{x:.1f}" y="{y + 20}" text-anchor="middle" '
                       f'font-size="11" font-family="sans-serif">{escape(lab)}</text>')
        return out

    def yticks(self, ticks, labels) -> list[str]:
        out = []
        for t, lab in zip(ticks, labels):
            y = self.py(t)
            out.append(f'<line x1="{_MARGIN_L - 5}" y1="{y:.1f}" x2="{_MARGIN_L}" '
                       f'y2="{y:.1f}" stroke="black"/>')
            out.append(f'<text x="{_MARGIN_L - 8}" y="{y + 4:.1f}" text-anchor="end" '
                       f'font-size="11" font-family="sans-serif">{escape(lab)}</text>')
        return out


def _polyline(xs, ys, ax: _Axes, color: str, dash: str = "") -> str:
    pts = " ".join(f"{ax.px(x):.2f},{ax.py(y):.2f}" for x, y in zip(xs, ys))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>'


def _decade_ticks(lo: float, hi: float) -> tuple[list[float], list[str]]:
    d0, d1 = math.floor(lo), math.ceil(hi)
    if d1 - d0 > 12:
        step = math.ceil((d1 - d0) / 12)
    else:
        step = 1
    decades = list(range(d0, d1 + 1, step))
    return [float(d) for d in decades], [f"1e{d:+d}" for d in decades]


def _linear_ticks(lo: float, hi: float, n: int = 6) -> tuple[list[float], list[str]]:
    ticks = np.linspace(lo, hi, n)
    return list(map(float, ticks)), [f"{t:.3g}" for t in ticks]


def write_drift_svg(report: DriftReport, path,
                    header_lines: Sequence[str] = ()) -> None:
    """Log-log drift chart: members as a marked line, noise floor dashed,
    fitted power law overlaid when valid."""
    ok = [m for m in report.members if not m.failed and m.eps > 0]
    eps = np.array([m.eps for m in ok])
    drift = np.array([max(m.drift_rel, 1e-300) for m in ok])
    lx, ly = np.log10(eps), np.log10(drift)
    floor_y = math.log10(max(report.floor, 1e-300))
    ymin = min(float(ly.min()), floor_y) - 0.3
    ymax = float(ly.max()) + 0.3
    ax = _Axes(float(lx.min()) - 0.1, float(lx.max()) + 0.1, ymin, ymax)

    parts = _svg_open(
        f"drift vs eps: {report.case_id.value} {report.kind.value} ({report.form})",
        _config_lines(report.cfg, extra=header_lines))
    parts += ax.frame("eps", "relative drift")
    parts += ax.xticks(*_decade_ticks(ax.x0, ax.x1))
    parts += ax.yticks(*_decade_ticks(ax.y0, ax.y1))
    parts.append(_polyline([ax.x0, ax.x1], [floor_y, floor_y], ax, "#888888", dash="6,4"))
    parts.append(_polyline(lx, ly, ax, _COLORS[0]))
    for x, y in zip(lx, ly):
        parts.append(f'<circle cx="{ax.px(x):.2f}" cy="{ax.py(y):.2f}" r="3" '
                     f'fill="{_COLORS[0]}"/>')
    if report.slope_valid:
        ordinate = [(report.slope * math.log(10 ** t) + report.intercept) / math.log(10)
                    for t in (ax.x0, ax.x1)]
        parts.append(_polyline([ax.x0, ax.x1], ordinate, ax, _COLORS[1], dash="2,3"))
        parts.append(f'<text x="{_SVG_W - _MARGIN_R - 10}" y="{_MARGIN_T + 20}" '
                     f'text-anchor="end" font-size="12" font-family="sans-serif">'
                     f"slope = {report.slope:.3f}</text>")
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def write_timeseries_svg(series: Sequence[DensityTimeseries], path,
                         header_lines: Sequence[str] = ()) -> None:
    """Q(t) per series, linear axes, one color per eps/form."""
    if not series:
        raise ValueError("no timeseries to plot")
    tmin = min(float(ts.times.min()) for ts in series)
    tmax = max(float(ts.times.max()) for ts in series)
    qmin = min(float(ts.values.min()) for ts in series)
    qmax = max(float(ts.values.max()) for ts in series)
    pad = 0.05 * max(qmax - qmin, 1e-12)
    ax = _Axes(tmin, tmax, qmin - pad, qmax + pad)

    first = series[0]
    parts = _svg_open(
        f"Q(t): {first.case_id.value} {first.kind.value}", list(header_lines))
    parts += ax.frame("t", "Q")
    parts += ax.xticks(*_linear_ticks(ax.x0, ax.x1))
    parts += ax.yticks(*_linear_ticks(ax.y0, ax.y1))
    for i, ts in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        parts.append(_polyline(ts.times, ts.values, ax, color))
        parts.append(f'<text x="{_MARGIN_L + 10}" y="{_MARGIN_T + 16 + 14 * i}" '
                     f'font-size="11" font-family="sans-serif" fill="{color}">'
                     f"{escape(f'{ts.form} eps={ts.eps:g}')}</text>")
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def emit_report(reports: Sequence, fmt: str, out_dir, stem: str = "drift",
                header_lines: Sequence[str] = ()) -> list[str]:
    """Write DriftReports (csv: drift + slope tables; svg: one chart per
    report) or DensityTimeseries (csv: long table; svg: one chart).
    Returns the written paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    timeseries = [r for r in reports if isinstance(r, DensityTimeseries)]
    drifts = [r for r in reports if isinstance(r, DriftReport)]
    if fmt == "csv":
        if timeseries:
            p = os.path.join(out_dir, f"{stem}_timeseries.csv")
            write_timeseries_csv(timeseries, p, header_lines)
            paths.append(p)
        if drifts or not timeseries:
            p = os.path.join(out_dir, f"{stem}.csv")
            write_drift_csv(drifts, p, header_lines)
            paths.append(p)
            p = os.path.join(out_dir, f"{stem}_slopes.csv")
            write_slope_csv(drifts, p, header_lines)
            paths.append(p)
    elif fmt == "svg":
        if timeseries:
            p = os.path.join(out_dir, f"{stem}_timeseries.svg")
            write_timeseries_svg(timeseries, p, header_lines)
            paths.append(p)
        for rep in drifts:
            p = os.path.join(out_dir,
                             f"{stem}_{rep.case_id.value}_{rep.kind.value}.svg")
            write_drift_svg(rep, p, header_lines)
            paths.append(p)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return paths
