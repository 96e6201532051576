"""Plot-ready tables and static SVG line plots.

Three kinds are supported: ``decay`` (log tau against log |R_mm|),
``trajectory`` (coordinates against the natural parameter, or against
``t`` when no natural parameter was computed) and ``leaf`` (sectional
curvature statistics per leaf).  SVG output is reproducible: the hash salt
is fixed and no date is embedded.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import UnknownKind  # noqa: E402
from .io import atomic_write_text, write_csv  # noqa: E402

KINDS = ("decay", "trajectory", "leaf")

DECAY_HEADER = ["tau", "R_mm", "tau_R_mm"]
LEAF_HEADER = ["t", "mean", "spread"]


def _save(fig, path: Path) -> Path:
    import io as _io
    buf = _io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "polarmetric", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return atomic_write_text(path, buf.getvalue())


def decay_figure(rows, path, title: str = "") -> Path:
    """``log10 tau`` against ``log10 |R_mm|`` with the fitted slope in the legend."""
    a = np.asarray(rows, dtype=float)
    tau, r = a[:, 0], np.abs(a[:, 1])
    keep = (tau > 0) & (r > 0)
    fig, ax = plt.subplots(figsize=(5, 4))
    if np.count_nonzero(keep) >= 2:
        lt, lr = np.log10(tau[keep]), np.log10(r[keep])
        slope = np.polyfit(lt, lr, 1)[0]
        ax.plot(lt, lr, "o-", label=f"R_mm (slope {slope:.3f})")
        ax.legend()
    ax.set_xlabel("log10 tau")
    ax.set_ylabel("log10 |R_mm|")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, Path(path))


def trajectory_figure(header, rows, path, s=None, title: str = "") -> Path:
    """Coordinates along a crossing curve."""
    a = np.asarray(rows, dtype=float)
    names = list(header)
    m = (len(names) - 2) // 2
    x = a[:, 0] if s is None else np.asarray(s, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    for j in range(m):
        ax.plot(x, a[:, 1 + j], label=names[1 + j])
    ax.axvline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("t" if s is None else "s")
    ax.set_ylabel("coordinate")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, Path(path))


def leaf_figure(rows, path, title: str = "") -> Path:
    """Mean sectional curvature per leaf; bars span the sampled range."""
    a = np.asarray(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(a[:, 0], a[:, 1], yerr=0.5 * a[:, 2], fmt="o-", capsize=3)
    ax.set_xlabel("leaf (tau)")
    ax.set_ylabel("sectional curvature")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, Path(path))


def emit_plot_data(report, kind: str, out_dir, stem: str) -> list[Path]:
    """Write ``<kind>.<stem>.csv`` and ``<kind>.<stem>.svg``.

    ``report`` is a list of decay rows for ``decay``, a trajectory object for
    ``trajectory`` and a list of per-leaf dicts for ``leaf`` (keys ``t`` and
    either ``mean``/``samples`` from a leaf scan or ``C``/``spread`` from the
    Robertson-Walker probe).
    """
    out = Path(out_dir)
    if kind == "decay":
        rows = [list(r) for r in report]
        return [write_csv(out / f"decay.{stem}.csv", DECAY_HEADER, rows),
                decay_figure(rows, out / f"decay.{stem}.svg", title=stem)]
    if kind == "trajectory":
        header, rows = report.header(), report.rows()
        s = report.s if getattr(report, "s", None) is not None else None
        return [write_csv(out / f"trajectory.{stem}.csv", header, rows),
                trajectory_figure(header, rows, out / f"trajectory.{stem}.svg", s=s, title=stem)]
    if kind == "leaf":
        rows = [[r["t"], r.get("mean", r.get("C")),
                 r["spread"] if "spread" in r else float(np.ptp(r["samples"]))] for r in report]
        return [write_csv(out / f"leaf.{stem}.csv", LEAF_HEADER, rows),
                leaf_figure(rows, out / f"leaf.{stem}.svg", title=stem)]
    raise UnknownKind(f"unknown plot kind {kind!r}; expected one of {', '.join(KINDS)}")
