# File-to-file figure rendering for the simulation harness CSVs: the
# consistency curves (relative error vs n, log y), the rescaled view
# (vs n/d, where the curves collapse), and the per-run convergence traces
# (distance to the final iterate vs iteration, log y). No interactivity;
# output is a static image decided by the output path's extension.

import csv
import statistics
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

KINDS = ("consistency", "rescaled", "convergence")

RESULT_REQUIRED = ("channel", "d1", "d2", "n", "rep_index", "rel_error",
                   "status")
TRACE_REQUIRED = ("channel", "d1", "d2", "n", "rep_index", "seed", "t",
                  "objective", "dist_to_final")


class RenderError(Exception):
    """Unusable input: missing file, missing column, or no data rows."""


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str
    kind: str
    output_path: str
    y_scale: str = "log"
    x_scale: str = "linear"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderError(f"unknown figure kind {self.kind!r}; "
                              f"expected one of {KINDS}")


@dataclass(frozen=True)
class RenderResult:
    output_path: str
    curves: int
    y_scale: str


def _load_rows(path, required):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for column in required:
                if column not in header:
                    raise RenderError(f"{path}: missing column {column!r}")
            rows = list(reader)
    except OSError as exc:
        raise RenderError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise RenderError(f"{path}: no data rows")
    return rows


def load_mean_errors(path, rescale: bool):
    """Mean relative error per (d, n) from a result CSV.

    d is max(d1, d2); failed replications (status other than "ok") are
    skipped. Returns {d: [(x, mean_rel_error), ...]} with x = n, or exactly
    n / d when rescale is set.
    """
    rows = _load_rows(path, RESULT_REQUIRED)
    cells = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        d = max(int(row["d1"]), int(row["d2"]))
        n = int(row["n"])
        cells.setdefault((d, n), []).append(float(row["rel_error"]))
    if not cells:
        raise RenderError(f"{path}: no successful replications to plot")
    curves = {}
    for (d, n), errors in sorted(cells.items()):
        x = n / d if rescale else n
        curves.setdefault(d, []).append((x, statistics.fmean(errors)))
    return curves


def load_traces(path):
    """Per-run (d, n, rep, channel) iteration traces from a trace CSV."""
    rows = _load_rows(path, TRACE_REQUIRED)
    runs = {}
    for row in rows:
        key = (int(row["d1"]), int(row["d2"]), int(row["n"]),
               int(row["rep_index"]), row["channel"])
        runs.setdefault(key, []).append((int(row["t"]),
                                         float(row["dist_to_final"])))
    for key in runs:
        runs[key].sort()
    return runs


def _save(fig, spec: FigureSpec, curves: int) -> RenderResult:
    fig.savefig(spec.output_path, dpi=150)
    plt.close(fig)
    return RenderResult(output_path=spec.output_path, curves=curves,
                        y_scale=spec.y_scale)


def _render_error_curves(spec: FigureSpec, rescale: bool,
                         x_label: str) -> RenderResult:
    curves = load_mean_errors(spec.input_csv, rescale)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for d, points in sorted(curves.items()):
        xs = [x for x, _ in points]
        ys = [y for _, y in points]
        ax.plot(xs, ys, marker="o", label=f"d = {d}")
    ax.set_xscale(spec.x_scale)
    ax.set_yscale(spec.y_scale)
    ax.set_xlabel(x_label)
    ax.set_ylabel("mean relative error")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, spec, len(curves))


def render_consistency(spec: FigureSpec) -> RenderResult:
    """One curve per dimension: mean relative error against the sample size."""
    return _render_error_curves(spec, rescale=False, x_label="sample size n")


def render_rescaled(spec: FigureSpec) -> RenderResult:
    """Same curves against the rescaled sample size n / d."""
    return _render_error_curves(spec, rescale=True,
                                x_label="rescaled sample size n / d")


def render_convergence(spec: FigureSpec) -> RenderResult:
    """One curve per run: distance to the final iterate per iteration.

    Zero distances (the final iterate itself) cannot sit on a log axis and
    are dropped from the curve.
    """
    runs = load_traces(spec.input_csv)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    drawn = 0
    for (d1, d2, n, rep, channel), points in sorted(runs.items()):
        xs = [t for t, dist in points if dist > 0]
        ys = [dist for _, dist in points if dist > 0]
        if not xs:
            continue
        drawn += 1
        alpha = n / max(d1, d2)
        ax.plot(xs, ys, label=f"n/d = {alpha:g}")
    if drawn == 0:
        plt.close(fig)
        raise RenderError(f"{spec.input_csv}: traces contain no positive "
                          "distances to plot")
    ax.set_yscale(spec.y_scale)
    ax.set_xlabel("iteration")
    ax.set_ylabel("distance to final iterate")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, spec, drawn)


RENDERERS = {
    "consistency": render_consistency,
    "rescaled": render_rescaled,
    "convergence": render_convergence,
}


def render(spec: FigureSpec) -> RenderResult:
    return RENDERERS[spec.kind](spec)
