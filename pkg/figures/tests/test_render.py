import csv

import pytest

from eivfigs import (
    FigureSpec,
    RenderError,
    load_mean_errors,
    load_traces,
    render_consistency,
    render_convergence,
    render_rescaled,
)
from eivfigs.cli import main

RESULT_COLUMNS = [
    "preset", "channel", "d1", "d2", "n", "rep_index", "seed", "lambda",
    "omega", "v", "iterations", "converged", "rel_error", "final_objective",
    "deviation_statistic", "wall_time_ms", "status",
]
TRACE_COLUMNS = [
    "preset", "channel", "d1", "d2", "n", "rep_index", "seed", "t",
    "objective", "dist_to_final", "nuclear_norm",
]


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def result_row(d, n, rep, rel, status="ok"):
    return ["consistency", "additive", d, d, n, rep, 11, 0.1, 50.0, 2.0,
            30, "true", rel, -100.0, 1.5, 12, status]


def trace_row(d, n, rep, t, dist):
    return ["convergence", "additive", d, d, n, rep, 11, t, -50.0 - t, dist,
            40.0]


@pytest.fixture
def results_csv(tmp_path):
    path = tmp_path / "results.csv"
    rows = []
    for d in (16, 32):
        for i, n in enumerate((5 * d, 10 * d)):
            for rep in range(3):
                rows.append(result_row(d, n, rep, 0.4 / (i + 1) + 0.01 * rep))
    write_csv(path, RESULT_COLUMNS, rows)
    return str(path)


@pytest.fixture
def traces_csv(tmp_path):
    path = tmp_path / "traces.csv"
    rows = []
    for n in (160, 320, 480):
        dists = [2.0 * 0.5 ** t for t in range(10)] + [0.0]
        rows += [trace_row(32, n, 0, t, dist) for t, dist in enumerate(dists)]
    write_csv(path, TRACE_COLUMNS, rows)
    return str(path)


def test_consistency_curve_per_dimension(results_csv, tmp_path):
    out = tmp_path / "fig.png"
    result = render_consistency(FigureSpec(results_csv, "consistency",
                                           str(out)))
    assert out.exists() and out.stat().st_size > 0
    assert result.curves == 2
    assert result.y_scale == "log"


def test_rescaled_uses_exact_ratio(results_csv, tmp_path):
    curves = load_mean_errors(results_csv, rescale=True)
    assert sorted(curves) == [16, 32]
    assert [x for x, _ in curves[16]] == [5.0, 10.0]
    assert [x for x, _ in curves[32]] == [5.0, 10.0]
    out = tmp_path / "fig.png"
    result = render_rescaled(FigureSpec(results_csv, "rescaled", str(out)))
    assert out.exists() and result.curves == 2


def test_single_dimension_single_curve(tmp_path):
    path = tmp_path / "one.csv"
    write_csv(path, RESULT_COLUMNS,
              [result_row(16, 80, 0, 0.3), result_row(16, 160, 0, 0.2)])
    result = render_consistency(FigureSpec(str(path), "consistency",
                                           str(tmp_path / "one.png")))
    assert result.curves == 1


def test_empty_rows_error_and_no_file(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv(path, RESULT_COLUMNS, [])
    out = tmp_path / "nope.png"
    with pytest.raises(RenderError, match="no data rows"):
        render_consistency(FigureSpec(str(path), "consistency", str(out)))
    assert not out.exists()


def test_all_failed_rows_error(tmp_path):
    path = tmp_path / "failed.csv"
    write_csv(path, RESULT_COLUMNS,
              [result_row(16, 80, 0, float("nan"), status="error: boom")])
    with pytest.raises(RenderError, match="no successful replications"):
        render_consistency(FigureSpec(str(path), "consistency",
                                      str(tmp_path / "x.png")))


def test_missing_column_named(tmp_path):
    path = tmp_path / "short.csv"
    columns = [c for c in RESULT_COLUMNS if c != "rel_error"]
    row = result_row(16, 80, 0, 0.3)
    del row[RESULT_COLUMNS.index("rel_error")]
    write_csv(path, columns, [row])
    with pytest.raises(RenderError, match="rel_error"):
        render_consistency(FigureSpec(str(path), "consistency",
                                      str(tmp_path / "x.png")))


def test_unknown_kind_rejected(results_csv, tmp_path):
    with pytest.raises(RenderError, match="kind"):
        FigureSpec(results_csv, "scatterplot", str(tmp_path / "x.png"))


def test_convergence_three_curves(traces_csv, tmp_path):
    out = tmp_path / "conv.png"
    result = render_convergence(FigureSpec(traces_csv, "convergence",
                                           str(out)))
    assert out.exists()
    assert result.curves == 3
    assert result.y_scale == "log"


def test_convergence_runs_are_split_correctly(traces_csv):
    runs = load_traces(traces_csv)
    assert len(runs) == 3
    for points in runs.values():
        assert points[0][0] == 0
        assert points[-1][1] == 0.0


def test_convergence_empty_trace_error(tmp_path):
    path = tmp_path / "zero.csv"
    write_csv(path, TRACE_COLUMNS, [])
    with pytest.raises(RenderError, match="no data rows"):
        render_convergence(FigureSpec(str(path), "convergence",
                                      str(tmp_path / "x.png")))


def test_render_is_deterministic(results_csv, tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render_consistency(FigureSpec(results_csv, "consistency", str(a)))
    render_consistency(FigureSpec(results_csv, "consistency", str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_cli_round_trip(results_csv, traces_csv, tmp_path, capsys):
    out = tmp_path / "cli.png"
    assert main(["--in", results_csv, "--out", str(out),
                 "--kind", "consistency"]) == 0
    assert out.exists()
    assert "y-scale log" in capsys.readouterr().out
    assert main(["--in", traces_csv, "--out", str(tmp_path / "c.png"),
                 "--kind", "convergence"]) == 0


def test_cli_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    write_csv(bad, RESULT_COLUMNS, [])
    assert main(["--in", str(bad), "--out", str(tmp_path / "x.png"),
                 "--kind", "consistency"]) == 1
    assert "no data rows" in capsys.readouterr().err
