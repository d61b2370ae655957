import shutil
import subprocess
import sys

import numpy as np
import pytest

from mas_track_plots.cli import cli
from mas_track_plots.panels import PanelError, PlotRequest, read_trace, render

FIG_PANELS = ("positions", "velocities", "u0_estimates", "v0_estimates",
              "f0_estimates", "own_velocity_estimates", "own_disturbance_estimates")


def _write_csv(path, order="second", n=3, rows=40):
    cols = ["t", "x0"] + (["v0"] if order == "second" else [])
    cols += [f"x_{i}" for i in range(1, n + 1)]
    if order == "second":
        cols += [f"v_{i}" for i in range(1, n + 1)]
    cols += [f"uhat0_{i}" for i in range(1, n + 1)]
    cols += [f"d_{i}" for i in range(1, n + 1)]
    cols += [f"fhat0_{i}" for i in range(1, n + 1)]
    cols += [f"fhat_{i}" for i in range(1, n + 1)]
    if order == "second":
        cols += [f"vhat0_{i}" for i in range(1, n + 1)]
        cols += [f"vhat_{i}" for i in range(1, n + 1)]
    cols += [f"u_{i}" for i in range(1, n + 1)]
    cols += ["err_pos_norm"] + (["err_vel_norm"] if order == "second" else [])
    cols += ["err_u_norm", "err_f0_norm", "err_f_norm"]
    rng = np.random.default_rng(0)
    t = np.linspace(0.0, 4.0, rows)
    data = np.column_stack([t] + [np.sin(t + rng.uniform(0, 6)) for _ in cols[1:]])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return path


def test_read_trace_columns(tmp_path):
    path = _write_csv(tmp_path / "trace.csv")
    trace = read_trace(path)
    assert trace.follower_columns("x_") == ["x_1", "x_2", "x_3"]
    assert trace.times[0] == 0.0


def test_render_all_panels_second_order(tmp_path):
    path = _write_csv(tmp_path / "trace.csv")
    request = PlotRequest(trace_csv_path=str(path), panels=FIG_PANELS + ("error_norms",),
                          out_dir=str(tmp_path / "figs"))
    produced = render(request)
    assert len(produced) == len(FIG_PANELS) + 1
    for p in produced:
        assert (tmp_path / "figs").joinpath(p.split("/")[-1]).stat().st_size > 0


def test_empty_panel_list_renders_nothing(tmp_path):
    path = _write_csv(tmp_path / "trace.csv")
    produced = render(PlotRequest(trace_csv_path=str(path), panels=(),
                                  out_dir=str(tmp_path / "figs")))
    assert produced == []
    assert not (tmp_path / "figs").exists()


def test_first_order_trace_rejects_velocity_panels(tmp_path):
    path = _write_csv(tmp_path / "trace.csv", order="first")
    request = PlotRequest(trace_csv_path=str(path), panels=("velocities",),
                          out_dir=str(tmp_path / "figs"))
    with pytest.raises(PanelError, match="velocities.*v_"):
        render(request)
    # a failing request writes nothing
    assert not (tmp_path / "figs").exists()


def test_first_order_trace_supports_position_and_estimate_panels(tmp_path):
    path = _write_csv(tmp_path / "trace.csv", order="first")
    produced = render(PlotRequest(
        trace_csv_path=str(path),
        panels=("positions", "u0_estimates", "f0_estimates",
                "own_disturbance_estimates", "error_norms"),
        out_dir=str(tmp_path / "figs")))
    assert len(produced) == 5


def test_unknown_panel_rejected(tmp_path):
    path = _write_csv(tmp_path / "trace.csv")
    with pytest.raises(PanelError, match="unknown panels"):
        PlotRequest(trace_csv_path=str(path), panels=("waterfall",), out_dir=".")


def test_render_is_deterministic(tmp_path):
    path = _write_csv(tmp_path / "trace.csv")
    a = render(PlotRequest(trace_csv_path=str(path), panels=("positions",),
                           out_dir=str(tmp_path / "a")))
    b = render(PlotRequest(trace_csv_path=str(path), panels=("positions",),
                           out_dir=str(tmp_path / "b")))
    assert open(a[0], "rb").read() == open(b[0], "rb").read()


def test_cli_renders_and_lists_files(tmp_path, capsys):
    path = _write_csv(tmp_path / "trace.csv")
    status = cli([str(path), "--panels", "positions,velocities",
                  "--out", str(tmp_path / "figs"), "--format", "png"])
    assert status == 0
    out = capsys.readouterr().out
    assert "2 panel(s) rendered" in out


def test_cli_empty_panels_succeeds(tmp_path, capsys):
    path = _write_csv(tmp_path / "trace.csv")
    status = cli([str(path), "--panels", "", "--out", str(tmp_path / "figs")])
    assert status == 0
    assert "0 panel(s) rendered" in capsys.readouterr().out


def test_cli_reports_missing_column(tmp_path, capsys):
    path = _write_csv(tmp_path / "trace.csv", order="first")
    status = cli([str(path), "--panels", "velocities", "--out", str(tmp_path / "figs")])
    assert status == 1
    assert "velocities" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("mas-track") is None,
                    reason="simulator CLI not installed")
def test_acceptance_all_figure_panels_from_benchmark_trace(tmp_path):
    # end-to-end through the external interface: simulate the five-follower
    # ring benchmark, then render all seven time-series panels
    trace_path = tmp_path / "ring5_second.csv"
    subprocess.run(["mas-track", "run", "--config", "ring5_second_order.json",
                    "--out", str(trace_path)], check=True,
                   stdout=subprocess.PIPE, timeout=600)
    produced = render(PlotRequest(trace_csv_path=str(trace_path), panels=FIG_PANELS,
                                  out_dir=str(tmp_path / "figs")))
    assert len(produced) == len(FIG_PANELS)
    for p in produced:
        assert (tmp_path / "figs" / p.split("/")[-1]).stat().st_size > 1000
    print(f"[PASS] C9/figure_panels: {len(produced)} panels rendered from the benchmark trace")
