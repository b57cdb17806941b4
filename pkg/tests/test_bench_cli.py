import csv
import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpngmres import bench
from cpngmres.cli import main
from cpngmres.problems import DenseProblemSpec, LaplacianSpec
from cpngmres.trace import CSV_HEADER, Trace, TraceRecord, read_trace_csv, write_trace_csv

DATA = Path(__file__).parent / "data"


def make_trace(hs, method="x"):
    t = Trace(method)
    for k, h in enumerate(hs):
        t.append(TraceRecord(k, 0.1 * k, 0.5 * h * h, h, 1.0 / (k + 1), k, k, k))
    return t


def run(label, h_final, reason="GradTol", hs=None, seed=0):
    m = bench.MethodSpec(label)
    return bench.RunResult(m, seed, make_trace(hs or [1.0, h_final]), reason, h_final)


# -- trace CSV --------------------------------------------------------------------


def test_three_iteration_trace_has_header_plus_rows(tmp_path):
    t = make_trace([0.5, 0.4, 0.3])
    write_trace_csv(t, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 4
    back = read_trace_csv(tmp_path / "t.csv")
    assert back.column("h") == [0.5, 0.4, 0.3]


def test_trace_indices_must_increase():
    t = make_trace([1.0])
    with pytest.raises(ValueError):
        t.append(TraceRecord(0, 0, 0, 0, 0, 0, 0, 0))


def test_golden_trace(tmp_path):
    out = tmp_path / "g.csv"
    rc = main(["solve", "--method", "ngmres", "--s", "6", "--c", "0.5", "--R", "2", "--seed", "0",
               "--max-iters", "8", "--deterministic", "--trace", str(out)])
    assert rc == 0
    assert out.read_bytes() == (DATA / "golden_ngmres_s6_seed0.csv").read_bytes()


def test_gnorm_positive_until_stop(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["solve", "--method", "als", "--s", "6", "--R", "2", "--trace", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert all(float(r["gnorm_rel"]) > 0 for r in rows)
    times = [float(r["time_s"]) for r in rows]
    assert times == sorted(times)


# -- accuracy extraction ------------------------------------------------------------


def test_crossings_first_index():
    t = make_trace([1.0, 0.5, 0.1 + 1e-4, 0.1 + 1e-7, 0.1])
    cs = bench.crossings(t, 0.1)
    assert [c.iters for c in cs] == [2, 3, 4]
    assert cs[0].time_s == pytest.approx(0.2)
    assert bench.crossings(t, math.nan)[0].iters is None


@given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(0, 10))
def test_crossing_iterations_nondecreasing_in_tightness(hs, h_star):
    its = [c.iters for c in bench.crossings(make_trace(hs), h_star)]
    seen = [i for i in its if i is not None]
    assert seen == sorted(seen)
    # once a tighter target is hit, looser ones are too
    assert all(its[k] is not None for k in range(len(its)) if any(i is not None for i in its[k:]))


def test_assess_matching_and_censoring():
    runs = [run("als", 0.3, hs=[1.0, 0.3]), run("ngmres", 0.3 + 1e-9, hs=[1.0, 0.3 + 1e-9]),
            run("ncg", 0.5, reason="MaxIters", hs=[1.0, 0.5])]
    reports = bench.assess(runs)
    assert all(r.matched for r in reports)
    assert reports[0].h_star == 0.3
    assert reports[2].h_star == pytest.approx(0.3 + 5e-10)
    assert reports[2].crossings[0].iters is None

    bad = bench.assess([run("als", 0.3), run("ngmres", 0.4)])
    assert not any(r.matched for r in bad)
    none = bench.assess([run("als", 0.3, reason="MaxIters")])
    assert not none[0].matched


def test_medians_use_matched_runs_and_censor():
    rep = bench.AccuracyReport("cell", max_iters=10)
    for seed in range(3):
        rep.runs.extend(bench.assess([run("als", 0.2, hs=[1, 0.5, 0.2], seed=seed),
                                      run("ncg", 0.9, reason="MaxIters", hs=[1, 0.9], seed=seed)]))
    rep.runs.extend(bench.assess([run("als", 0.2, seed=9), run("ngmres", 0.7, seed=9)]))  # unmatched
    assert rep.matched_seeds() == [0, 1, 2]
    assert rep.median_iters("als", 1e-3) == 2
    assert rep.median_iters("ncg", 1e-3) == 11
    assert rep.median_time("ncg", 1e-3) == math.inf
    assert math.isnan(rep.median_iters("ngmres(w=20)", 1e-3))


def test_report_csv(tmp_path):
    rep = bench.AccuracyReport("cell")
    rep.runs.extend(bench.assess([run("als", 0.2), run("ngmres", 0.2)]))
    bench.write_report_csv([rep], tmp_path / "r.csv")
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert [r["kind"] for r in rows] == ["run", "run", "median", "median"]
    assert rows[0]["matched"] == "1" and rows[2]["n_seeds"] == "1"
    assert {"it_1e-03", "it_1e-06", "it_1e-10", "time_1e-10"} <= set(rows[0])


def test_plot_data_long_format(tmp_path):
    traces = {"a": make_trace([1.0, 0.5, 0.25]), "b": make_trace([2.0, 1.0])}
    bench.emit_plot_data(traces, tmp_path / "p.csv")
    rows = list(csv.reader((tmp_path / "p.csv").open()))
    assert rows[0] == ["series", "iter", "time_s", "value"]
    series = {r[0] for r in rows[1:]}
    assert series == {"a:h_err", "a:gnorm_rel", "b:h_err", "b:gnorm_rel"}
    assert len(rows) == 1 + 2 * 3 + 2 * 2
    assert float(rows[1][3]) == pytest.approx(0.75)


def test_run_cell_small_sweep():
    rep = bench.run_cell(DenseProblemSpec(s=6, c=0.5, R=2), 2,
                         [bench.MethodSpec("als"), bench.MethodSpec("ngmres", 5)], seeds=[0, 1])
    assert rep.labels() == ["als", "ngmres(w=5)"]
    assert len(rep.runs) == 4
    assert rep.matched_seeds() == [0, 1]
    for r in rep.runs:
        its = [c.iters for c in r.crossings]
        assert its == sorted(its)


def test_sweep_records_failures_and_continues(monkeypatch):
    real = bench.run_method

    def flaky(tensor, k0, method, *a, **kw):
        if method.name == "ncg":
            return bench.RunResult(method, kw.get("seed", 0), None, "Error: boom")
        return real(tensor, k0, method, *a, **kw)

    monkeypatch.setattr(bench, "run_method", flaky)
    reps = bench.run_sweep([(LaplacianSpec(2, 3), 2)], [bench.MethodSpec("als"), bench.MethodSpec("ncg")], [0])
    stops = [r.run.stop_reason for r in reps[0].runs]
    assert stops[1] == "Error: boom" and stops[0] in ("GradTol", "MaxIters", "NumericalStall")


def test_unknown_method():
    with pytest.raises(ValueError):
        bench.MethodSpec("bfgs")


# -- CLI ----------------------------------------------------------------------------


def test_solve_exact_recovery_summary(tmp_path, capsys):
    assert main(["solve", "--s", "10", "--c", "0.5", "--R", "3", "--out", str(tmp_path / "k.txt")]) == 0
    line = capsys.readouterr().out.strip()
    h = float(line.split("h=")[1].split()[0])
    assert h <= 1e-8 and "method=ngmres(w=20)" in line
    assert (tmp_path / "k.txt").read_text().startswith("ktensor 3 3 10 10 10")


def test_same_initial_f_across_methods(tmp_path):
    f0 = {}
    for m in ("als", "ngmres", "ncg"):
        out = tmp_path / f"{m}.csv"
        assert main(["solve", "--method", m, "--s", "6", "--R", "2", "--seed", "3", "--max-iters", "2",
                     "--trace", str(out)]) == 0
        f0[m] = next(csv.DictReader(out.open()))["f"]
    assert len(set(f0.values())) == 1


def test_malformed_tensor_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.tns"
    bad.write_text("tns 2 2 2 2\n1 1 1.0\n1 q 2.0\n")
    assert main(["solve", "--tensor", str(bad), "--rank", "1"]) == 3
    assert "line 3" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--bogus"])
    assert exc.value.code == 1
    assert main([]) == 1
    assert main(["solve", "--s", "2", "--R", "3"]) == 1
    assert main(["solve", "--tensor", str(tmp_path / "missing.tns"), "--rank", "2"]) == 3
    assert main(["gen-laplacian", "--out", str(tmp_path / "nodir" / "x.tns")]) == 3


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nmethod = als\ns=6\nR=2\nmax-iters=3\ndeterministic=true\n")
    out = tmp_path / "t.csv"
    assert main(["solve", "--config", str(cfg), "--max-iters", "2", "--trace", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 and rows[-1]["time_s"] == "0.0" and rows[0]["fevals"] == "0"
    (tmp_path / "bad.cfg").write_text("windowsize=3\n")
    assert main(["solve", "--config", str(tmp_path / "bad.cfg")]) == 1


def test_gen_and_solve_roundtrip(tmp_path):
    t = tmp_path / "t.tns"
    assert main(["gen-dense", "--s", "5", "--R", "2", "--out", str(t), "--spec-out", str(tmp_path / "t.cfg")]) == 0
    assert main(["solve", "--tensor", str(t), "--rank", "2", "--method", "als"]) == 0
    assert main(["solve", "--config", str(tmp_path / "t.cfg"), "--method", "als", "--max-iters", "3"]) == 0
    lap = tmp_path / "l.tns"
    assert main(["gen-laplacian", "--d", "2", "--s", "3", "--out", str(lap)]) == 0
    assert lap.read_text().startswith("tns 4 3 3 3 3 33")


def test_bench_and_plot_commands(tmp_path):
    rep = tmp_path / "rep.csv"
    assert main(["bench", "--problem", "laplacian", "--d", "2", "--s", "3", "--rank", "2", "--seeds", "2",
                 "--methods", "als,ngmres", "--window", "3,5", "--out", str(rep),
                 "--trace-dir", str(tmp_path / "tr")]) == 0
    rows = list(csv.DictReader(rep.open()))
    assert {r["method"] for r in rows} == {"als", "ngmres(w=3)", "ngmres(w=5)"}
    traces = sorted((tmp_path / "tr").glob("*.csv"))
    assert len(traces) == 6
    out = tmp_path / "plot.csv"
    assert main(["plot", f"first={traces[0]}", str(traces[1]), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1].startswith("first:h_err,0,")
