"""End-to-end CLI behavior through main() in-process."""

import json

import numpy as np
import pytest

from maxsketch.cli import main
from maxsketch.streamio import iter_stream_blocks, read_sketch, write_stream

SEED = ["--seed", "7", "--quiet"]


def run(*argv):
    return main([str(a) for a in argv])


def gen(tmp_path, name="s.mxs", k=6, n=200, d=32, eta=1e-3, seed=7, **extra):
    path = tmp_path / name
    args = ["gen", "--k", k, "--n", n, "--d", d, "--eta", eta, "--out", path,
            "--seed", seed, "--quiet"]
    for key, val in extra.items():
        args += [f"--{key}", val]
    assert run(*args) == 0
    return path


def test_gen_deterministic_and_roundtrips(tmp_path):
    a = gen(tmp_path, "a.mxs")
    b = gen(tmp_path, "b.mxs")
    assert a.read_bytes() == b.read_bytes()
    blocks = np.concatenate(list(iter_stream_blocks(a)))
    assert blocks.shape == (200, 32)
    assert np.allclose(np.linalg.norm(blocks, axis=1), 1.0, atol=1e-5)
    labels = (tmp_path / "a.mxs.labels.csv").read_text().splitlines()
    assert labels[0] == "index,center_id"
    assert len(labels) == 201
    meta = json.loads((tmp_path / "a.mxs.meta.json").read_text())
    assert meta["spec"]["k_star"] == 6


def test_gen_rejects_k_above_d(tmp_path):
    code = run("gen", "--k", 10, "--d", 4, "--n", 50, "--out", tmp_path / "x.mxs", *SEED)
    assert code == 2


def test_gen_csv_stream(tmp_path):
    path = tmp_path / "s.csv"
    assert run("gen", "--k", 4, "--n", 40, "--d", 8, "--eta", 0.001, "--csv",
               "--out", path, *SEED) == 0
    rows = np.concatenate(list(iter_stream_blocks(path)))
    assert rows.shape == (40, 8)


def test_sketch_permutation_invariance(tmp_path):
    stream = gen(tmp_path)
    rows = np.concatenate(list(iter_stream_blocks(stream)))
    shuffled = tmp_path / "shuffled.mxs"
    write_stream(shuffled, rows[np.random.default_rng(0).permutation(len(rows))])
    assert run("sketch", "--input", stream, "-m", 64, "--out", tmp_path / "a.mxsk", *SEED) == 0
    assert run("sketch", "--input", shuffled, "-m", 64, "--out", tmp_path / "b.mxsk", *SEED) == 0
    a = read_sketch(tmp_path / "a.mxsk")
    b = read_sketch(tmp_path / "b.mxsk")
    assert np.array_equal(a.maxima, b.maxima)


def test_sharded_sketch_merge_equals_whole(tmp_path):
    stream = gen(tmp_path)
    rows = np.concatenate(list(iter_stream_blocks(stream)))
    write_stream(tmp_path / "left.mxs", rows[:120])
    write_stream(tmp_path / "right.mxs", rows[120:])
    for name in ["s.mxs", "left.mxs", "right.mxs"]:
        assert run("sketch", "--input", tmp_path / name, "-m", 48,
                   "--out", tmp_path / f"{name}.mxsk", *SEED) == 0
    assert run("merge", tmp_path / "left.mxs.mxsk", tmp_path / "right.mxs.mxsk",
               "--out", tmp_path / "merged.mxsk", *SEED) == 0
    whole = read_sketch(tmp_path / "s.mxs.mxsk")
    merged = read_sketch(tmp_path / "merged.mxsk")
    assert merged == whole


def test_csv_and_binary_streams_sketch_identically(tmp_path):
    stream = gen(tmp_path)
    rows = np.concatenate(list(iter_stream_blocks(stream)))
    csv_stream = tmp_path / "s.csv"
    with open(csv_stream, "w") as fh:
        for row in rows:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    assert run("sketch", "--input", stream, "-m", 32, "--out", tmp_path / "a.mxsk", *SEED) == 0
    assert run("sketch", "--input", csv_stream, "-m", 32, "--out", tmp_path / "b.mxsk", *SEED) == 0
    assert read_sketch(tmp_path / "a.mxsk") == read_sketch(tmp_path / "b.mxsk")


def test_merge_binding_mismatch_exit_code(tmp_path):
    stream = gen(tmp_path)
    assert run("sketch", "--input", stream, "-m", 32, "--out", tmp_path / "a.mxsk", *SEED) == 0
    assert run("sketch", "--input", stream, "-m", 32, "--out", tmp_path / "b.mxsk",
               "--seed", 9, "--quiet") == 0
    code = run("merge", tmp_path / "a.mxsk", tmp_path / "b.mxsk",
               "--out", tmp_path / "m.mxsk", *SEED)
    assert code == 2


def test_estimate_n_override(tmp_path, capsys):
    stream = gen(tmp_path, k=4, n=100, d=16)
    assert run("sketch", "--input", stream, "-m", 64, "--out", tmp_path / "s.mxsk", *SEED) == 0
    assert run("estimate", "--sketch", tmp_path / "s.mxsk", "--eps", 0.5, "--delta", 0.1,
               "--n", 500, "--format", "json", *SEED) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 500


def test_low_memory_sketch_matches(tmp_path):
    stream = gen(tmp_path)
    assert run("sketch", "--input", stream, "-m", 40, "--out", tmp_path / "a.mxsk", *SEED) == 0
    assert run("sketch", "--input", stream, "-m", 40, "--low-memory",
               "--out", tmp_path / "b.mxsk", *SEED) == 0
    assert read_sketch(tmp_path / "a.mxsk") == read_sketch(tmp_path / "b.mxsk")


def test_empty_stream_sketch_then_estimate_errors(tmp_path):
    empty = tmp_path / "empty.mxs"
    write_stream(empty, np.empty((0, 16), dtype=np.float32))
    assert run("sketch", "--input", empty, "-m", 16, "--out", tmp_path / "e.mxsk", *SEED) == 0
    state = read_sketch(tmp_path / "e.mxsk")
    assert state.items_seen == 0
    code = run("estimate", "--sketch", tmp_path / "e.mxsk", "--eps", 0.5, "--delta", 0.1, *SEED)
    assert code == 2


def test_estimate_pipeline_and_grid_csv(tmp_path, capsys):
    stream = gen(tmp_path, k=8, n=400, d=64, eta=1e-4)
    assert run("sketch", "--input", stream, "-m", 512, "--out", tmp_path / "s.mxsk", *SEED) == 0
    code = run("estimate", "--sketch", tmp_path / "s.mxsk", "--eps", 0.5, "--delta", 0.1,
               "--grid-csv", tmp_path / "grid.csv", "--format", "json", *SEED)
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["k_hat"] >= 8
    assert payload["m"] == 512
    grid_lines = (tmp_path / "grid.csv").read_text().strip().splitlines()
    assert grid_lines[0] == "r,t_r,theta_r,U_tr,L_tr1"
    assert len(grid_lines) > 3


def test_estimate_deterministic(tmp_path, capsys):
    stream = gen(tmp_path, k=4, n=100, d=16)
    assert run("sketch", "--input", stream, "-m", 64, "--out", tmp_path / "s.mxsk", *SEED) == 0
    outs = []
    for _ in range(2):
        assert run("estimate", "--sketch", tmp_path / "s.mxsk", "--eps", 0.5,
                   "--delta", 0.1, *SEED) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]


def test_estimate_grid_soundness_exit_code(tmp_path):
    stream = gen(tmp_path, k=4, n=100, d=16)
    assert run("sketch", "--input", stream, "-m", 32, "--out", tmp_path / "s.mxsk", *SEED) == 0
    with pytest.warns(UserWarning):
        code = run("estimate", "--sketch", tmp_path / "s.mxsk", "--eps", 0.5,
                   "--delta", 0.1, "--eta", 0.3, *SEED)
    assert code == 4


def _calibration_setup(tmp_path, ks=(2, 4, 8), per_level=3, m=96):
    lines = ["path,k"]
    for k in ks:
        for i in range(per_level):
            name = f"cal_{k}_{i}.mxs"
            gen(tmp_path, name, k=k, n=120, d=32, eta=1e-4, seed=100 + 10 * k + i)
            lines.append(f"{name},{k}")
    labels = tmp_path / "labels.csv"
    labels.write_text("\n".join(lines) + "\n")
    return labels


@pytest.mark.parametrize("kind", ["isotonic", "threshold-grid"])
def test_calibrate_predict_roundtrip(tmp_path, capsys, kind):
    labels = _calibration_setup(tmp_path)
    readout = tmp_path / "readout.json"
    assert run("calibrate", "--labels", labels, "--kind", kind, "--eps", 0.5,
               "-m", 96, "--out", readout, *SEED) == 0
    target = gen(tmp_path, "target.mxs", k=4, n=120, d=32, eta=1e-4, seed=999)
    assert run("sketch", "--input", target, "-m", 96, "--out", tmp_path / "t.mxsk", *SEED) == 0
    assert run("predict", "--readout", readout, "--sketch", tmp_path / "t.mxsk",
               "--format", "json", *SEED) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["kind"] == kind
    assert 2 <= payload["count"] <= 8


def test_predict_binding_mismatch(tmp_path):
    labels = _calibration_setup(tmp_path)
    readout = tmp_path / "readout.json"
    assert run("calibrate", "--labels", labels, "--kind", "isotonic", "--eps", 0.5,
               "-m", 96, "--out", readout, *SEED) == 0
    target = gen(tmp_path, "target.mxs", k=4, n=120, d=32, eta=1e-4, seed=999)
    # different sketch seed -> different projection binding
    assert run("sketch", "--input", target, "-m", 96, "--out", tmp_path / "t.mxsk",
               "--seed", 8, "--quiet") == 0
    code = run("predict", "--readout", readout, "--sketch", tmp_path / "t.mxsk", *SEED)
    assert code == 2


def test_readout_json_roundtrip_identical_predictions(tmp_path, capsys):
    labels = _calibration_setup(tmp_path)
    readout = tmp_path / "readout.json"
    assert run("calibrate", "--labels", labels, "--kind", "isotonic", "--eps", 0.5,
               "-m", 96, "--out", readout, *SEED) == 0
    copy = tmp_path / "copy.json"
    copy.write_text(json.dumps(json.loads(readout.read_text())) + "\n")
    target = gen(tmp_path, "target.mxs", k=8, n=120, d=32, eta=1e-4, seed=998)
    assert run("sketch", "--input", target, "-m", 96, "--out", tmp_path / "t.mxsk", *SEED) == 0
    results = []
    for r in [readout, copy]:
        assert run("predict", "--readout", r, "--sketch", tmp_path / "t.mxsk", *SEED) == 0
        results.append(capsys.readouterr().out)
    assert results[0] == results[1]


def test_verify_subcommand_json(tmp_path, capsys):
    assert run("verify", "slepian", "--k", 8, "--rho", 0.2, "--trials", 20000, *SEED) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["pass"] is True
    assert payload["name"] == "slepian"
    assert len(payload["bound"]) == 2


def test_verify_gap_and_concentration(tmp_path, capsys):
    assert run("verify", "gap", "--k", 10, "--eps", 0.5, *SEED) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True
    assert run("verify", "concentration", "--k", 4, "--d", 16, "--n", 80,
               "-m", 32, "--redraws", 120, *SEED) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True


def test_verify_unknown_check_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run("verify", "nonsense")
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err


def test_experiment_rows_and_determinism(tmp_path):
    out1 = tmp_path / "r1.csv"
    out2 = tmp_path / "r2.csv"
    for out in [out1, out2]:
        assert run("experiment", "--k-list", "2,4", "--trials", 3, "--n", 100, "--d", 32,
                   "--eta", 1e-4, "--eps", 0.5, "--delta", 0.1, "-m", 64,
                   "--out", out, *SEED) == 0
    lines = out1.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[:5] == ["k", "trials", "mean_k_hat", "exact_rate", "band_rate"]
    assert len(lines) == 3  # header + one row per k

    def strip_runtime(text):
        return [",".join(line.split(",")[:-1]) for line in text.strip().splitlines()]

    assert strip_runtime(out1.read_text()) == strip_runtime(out2.read_text())


def test_experiment_threads_do_not_change_results(tmp_path, monkeypatch):
    # trial rows are ordered deterministically regardless of scheduling
    outs = []
    for threads in ["1", "3"]:
        monkeypatch.setenv("MAXSKETCH_THREADS", threads)
        out = tmp_path / f"r{threads}.csv"
        assert run("experiment", "--k-list", "2,4", "--trials", 4, "--n", 80, "--d", 16,
                   "--eta", 1e-4, "--eps", 0.5, "--delta", 0.1, "-m", 32,
                   "--out", out, *SEED) == 0
        outs.append([",".join(l.split(",")[:-1]) for l in out.read_text().splitlines()])
    assert outs[0] == outs[1]


def test_experiment_zero_trials_usage_error(tmp_path):
    code = run("experiment", "--k-list", "2", "--trials", 0, "--n", 100, "--d", 8,
               "--eps", 0.5, "--delta", 0.1, *SEED)
    assert code == 2


def test_stream_format_error_exit_code(tmp_path):
    bad = tmp_path / "bad.mxs"
    stream = gen(tmp_path)
    bad.write_bytes(stream.read_bytes()[:-7])
    code = run("sketch", "--input", bad, "-m", 16, "--out", tmp_path / "x.mxsk", *SEED)
    assert code == 3
