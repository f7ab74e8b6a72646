"""Command-line front end: reproducible generate/sketch/estimate pipelines.

Subcommands: gen, sketch, merge, estimate, calibrate, predict, verify,
experiment.  Every command is deterministic under an explicit --seed; when
the seed is omitted one is drawn and printed to stderr.  Exit codes:
0 success, 2 usage or parameter error, 3 format or I/O error, 4 estimator
guarantee precondition (grid soundness) failure.
"""

import argparse
import json
import os
import secrets
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from maxsketch import estimator as est
from maxsketch import readout as ro
from maxsketch import sketch as sk
from maxsketch import streamgen as sg
from maxsketch import streamio as sio
from maxsketch import verify as vf
from maxsketch.errors import (
    BindingError,
    EmptySketchError,
    FormatError,
    GenerationError,
    GridSoundnessError,
    InvalidInputError,
    InvalidParameterError,
    MaxSketchError,
)
from maxsketch.gaussmax import expected_max_iid

_USAGE_ERRORS = (
    InvalidParameterError,
    InvalidInputError,
    BindingError,
    EmptySketchError,
    GenerationError,
)


def _resolve_seed(args):
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _info(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return "" if value is None else str(value)


def _emit_rows(args, rows, path=None):
    """Write result rows as CSV or JSON to path or stdout."""
    if args.format == "json":
        text = json.dumps(rows if len(rows) != 1 else rows[0], indent=2) + "\n"
    else:
        fields = list(rows[0].keys())
        lines = [",".join(fields)]
        lines.extend(",".join(_fmt(row[f]) for f in fields) for row in rows)
        text = "\n".join(lines) + "\n"
    if path:
        Path(path).write_text(text)
        _info(args, f"wrote {path}")
    else:
        sys.stdout.write(text)


def _derived_seeds(*entropy):
    """Two independent 64-bit seeds derived from the given entropy."""
    state = np.random.SeedSequence([int(e) for e in entropy]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


# ---------------------------------------------------------------- gen


def cmd_gen(args):
    seed = _resolve_seed(args)
    spec = sg.ClusterSpec(
        k_star=args.k, d=args.d, eta=args.eta, rho=args.rho, center_mode=args.centers
    )
    out = Path(args.out)
    min_align = 1.0
    centers = None
    assignments = []
    if args.csv:
        with open(out, "w", newline="") as fh:
            for vectors, assignment, centers in sg.generate_stream_blocks(
                spec, args.n, seed, block=args.block
            ):
                for row in vectors.astype(np.float32):
                    fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
                aligned = centers.centers[assignment]
                min_align = min(min_align, float(np.einsum("ij,ij->i", vectors, aligned).min()))
                assignments.append(assignment)
    else:
        with sio.StreamWriter(out, args.n, args.d) as writer:
            for vectors, assignment, centers in sg.generate_stream_blocks(
                spec, args.n, seed, block=args.block
            ):
                writer.write(vectors)
                aligned = centers.centers[assignment]
                min_align = min(min_align, float(np.einsum("ij,ij->i", vectors, aligned).min()))
                assignments.append(assignment)
    assignment = np.concatenate(assignments)
    eta_hat = max(0.0, 2.0 * (1.0 - min_align))
    meta = {
        "spec": spec.as_dict(),
        "n": args.n,
        "seed": seed,
        "realized_rho": centers.realized_rho,
        "eta_hat": eta_hat,
    }
    labels_path, meta_path = sio.write_ground_truth(out, assignment, meta)
    _info(
        args,
        f"generated n={args.n} d={args.d} k={args.k} ({args.centers}) "
        f"realized_rho={centers.realized_rho:.3g} eta_hat={eta_hat:.3g}",
    )
    _info(args, f"wrote {out}, {labels_path}, {meta_path}")
    return 0


# ---------------------------------------------------------------- sketch


def _sketch_file(path, m, seed, block, materialize=True):
    proj = sk.create_projections(sio.read_stream_header(path)[1], m, seed, materialize=materialize)
    state = sk.new_sketch(proj)
    for blk in sio.iter_stream_blocks(path, block):
        sk.update_batch(state, blk, proj)
    return state


def cmd_sketch(args):
    seed = _resolve_seed(args)
    state = _sketch_file(args.input, args.m, seed, args.block, materialize=not args.low_memory)
    out = args.out or (str(args.input) + ".mxsk")
    sio.write_sketch(out, state)
    summary = f"sketched {state.items_seen} vectors (d={state.d}, m={state.m}"
    if state.items_seen:
        summary += f", S={sk.statistic(state):.6g}"
    _info(args, summary + f"); state={state.state_nbytes()} bytes")
    _info(args, f"wrote {out}")
    return 0


def cmd_merge(args):
    states = [sio.read_sketch(p) for p in args.sketches]
    merged = states[0]
    for other in states[1:]:
        merged = sk.merge(merged, other)
    sio.write_sketch(args.out, merged)
    _info(args, f"merged {len(states)} sketches, items_seen={merged.items_seen}")
    _info(args, f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------- estimate


def cmd_estimate(args):
    state = sio.read_sketch(args.sketch)
    s = sk.statistic(state)
    n = args.n if args.n is not None else state.items_seen
    params = est.EstimatorParams(
        n=n, eps=args.eps, delta=args.delta, rho=args.rho, eta=args.eta, m=state.m
    )
    grid = est.build_grid(params)
    k_hat = est.estimate(s, grid)
    fired = est.fired_index(s, grid)
    m_needed = est.required_m(n, args.eps, args.delta)
    if state.m < m_needed:
        _info(
            args,
            f"note: sketch has m={state.m} projections but the guarantee "
            f"asks for m >= {m_needed}",
        )
    if args.grid_csv:
        Path(args.grid_csv).write_text(grid.to_csv())
        _info(args, f"wrote grid audit to {args.grid_csv}")
    _emit_rows(
        args,
        [
            {
                "k_hat": k_hat,
                "fired_index": fired,
                "statistic": s,
                "n": n,
                "m": state.m,
                "required_m": m_needed,
                "eps": args.eps,
                "delta": args.delta,
                "rho": args.rho,
                "eta": args.eta,
            }
        ],
    )
    return 0


# ---------------------------------------------------------------- calibrate / predict


def _read_labels(labels_path):
    rows = []
    base = Path(labels_path).parent
    with open(labels_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.lower() == "path,k":
                continue
            try:
                path, k = line.rsplit(",", 1)
                rows.append((base / path, int(k)))
            except ValueError:
                raise FormatError(f"{labels_path}:{lineno}: expected 'path,k', got {line!r}")
    if not rows:
        raise InvalidInputError(f"{labels_path}: no calibration entries")
    return rows


def _statistic_for(path, args, seed):
    """S for a calibration input, sketching stream files on demand."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == sk.SKETCH_MAGIC:
        state = sio.read_sketch(path)
    else:
        if args.m is None:
            raise InvalidParameterError(f"{path} is a stream file; pass -m to sketch it")
        state = _sketch_file(path, args.m, seed, args.block)
    return sk.statistic(state), (state.seed, state.m, state.d)


def cmd_calibrate(args):
    seed = _resolve_seed(args)
    samples = []
    binding = None
    for path, k in _read_labels(args.labels):
        s, this_binding = _statistic_for(path, args, seed)
        if binding is None:
            binding = this_binding
        elif binding != this_binding:
            raise BindingError(
                f"calibration inputs mix sketch bindings {binding} and {this_binding}"
            )
        samples.append(ro.CalibrationSample(s=s, k=k))
    if args.kind == "isotonic":
        fn = ro.pav_fit(samples)
    else:
        fn = ro.learn_thresholds(samples, args.eps)
    payload = json.loads(ro.to_json(fn))
    payload["binding"] = {"seed": binding[0], "m": binding[1], "d": binding[2]}
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    _info(
        args,
        f"fit {args.kind} readout on {len(samples)} samples "
        f"(k range {min(s.k for s in samples)}..{max(s.k for s in samples)}, "
        f"{len(fn.breakpoints)} breakpoints)",
    )
    _info(args, f"wrote {args.out}")
    return 0


def _load_readout(path):
    text = Path(path).read_text()
    fn = ro.from_json(text)
    binding = json.loads(text).get("binding")
    return fn, binding


def cmd_predict(args):
    fn, binding = _load_readout(args.readout)
    state = sio.read_sketch(args.sketch)
    if binding is not None:
        actual = {"seed": state.seed, "m": state.m, "d": state.d}
        if actual != binding:
            raise BindingError(
                f"sketch binding {actual} does not match the readout's calibration "
                f"binding {binding}"
            )
    count = ro.apply_readout(fn, sk.statistic(state))
    _emit_rows(args, [{"count": count, "statistic": sk.statistic(state), "kind": fn.kind}])
    return 0


# ---------------------------------------------------------------- verify


def _verify_stream(args, seed):
    spec = sg.ClusterSpec(
        k_star=args.k, d=args.d, eta=args.eta, rho=args.rho, center_mode="orthonormal"
    )
    return sg.generate_stream(spec, args.n, seed)


def cmd_verify(args):
    seed = _resolve_seed(args)
    if args.check == "expected-max":
        spec = sg.ClusterSpec(k_star=args.k, d=args.d, eta=0.0, rho=0.0)
        centers = sg.make_centers(spec, seed).centers
        report = vf.mc_expected_max(
            centers, args.trials, seed, expected=expected_max_iid(args.k)
        )
    elif args.check == "slepian":
        report = vf.check_slepian(args.k, args.rho, args.trials, seed)
    elif args.check == "perturbation":
        stream = _verify_stream(args, seed)
        report = vf.check_perturbation(stream, args.trials, seed)
    elif args.check == "gap":
        report = vf.check_gap(args.k, args.eps, seed)
    else:  # concentration; argparse restricts the choices
        stream = _verify_stream(args, seed)
        report = vf.check_concentration(stream, args.m, args.redraws, seed)
    print(report.to_json())
    return 0 if report.passed else 1


# ---------------------------------------------------------------- experiment


def _parse_k_values(args):
    if args.k_list:
        ks = [int(v) for v in args.k_list.split(",") if v]
    else:
        lo, hi, *rest = (int(v) for v in args.k_range.split(":"))
        step = rest[0] if rest else 1
        ks = list(range(lo, hi + 1, step))
    if not ks:
        raise InvalidParameterError("no k values to sweep")
    for k in ks:
        if not 2 <= k <= args.n:
            raise InvalidParameterError(f"k={k} outside [2, n={args.n}]")
    return ks


def _experiment_trial(k, trial, args, m, seed):
    stream_seed, proj_seed = _derived_seeds(seed, k, trial)
    spec = sg.ClusterSpec(
        k_star=k, d=args.d, eta=args.eta, rho=args.rho, center_mode=args.centers
    )
    stream = sg.generate_stream(spec, args.n, stream_seed)
    proj = sk.create_projections(args.d, m, proj_seed)
    state = sk.update_batch(sk.new_sketch(proj), stream.vectors, proj)
    return sk.statistic(state)


def _band_top(grid, k):
    """Largest output the success band allows: the level after the first
    grid level >= k (next-grid-level slack)."""
    levels = grid.levels
    idx = int(np.searchsorted(levels, k, side="left"))
    return int(levels[min(idx + 1, len(levels) - 1)])


def cmd_experiment(args):
    seed = _resolve_seed(args)
    if args.trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {args.trials}")
    ks = _parse_k_values(args)
    m = args.m if args.m is not None else est.required_m(args.n, args.eps, args.delta)
    params = est.EstimatorParams(
        n=args.n, eps=args.eps, delta=args.delta, rho=args.rho, eta=args.eta, m=m
    )
    grid = est.build_grid(params)
    tolerances = [int(t) for t in args.tolerances.split(",") if t] if args.tolerances else []
    threads = max(1, int(os.environ.get("MAXSKETCH_THREADS", "1")))
    _info(args, f"experiment: k in {ks}, {args.trials} trials each, m={m}, threads={threads}")

    rows = []
    for k in ks:
        start = time.perf_counter()
        jobs = ((k, t, args, m, seed) for t in range(args.trials))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                stats = list(pool.map(lambda j: _experiment_trial(*j), jobs))
        else:
            stats = [_experiment_trial(*j) for j in jobs]
        k_hats = np.asarray([est.estimate(s, grid) for s in stats])
        band_top = _band_top(grid, k)
        row = {
            "k": k,
            "trials": args.trials,
            "mean_k_hat": float(k_hats.mean()),
            "exact_rate": float(np.mean(k_hats == k)),
            "band_rate": float(np.mean((k_hats >= k) & (k_hats <= band_top))),
        }
        for tol in tolerances:
            row[f"within_{tol}"] = float(np.mean(np.abs(k_hats - k) <= tol))
        row["runtime_s"] = time.perf_counter() - start
        rows.append(row)
        _info(args, f"k={k}: mean k_hat {row['mean_k_hat']:.2f}, band rate {row['band_rate']:.2f}")
    _emit_rows(args, rows, path=args.out)
    return 0


# ---------------------------------------------------------------- parser


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="RNG seed (drawn and printed if omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="result output format")
    p.add_argument("--quiet", action="store_true", help="suppress informational messages")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maxsketch",
        description="Distinct-count estimation for unit-vector streams "
        "via max-linear projection sketches.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic clusterable stream")
    p.add_argument("--k", type=int, required=True, help="number of latent centers")
    p.add_argument("--n", type=int, required=True, help="stream length")
    p.add_argument("--d", type=int, required=True, help="embedding dimension")
    p.add_argument("--eta", type=float, default=0.0, help="within-cluster slack")
    p.add_argument("--rho", type=float, default=0.0, help="cross-center coherence bound")
    p.add_argument("--centers", choices=sg.CENTER_MODES, default="orthonormal")
    p.add_argument("--out", required=True, help="stream file to write")
    p.add_argument("--csv", action="store_true", help="write CSV instead of binary")
    p.add_argument("--block", type=int, default=8192)
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sketch", help="sketch a stream file in one pass")
    p.add_argument("--input", required=True, help="binary or CSV stream file")
    p.add_argument("-m", type=int, required=True, help="number of projections")
    p.add_argument("--out", default=None, help="sketch file (default: input + .mxsk)")
    p.add_argument("--block", type=int, default=8192)
    p.add_argument(
        "--low-memory",
        action="store_true",
        help="regenerate projection rows on the fly instead of storing the matrix",
    )
    _add_common(p)
    p.set_defaults(func=cmd_sketch)

    p = sub.add_parser("merge", help="merge sketches of the same projections")
    p.add_argument("sketches", nargs="+", help="sketch files")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("estimate", help="estimate the distinct count from a sketch")
    p.add_argument("--sketch", required=True)
    p.add_argument("--eps", type=float, required=True, help="multiplicative accuracy")
    p.add_argument("--delta", type=float, required=True, help="failure probability")
    p.add_argument("--eta", type=float, default=0.0, help="assumed within-cluster slack")
    p.add_argument("--rho", type=float, default=0.0, help="assumed center coherence")
    p.add_argument("--n", type=int, default=None, help="stream length bound (default: items seen)")
    p.add_argument("--grid-csv", default=None, help="write the threshold grid audit CSV here")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("calibrate", help="fit a monotone readout on labeled streams")
    p.add_argument("--labels", required=True, help="CSV of 'path,k' calibration entries")
    p.add_argument("--kind", choices=(ro.KIND_ISOTONIC, ro.KIND_THRESHOLD_GRID), default="isotonic")
    p.add_argument("--eps", type=float, default=0.5, help="level ratio for threshold-grid kind")
    p.add_argument("-m", type=int, default=None, help="projections when sketching stream inputs")
    p.add_argument("--out", required=True, help="readout JSON to write")
    p.add_argument("--block", type=int, default=8192)
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="apply a fitted readout to a sketch")
    p.add_argument("--readout", required=True)
    p.add_argument("--sketch", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="run a Monte Carlo verification check")
    p.add_argument(
        "check",
        choices=("expected-max", "slepian", "perturbation", "gap", "concentration"),
        help="which inequality to check",
    )
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--rho", type=float, default=0.2)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("-m", type=int, default=256)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--redraws", type=int, default=300)
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="sweep k and report estimator accuracy")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--k-list", default=None, help="comma-separated k values")
    group.add_argument("--k-range", default=None, help="lo:hi[:step]")
    p.add_argument("--trials", type=int, required=True, help="trials per k")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("-m", type=int, default=None, help="projections (default: required_m)")
    p.add_argument("--centers", choices=sg.CENTER_MODES, default="orthonormal")
    p.add_argument("--tolerances", default=None, help="comma-separated absolute tolerances")
    p.add_argument("--out", default=None, help="write results here instead of stdout")
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridSoundnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MaxSketchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
