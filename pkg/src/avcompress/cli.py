"""Command-line entry point: ``avcompress <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import HyperParams, ScenarioSpec
from .container import load_container, load_container_full, save_container
from .correspondence import CorrespondenceField
from .cpcr import refine_chunks_bruteforce, refine_chunks_dp
from .errors import AVCompressError, ConfigError
from .export import export_retention_map, write_traces
from .pipeline import CompressionReport, run_pipeline
from .sweep import sweep
from .synth import generate_scenario


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _resolve_params(stored: HyperParams | None, params_file: str | None) -> HyperParams:
    """Defaults, then the container's stored values, then the params file."""
    merged = (stored or HyperParams()).to_dict()
    if params_file:
        merged.update(_read_json(params_file))
    return HyperParams.from_dict(merged)


def _cmd_gen(args) -> int:
    spec = ScenarioSpec(
        num_frames=args.frames, grid_h=args.grid_h, grid_w=args.grid_w,
        num_audio_tokens=args.audio_tokens, dim=args.dim, num_events=args.events,
        boundary_jitter=args.jitter, noise_sigma=args.noise, seed=args.seed,
        num_buckets=args.buckets)
    params = _resolve_params(None, args.params)
    video, audio, truth = generate_scenario(spec, params)
    save_container(video, audio, params, args.output, ground_truth=truth)
    print(f"wrote {args.output}: {video.num_frames} frames x {video.patches_per_frame} patches, "
          f"{audio.num_tokens} audio tokens, {video.num_buckets} buckets")
    return 0


def _cmd_compress(args) -> int:
    video, audio, stored = load_container(args.input)
    params = _resolve_params(stored, args.params)
    result = run_pipeline(video, audio, params, banded=args.banded)
    Path(args.report).write_text(result.report.to_json())
    if args.output:
        v, a = result.compressed.to_streams()
        save_container(v, a, params, args.output)
    if args.chunking:
        Path(args.chunking).write_text(result.chunking.to_json())
    if args.traces:
        write_traces(result, args.traces)
    rep = result.report
    print(f"{len(rep.per_chunk)} chunks, retained {rep.overall_retained_ratio:.4f}, "
          f"flops proxy {rep.flops_proxy_ratio:.4f}")
    return 0


def _cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    params = HyperParams(sv_min=1, sv_max=3, sa_min=2, sa_max=5, lambda_c=args.lambda_c)
    F, N = args.frames, args.tokens
    sim = rng.uniform(-1, 1, size=(F, N))
    mask = rng.random((F, N)) < 0.8
    field = CorrespondenceField.from_arrays(sim, mask)
    dp = refine_chunks_dp(field, params, banded=False)
    brute = refine_chunks_bruteforce(field, params)
    ok = dp.ends == brute.ends and dp.score == brute.score
    print(f"F={F} N={N} dp={dp.score:.12g} {list(dp.ends)}")
    print(f"F={F} N={N} brute={brute.score:.12g} {list(brute.ends)}")
    print("match" if ok else "MISMATCH")
    return 0 if ok else 4


def _cmd_report(args) -> int:
    rep = CompressionReport.from_dict(_read_json(args.input))
    print(f"config {rep.config_digest}  chunks {len(rep.per_chunk)}  "
          f"score {rep.chunking_score}")
    print(f"overall retained ratio {rep.overall_retained_ratio:.4f}  "
          f"flops proxy {rep.flops_proxy_ratio:.4f}")
    print(f"{'chunk':>5} {'frames':>9} {'tokens':>11} {'r_v':>7} {'m_a':>7} {'R_a':>7} {'audio':>7}")
    for p in rep.per_chunk:
        print(f"{p['chunk']:>5} {p['f_lo']:>4}-{p['f_hi']:<4} {p['t_lo']:>5}-{p['t_hi']:<5} "
              f"{p['r_v']:>7.4f} {p['m_a']:>7.4f} {p['R_a']:>7.4f} {p['audio_retained_ratio']:>7.4f}")
    return 0


def _cmd_viz(args) -> int:
    video, audio, stored = load_container(args.input)
    params = _resolve_params(stored, args.params)
    result = run_pipeline(video, audio, params, banded=args.banded)
    export_retention_map(result, args.output, args.format)
    print(f"wrote {args.format} retention map to {args.output}")
    return 0


def _cmd_sweep(args) -> int:
    video, audio, stored = load_container(args.input)
    params = _resolve_params(stored, args.params)
    grid = _read_json(args.grid)
    if not isinstance(grid, dict):
        raise ConfigError("grid file must hold an object of name -> list of values")
    rows = sweep(video, audio, grid, params, constant_budget=args.constant_budget,
                 banded=args.banded)
    keys = list(rows[0]) if rows else []
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.output:
            out.close()
    return 0


def _add_banded(p) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--banded", dest="banded", action="store_true", default=True,
                   help="restrict the DP to a diagonal band (default)")
    g.add_argument("--exact", dest="banded", action="store_false",
                   help="run the full DP without the band")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avcompress", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic scenario as an ORTC file")
    p.add_argument("output")
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--grid-h", type=int, default=8)
    p.add_argument("--grid-w", type=int, default=8)
    p.add_argument("--audio-tokens", type=int, default=800)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--events", type=int, default=4)
    p.add_argument("--jitter", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--buckets", type=int, default=None)
    p.add_argument("--params", help="JSON file of hyperparameter overrides")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("compress", help="compress an ORTC file")
    p.add_argument("input")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--output", "-o", help="compressed ORTC path")
    p.add_argument("--params", help="JSON file of hyperparameter overrides")
    p.add_argument("--chunking", help="write the refined chunking as JSON")
    p.add_argument("--traces", help="write per-chunk merge traces as JSON")
    _add_banded(p)
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("oracle-check", help="DP against brute force on a random instance")
    p.add_argument("--frames", type=int, default=6)
    p.add_argument("--tokens", type=int, default=18)
    p.add_argument("--lambda-c", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("report", help="pretty-print a report JSON")
    p.add_argument("input")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("viz", help="export a retention map")
    p.add_argument("input")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--format", choices=("csv", "svg"), default="csv")
    p.add_argument("--params", help="JSON file of hyperparameter overrides")
    _add_banded(p)
    p.set_defaults(func=_cmd_viz)

    p = sub.add_parser("sweep", help="run a hyperparameter grid")
    p.add_argument("input")
    p.add_argument("--grid", required=True, help="JSON object: name -> list of values")
    p.add_argument("--constant-budget", type=float, default=None,
                   help="tune rho_v per grid point to hit this overall retained ratio")
    p.add_argument("--output", "-o", help="CSV path (stdout if omitted)")
    p.add_argument("--params", help="JSON file of hyperparameter overrides")
    _add_banded(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AVCompressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError, KeyError) as exc:
        # malformed params or report files surface here
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
