"""Acceptance criteria. Each test prints one PASS/FAIL line (run with ``-s`` to see them)."""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import time
from collections import defaultdict

import numpy as np
import pytest

from avcompress import (BadMagicError, BandInfeasibleError, CostModel, HyperParams,
                        InvariantViolationError, ScenarioSpec, TruncatedPayloadError,
                        VersionMismatchError, audio_budget, build_field, compress_audio_chunk,
                        compress_video_chunk, flops_proxy, generate_scenario, kv_reuse_amortized,
                        refine_chunks_bruteforce, refine_chunks_dp, run_pipeline)
from avcompress.container import decode, encode
from avcompress.cpcr import admissible_mask, native_chunking, segmentation_score
from avcompress.errors import ConfigError
from avcompress.export import retention_csv
from avcompress.saac import ImportanceScores
from avcompress.streams import AudioStream, VideoStream

from oracles import best_segmentation, random_dp_instance

N_DP_INSTANCES = 200


def verdict(n: int, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def dp_instances():
    rng = np.random.default_rng(20240601)
    return [random_dp_instance(rng) for _ in range(N_DP_INSTANCES)]


def test_c1_dp_matches_exhaustive_search(dp_instances):
    start = time.perf_counter()
    mismatches, indep = [], []
    for k, (fld, params, _) in enumerate(dp_instances):
        dp = refine_chunks_dp(fld, params, banded=False)
        brute = refine_chunks_bruteforce(fld, params)
        if dp.score != brute.score and not (math.isinf(dp.score) and math.isinf(brute.score)):
            mismatches.append((k, "score", dp.score, brute.score))
        elif dp.ends != brute.ends:
            mismatches.append((k, "ends", dp.ends, brute.ends))
        # test-side enumeration with directly computed block means
        score, ends = best_segmentation(fld.sim, fld.mask, (params.sv_min, params.sv_max),
                                        (params.sa_min, params.sa_max), params.lambda_c)
        if math.isfinite(score) and abs(score - dp.score) > 1e-9:
            indep.append((k, score, dp.score))
    elapsed = time.perf_counter() - start
    ok = not mismatches and not indep and elapsed < 60
    verdict(1, ok, f"{N_DP_INSTANCES} instances, {len(mismatches)} DP/brute mismatches, "
                   f"{len(indep)} disagreements with the test-side oracle, {elapsed:.1f}s")


def test_c2_banded_dp_is_sound(dp_instances):
    in_band = out_band = raised = 0
    failures = []
    for k, (fld, params, _) in enumerate(dp_instances):
        exact = refine_chunks_dp(fld, params, banded=False)
        adm = admissible_mask(fld.num_frames, fld.num_tokens, params)
        inside = all(adm[u, q] for u, q in exact.ends)
        try:
            banded = refine_chunks_dp(fld, params, banded=True)
        except BandInfeasibleError:
            raised += 1
            if inside:
                failures.append((k, "raised although the optimum is in band"))
            else:
                out_band += 1
            continue
        if inside:
            in_band += 1
            if banded.ends != exact.ends or banded.score != exact.score:
                failures.append((k, "banded result differs from exact"))
        else:
            out_band += 1
            failures.append((k, "optimum out of band but no error raised"))
    verdict(2, not failures, f"{in_band} in-band matches, {out_band} out-of-band "
                             f"({raised} raised), failures={failures[:3]}")


BOUNDARY_PARAMS = HyperParams(sv_min=1, sv_max=4, sa_min=1, sa_max=12)


def _bounds_admit(truth, F, N, p) -> bool:
    fv = [0] + truth["video"] + [F]
    fa = [0] + truth["audio"] + [N]
    for e in range(len(fv) - 1):
        f, t = fv[e + 1] - fv[e], fa[e + 1] - fa[e]
        lo = max(-(-f // p.sv_max), -(-t // p.sa_max))
        hi = min(f // p.sv_min, t // p.sa_min)
        if lo > hi:
            return False
    return True


def test_c3_boundary_recovery():
    start = time.perf_counter()
    hits = admitted = 0
    misses = []
    for seed in range(100):
        spec = ScenarioSpec(num_frames=32, grid_h=2, grid_w=2, num_audio_tokens=96, dim=16,
                            num_events=2 + seed % 3, boundary_jitter=2, noise_sigma=0.0, seed=seed)
        video, audio, truth = generate_scenario(spec, BOUNDARY_PARAMS)
        assert _bounds_admit(truth, 32, 96, BOUNDARY_PARAMS), f"seed {seed}: bounds exclude the truth"
        admitted += 1
        field = build_field(video, audio, BOUNDARY_PARAMS.neighborhood_mode)
        chunking = refine_chunks_dp(field, BOUNDARY_PARAMS)
        starts = {(c.f_lo - 1, c.t_lo - 1) for c in chunking.chunks}
        if all((v, a) in starts for v, a in zip(truth["video"], truth["audio"])):
            hits += 1
        else:
            misses.append(seed)
    elapsed = time.perf_counter() - start
    rate = hits / admitted
    verdict(3, rate >= 0.95 and elapsed < 30,
            f"recovered {hits}/{admitted} ({rate:.0%}), misses={misses[:5]}, {elapsed:.1f}s")


def test_c4_refined_never_worse_than_native():
    rng = np.random.default_rng(7)
    checked = violations = 0
    worst = math.inf
    while checked < 100:
        F = int(rng.integers(12, 33))
        N = int(rng.integers(60, 301))
        params = HyperParams(sv_min=2, sv_max=5, sa_min=10, sa_max=30,
                             lambda_c=float(rng.choice([0.0, 0.02, 0.2])))
        spec = ScenarioSpec(num_frames=F, grid_h=2, grid_w=2, num_audio_tokens=N, dim=16,
                            num_events=int(rng.integers(1, 4)), boundary_jitter=2,
                            noise_sigma=float(rng.uniform(0.0, 0.5)), seed=int(rng.integers(1 << 30)))
        try:
            video, audio, _ = generate_scenario(spec, params)
        except ConfigError:
            continue  # native bucketing infeasible under these bounds
        field = build_field(video, audio, params.neighborhood_mode)
        native = native_chunking(video, audio, field, params.lambda_c)
        refined = refine_chunks_dp(field, params)
        gap = (segmentation_score(refined, field, params.lambda_c)
               - segmentation_score(native, field, params.lambda_c))
        worst = min(worst, gap)
        violations += gap < 0
        checked += 1
    verdict(4, violations == 0, f"{checked} scenarios, {violations} violations, smallest gap {worst:.3g}")


def _random_chunk(rng):
    n = int(rng.integers(1, 6))
    h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    d = 16
    kind = rng.integers(3)
    if kind == 0:
        frames = rng.standard_normal((n, h, w, d))
    else:
        base = rng.standard_normal((1, 1, 1, d)) + (rng.standard_normal((n, 1, 1, d)) if kind == 2 else 0)
        frames = base + rng.uniform(0.0, 0.6) * rng.standard_normal((n, h, w, d))
    return frames


def test_c5_tsst_structure():
    params = HyperParams()
    problems = []
    const = np.broadcast_to(np.arange(1.0, 17.0), (4, 4, 4, 16))
    res = compress_video_chunk(const, params)
    if res.r_v_pre_clamp * res.num_tokens != 1:
        problems.append(f"constant chunk kept {res.r_v_pre_clamp * res.num_tokens} pre-clamp")
    eye = np.eye(64).reshape(4, 4, 4, 64)  # every patch orthogonal to every other
    res = compress_video_chunk(eye, params)
    if res.r_v_pre_clamp != 1.0:
        problems.append(f"orthogonal checkerboard kept r_v={res.r_v_pre_clamp} pre-clamp")

    rng = np.random.default_rng(11)
    out_of_window = 0
    for _ in range(100):
        frames = _random_chunk(rng)
        n, h, w, _ = frames.shape
        res = compress_video_chunk(frames, params)
        total = n * h * w
        surv = sum(s.weight for f in res.retained_nodes for s in f)
        parts = sum(s.node.weight + sum(a.weight for a in s.absorbed)
                    for f in res.retained_nodes for s in f)
        if surv != total or parts != total:
            problems.append(f"weights {surv}/{parts} != {total}")
        if total >= 32 and not params.v_min <= res.r_v <= params.v_max:
            out_of_window += 1
    if out_of_window:
        problems.append(f"{out_of_window} chunks outside [{params.v_min}, {params.v_max}]")
    verdict(5, not problems, f"structure checks, problems={problems[:3]}")


# (rho_a, rho_v, beta, a_min, a_max, R_v) -> m_a, worked out by hand
BUDGET_TABLE = [
    ((0.3, 0.6, 0.5, 0.1, 0.9, 0.0), 0.5),
    ((0.3, 0.6, 0.5, 0.1, 0.9, 0.2), 0.4),
    ((0.3, 0.6, 0.5, 0.1, 0.9, 0.4), 0.3),
    ((0.3, 0.6, 0.5, 0.1, 0.9, 0.6), 0.2),
    ((0.3, 0.6, 0.5, 0.1, 0.9, 0.9), 0.1),
    ((0.3, 0.6, 0.5, 0.1, 0.9, 1.0), 0.1),
    ((0.9, 0.6, 0.5, 0.1, 0.9, 0.0), 0.9),
    ((0.9, 0.6, 0.5, 0.1, 0.9, 0.4), 0.9),
    ((0.9, 0.6, 0.5, 0.1, 0.9, 1.0), 0.6),
    ((0.2, 0.2, 1.0, 0.05, 0.95, 0.0), 0.95),
    ((0.2, 0.2, 1.0, 0.05, 0.95, 0.5), 0.5),
    ((0.2, 0.2, 1.0, 0.05, 0.95, 1.0), 0.05),
]


class _Video:
    def __init__(self, r_v, reps):
        self.r_v, self.merged_reps = r_v, reps


def test_c6_audio_formulas():
    problems = []
    for (rho_a, rho_v, beta, a_min, a_max, r_v), want in BUDGET_TABLE:
        p = HyperParams(rho_a=rho_a, rho_v=rho_v, beta=beta, a_min=a_min, a_max=a_max)
        m_a, R_a = audio_budget(p, r_v)
        if abs(m_a - want) > 1e-12 or abs(R_a - (1 - want)) > 1e-12:
            problems.append((rho_a, rho_v, beta, r_v, m_a, want))

    rng = np.random.default_rng(3)
    params = HyperParams()
    merge_sets = 0
    for _ in range(100):
        n, d = int(rng.integers(5, 120)), 12
        steps = rng.standard_normal((n, d)) * rng.uniform(0.05, 1.5)
        tokens = np.cumsum(steps, axis=0) + rng.standard_normal(d)
        reps = rng.standard_normal((int(rng.integers(0, 6)), d))
        res = compress_audio_chunk(tokens, ImportanceScores(rng.uniform(0, 1, n)),
                                   _Video(float(rng.uniform(0, 1)), reps), params)
        out = dict(zip(res.retained_index, res.merged_reps))
        for h, members in res.merge_sets.items():
            w = res.merge_weights[h]
            if not members:
                continue
            merge_sets += 1
            if abs(w.sum() - 1) > 1e-9:
                problems.append(f"weights sum {w.sum()}")
            coeffs = np.concatenate([[1.0], w]) / (1.0 + w.sum())
            if abs(coeffs.sum() - 1) > 1e-9 or (coeffs < 0).any():
                problems.append(f"coefficients {coeffs}")
            rebuilt = coeffs @ tokens[[h] + list(members)]
            if not np.allclose(rebuilt, out[h], atol=1e-9, rtol=0):
                problems.append(f"anchor {h} is not the stated convex combination")
    verdict(6, not problems, f"12 budget rows, {merge_sets} merge sets, problems={problems[:3]}")


def test_c7_budget_monotone_in_video_retention():
    rng = np.random.default_rng(5)
    grid = np.linspace(0.0, 1.0, 2001)
    bad = 0
    for _ in range(50):
        a_lo, a_hi = np.sort(rng.uniform(0, 1, 2))
        p = HyperParams(rho_a=float(rng.uniform()), rho_v=float(rng.uniform()),
                        beta=float(rng.uniform()), a_min=float(a_lo), a_max=float(a_hi))
        m, R = np.array([audio_budget(p, float(r)) for r in grid]).T
        bad += bool((np.diff(m) > 0).any() or (np.diff(R) < 0).any())
    verdict(7, bad == 0, f"50 parameter sets over {grid.size} R_v values, {bad} non-monotone")


def test_c8_report_consistency_and_determinism():
    video, audio, _ = generate_scenario(ScenarioSpec(seed=3))
    params = HyperParams()
    first = run_pipeline(video, audio, params, threads=1)
    second = run_pipeline(video, audio, params, threads=4)
    problems = []
    if first.report.to_json() != second.report.to_json():
        problems.append("report JSON differs between runs")
    ortc = [encode(*r.compressed.to_streams(), params) for r in (first, second)]
    if ortc[0] != ortc[1]:
        problems.append("compressed ORTC differs between runs")

    per = first.report.per_chunk
    before = sum(p["video_tokens_before"] + p["audio_tokens_before"] for p in per)
    after = sum(p["video_tokens_after"] + p["audio_tokens_after"] for p in per)
    if first.report.overall_retained_ratio != after / before:
        problems.append("overall ratio is not the per-chunk aggregate")

    counts = defaultdict(lambda: [0, 0])
    for row in csv.DictReader(io.StringIO(retention_csv(first))):
        c = counts[(int(row["chunk_id"]), row["modality"])]
        c[0] += int(row["retained"])
        c[1] += 1
    for p in per:
        v, a = counts[(p["chunk"], "video")], counts[(p["chunk"], "audio")]
        if v[0] / v[1] != p["r_v"] or a[0] / a[1] != p["audio_retained_ratio"]:
            problems.append(f"chunk {p['chunk']}: CSV does not re-aggregate")
    verdict(8, not problems, f"{len(per)} chunks, problems={problems[:3]}")


def test_c9_cost_model():
    model = CostModel()
    quad = CostModel(c_lin=0.0, c_quad=1.0)
    problems = []
    for n in (1, 7, 1000, 123457):
        if flops_proxy(n, n, model) != 1.0:
            problems.append(f"flops_proxy({n}, {n}) != 1")
    if flops_proxy(2000, 1000, quad) != 0.25:
        problems.append("quadratic halving is not 0.25")
    costs = [kv_reuse_amortized(k, model, 5000) for k in range(1, 2001)]
    if any(b > a for a, b in zip(costs, costs[1:])):
        problems.append("amortized cost increases with k")
    tail = kv_reuse_amortized(10**6, model, 5000)
    rel = abs(tail - model.decode_cost_per_turn) / model.decode_cost_per_turn
    if rel > 1e-3:
        problems.append(f"k=1e6 is {rel:.2%} away from the decode cost")
    verdict(9, not problems, f"relative gap at k=1e6 {rel:.2e}, problems={problems}")


def _with_header(blob: bytes, mutate) -> bytes:
    (hlen,) = struct.unpack_from("<I", blob, 8)
    header = json.loads(blob[12:12 + hlen])
    mutate(header)
    new = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return blob[:8] + struct.pack("<I", len(new)) + new + blob[12 + hlen:]


def test_c10_container_robustness():
    video, audio, truth = generate_scenario(ScenarioSpec(num_frames=8, num_audio_tokens=200, dim=8),
                                            HyperParams(sa_min=20, sa_max=60, sv_min=1, sv_max=4))
    blob = encode(video, audio, HyperParams(), truth)
    problems = []
    v2, a2, p2, t2 = decode(blob)
    if encode(v2, a2, p2, t2) != blob:
        problems.append("round trip is not byte-exact")

    def flip_bucket(h):
        h["frame_bucket"][1], h["frame_bucket"][-1] = h["frame_bucket"][-1], h["frame_bucket"][1]

    def rewind_tokens(h):
        h["token_bucket"][-1] = 0

    cases = [
        ("bad magic", b"XRTC" + blob[4:], BadMagicError, None),
        ("version", blob[:4] + b"0002" + blob[8:], VersionMismatchError, None),
        ("truncated header", blob[:20], TruncatedPayloadError, None),
        ("truncated payload", blob[:-5], TruncatedPayloadError, None),
        ("non-monotone frame buckets", _with_header(blob, flip_bucket), InvariantViolationError, "frame_bucket"),
        ("non-monotone token buckets", _with_header(blob, rewind_tokens), InvariantViolationError, "token_bucket"),
    ]
    for name, data, err, fld in cases:
        try:
            decode(data)
        except err as exc:
            if fld is not None and exc.field != fld:
                problems.append(f"{name}: blamed {exc.field}")
        except Exception as exc:  # noqa: BLE001
            problems.append(f"{name}: {type(exc).__name__}")
        else:
            problems.append(f"{name}: accepted")
    verdict(10, not problems, f"round trip + {len(cases)} corruptions, problems={problems}")
