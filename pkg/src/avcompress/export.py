"""Retention maps (CSV / SVG) and per-chunk JSON traces."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .errors import ConfigError
from .pipeline import PipelineResult

CSV_FIELDS = ("chunk_id", "modality", "position", "retained", "representative_id")


def retention_rows(result: PipelineResult) -> list[tuple[int, str, int, int, int]]:
    """One row per input token.

    ``position`` is the global patch index (frame-major) for video and the
    global token index for audio. ``representative_id`` is the row of the
    output sequence (chunk by chunk, video then audio) that carries the
    token, or -1 if the token was dropped. A video token is marked retained
    only at the placement cell of a surviving node, so per-chunk retained
    counts equal the number of output representatives.
    """
    rows = []
    offset = 0
    for g, out in enumerate(result.outcomes):
        vid = out.video
        n_frames, h, w = vid.token_mask.shape
        base = (out.chunk.f_lo - 1) * h * w
        flat_rep = vid.rep_index.reshape(-1)
        flat_anchor = vid.anchor_mask.reshape(-1)
        for k in range(n_frames * h * w):
            rows.append((g, "video", base + k, int(flat_anchor[k]), offset + int(flat_rep[k])))
        offset += vid.num_survivors
        rep = out.audio.representative_of()
        for k in range(len(rep)):
            rid = offset + int(rep[k]) if rep[k] >= 0 else -1
            rows.append((g, "audio", out.chunk.t_lo - 1 + k, int(out.audio.retained_mask[k]), rid))
        offset += len(out.audio.retained_index)
    return rows


def retention_csv(result: PipelineResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    writer.writerows(retention_rows(result))
    return buf.getvalue()


def retention_svg(result: PipelineResult, cell: int = 6) -> str:
    """Per-frame patch grids above an audio timeline.

    Dark cells place a surviving representative, light cells are covered by
    one, gray cells were merged into an earlier frame. On the timeline red
    ticks are retained audio tokens and black marks are retained anchors.
    """
    outs = result.outcomes
    if not outs:
        return '<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"></svg>\n'
    _, h, w = outs[0].video.token_mask.shape
    gap = cell
    frame_w = w * cell + gap
    total_frames = sum(o.video.token_mask.shape[0] for o in outs)
    width = max(total_frames * frame_w + (len(outs) + 1) * gap, 200)
    grid_h = h * cell
    timeline_y = grid_h + 4 * gap
    height = timeline_y + 5 * gap
    n_audio = sum(len(o.audio.retained_mask) for o in outs)
    tick_w = (width - 2 * gap) / max(n_audio, 1)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    x = gap
    for g, out in enumerate(outs):
        vid = out.video
        parts.append(f'<g class="chunk" data-chunk="{g}" data-rv="{vid.r_v:.6f}" '
                     f'data-ra="{out.audio.R_a:.6f}">')
        for t in range(vid.token_mask.shape[0]):
            for r in range(h):
                for c in range(w):
                    if vid.anchor_mask[t, r, c]:
                        fill = "#1f77b4"
                    elif vid.token_mask[t, r, c]:
                        fill = "#aec7e8"
                    else:
                        fill = "#bbbbbb"
                    parts.append(f'<rect x="{x + c * cell}" y="{gap + r * cell}" width="{cell - 1}" '
                                 f'height="{cell - 1}" fill="{fill}"/>')
            x += frame_w
        parts.append("</g>")
        x += gap
    parts.append(f'<line x1="{gap}" y1="{timeline_y}" x2="{width - gap}" y2="{timeline_y}" '
                 f'stroke="black" stroke-width="1"/>')
    anchors_global = set()
    for out in outs:
        base = out.chunk.t_lo - 1
        anchors_global.update(base + a for a in out.audio.anchors)
    pos = 0
    for out in outs:
        for k, kept in enumerate(out.audio.retained_mask):
            tx = gap + pos * tick_w
            color = "#d62728" if kept else "#bbbbbb"
            parts.append(f'<rect x="{tx:.3f}" y="{timeline_y - gap}" width="{max(tick_w - 0.2, 0.2):.3f}" '
                         f'height="{gap}" fill="{color}"/>')
            if pos in anchors_global:
                parts.append(f'<line x1="{tx:.3f}" y1="{timeline_y}" x2="{tx:.3f}" '
                             f'y2="{timeline_y + 2 * gap}" stroke="black" stroke-width="1"/>')
            pos += 1
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_retention_map(result: PipelineResult, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        text = retention_csv(result)
    elif fmt == "svg":
        text = retention_svg(result)
    else:
        raise ConfigError(f"unknown retention-map format {fmt!r}; use csv or svg")
    Path(path).write_text(text)


def chunk_traces(result: PipelineResult) -> list[dict]:
    return [{"chunk": g, "video": o.video.trace(), "audio": o.audio.trace()}
            for g, o in enumerate(result.outcomes)]


def write_traces(result: PipelineResult, path) -> None:
    Path(path).write_text(json.dumps(chunk_traces(result), sort_keys=True, indent=2) + "\n")
