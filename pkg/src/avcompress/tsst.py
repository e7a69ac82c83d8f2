"""Quadtree spatial selection and cross-frame merging of video tokens.

Each frame becomes a region tree whose node representative is the mean of the
patch tokens it covers. A top-down pass keeps a node when every child is at
least ``tau_s``-similar to it. Nodes of frame t are then folded into the
survivors of frame t-1 when they overlap spatially and are ``tau_t``-similar.
Finally the retention ratio is pushed back inside ``[v_min, v_max]`` by
coarsening or refining the spatial cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import HyperParams
from .correspondence import cosine, cosine_matrix

Rect = tuple[int, int, int, int]


@dataclass(eq=False)
class QuadNode:
    frame: int
    rect: Rect  # row_lo, row_hi, col_lo, col_hi (inclusive)
    level: int
    rep: np.ndarray
    weight: int
    children: list["QuadNode"] = field(default_factory=list)
    parent: "QuadNode | None" = field(default=None, repr=False)
    min_child_cos: float = 1.0

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def raster(self) -> tuple[int, int]:
        return self.rect[0], self.rect[2]

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


def _halves(lo: int, hi: int) -> list[tuple[int, int]]:
    if lo == hi:
        return [(lo, hi)]
    mid = lo + (hi - lo + 1 + 1) // 2  # ceil half goes first
    return [(lo, mid - 1), (mid, hi)]


def build_hierarchy(frame_tokens, frame: int = 0) -> QuadNode:
    """Region tree over an ``(h, w, d)`` patch grid."""
    grid = np.asarray(frame_tokens, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ValueError(f"expected a non-empty (h, w, d) grid, got shape {grid.shape}")

    def make(r0: int, r1: int, c0: int, c1: int, level: int) -> QuadNode:
        if r0 == r1 and c0 == c1:
            return QuadNode(frame, (r0, r1, c0, c1), level, grid[r0, c0].copy(), 1)
        kids = [make(a, b, c, d, level + 1)
                for a, b in _halves(r0, r1) for c, d in _halves(c0, c1)]
        weight = sum(k.weight for k in kids)
        rep = sum(k.weight * k.rep for k in kids) / weight
        node = QuadNode(frame, (r0, r1, c0, c1), level, rep, weight, kids)
        for k in kids:
            k.parent = node
        node.min_child_cos = min(cosine(rep, k.rep) for k in kids)
        return node

    h, w = grid.shape[:2]
    return make(0, h - 1, 0, w - 1, 0)


def spatial_select(tree: QuadNode, tau_s: float) -> list[QuadNode]:
    """Coarsest cut whose nodes all pass the parent-child similarity test."""
    out: list[QuadNode] = []

    def visit(node: QuadNode) -> None:
        if node.is_leaf or node.min_child_cos >= tau_s:
            out.append(node)
        else:
            for child in node.children:
                visit(child)

    visit(tree)
    return sorted(out, key=lambda n: n.raster)


def _rect_arrays(nodes: Sequence[QuadNode]) -> np.ndarray:
    return np.array([n.rect for n in nodes], dtype=np.int64).reshape(-1, 4)


def intersection_areas(cur: Sequence[QuadNode], prev: Sequence[QuadNode]) -> np.ndarray:
    a, b = _rect_arrays(cur)[:, None, :], _rect_arrays(prev)[None, :, :]
    rows = np.minimum(a[..., 1], b[..., 1]) - np.maximum(a[..., 0], b[..., 0]) + 1
    cols = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 2], b[..., 2]) + 1
    return np.clip(rows, 0, None) * np.clip(cols, 0, None)


def _reps(nodes: Sequence[QuadNode]) -> np.ndarray:
    return np.stack([n.rep for n in nodes])


def _match(cur: Sequence[QuadNode], prev: Sequence[QuadNode], tau_t: float):
    """For each node of ``cur`` the index of its merge target in ``prev`` or -1."""
    if not cur or not prev:
        return np.full(len(cur), -1, dtype=np.int64)
    inter = intersection_areas(cur, prev)
    cos = cosine_matrix(_reps(cur), _reps(prev))
    ok = (inter > 0) & (cos >= tau_t)
    target = np.full(len(cur), -1, dtype=np.int64)
    for j in np.flatnonzero(ok.any(axis=1)):
        cands = np.flatnonzero(ok[j])
        # largest overlap, then larger cosine, then earliest raster position
        target[j] = min(cands, key=lambda i: (-inter[j, i], -cos[j, i], i))
    return target


@dataclass(eq=False)
class Survivor:
    node: QuadNode
    rep: np.ndarray
    weight: int
    absorbed: list[QuadNode] = field(default_factory=list)

    @property
    def frame(self) -> int:
        return self.node.frame

    @property
    def rect(self) -> Rect:
        return self.node.rect


@dataclass
class TemporalResult:
    survivors: list[Survivor]
    merge_map: dict[tuple[int, int], int]  # (frame offset, node index) -> survivor index
    owners: list[list[int]]  # per frame, survivor index owning each node


def temporal_merge(frames_nodes: Sequence[Sequence[QuadNode]], tau_t: float) -> TemporalResult:
    """Fold each frame's nodes into survivors of the previous frame.

    The similarity test compares against the previous frame's own node, and
    a merge adds the node to whichever survivor that node belongs to, so a
    static region collapses onto its first appearance.
    """
    survivors: list[Survivor] = []
    merge_map: dict[tuple[int, int], int] = {}
    owners: list[list[int]] = []
    for t, nodes in enumerate(frames_nodes):
        target = _match(nodes, frames_nodes[t - 1], tau_t) if t else np.full(len(nodes), -1)
        owned = []
        for j, node in enumerate(nodes):
            if target[j] < 0:
                survivors.append(Survivor(node, node.rep.copy(), node.weight))
                owned.append(len(survivors) - 1)
                continue
            s = owners[t - 1][target[j]]
            surv = survivors[s]
            total = surv.weight + node.weight
            surv.rep = (surv.weight * surv.rep + node.weight * node.rep) / total
            surv.weight = total
            surv.absorbed.append(node)
            merge_map[(t, j)] = s
            owned.append(s)
        owners.append(owned)
    return TemporalResult(survivors, merge_map, owners)


@dataclass
class VideoCompressionResult:
    retained_nodes: list[list[Survivor]]
    spatial_nodes: list[list[QuadNode]]
    token_mask: np.ndarray  # (frames, h, w): patch lies under a surviving node
    rep_index: np.ndarray  # (frames, h, w): survivor id representing each patch
    anchor_mask: np.ndarray  # (frames, h, w): patch is the placement cell of a survivor
    merged_reps: np.ndarray
    merge_map: dict[tuple[int, int], int]
    r_v: float
    r_v_pre_clamp: float
    window: tuple[float, float]
    heterogeneity: float
    num_tokens: int
    notes: list[str] = field(default_factory=list)

    @property
    def num_survivors(self) -> int:
        return int(self.merged_reps.shape[0])

    def trace(self) -> dict:
        return {
            "retained_rects": [[list(s.rect) for s in frame] for frame in self.retained_nodes],
            "spatial_rects": [[list(n.rect) for n in frame] for frame in self.spatial_nodes],
            "merge_edges": [[t, j, s] for (t, j), s in sorted(self.merge_map.items())],
            "r_v_pre_clamp": self.r_v_pre_clamp,
            "r_v": self.r_v,
            "window": list(self.window),
            "heterogeneity": self.heterogeneity,
            "notes": list(self.notes),
        }


def chunk_heterogeneity(trees: Sequence[QuadNode]) -> float:
    """Mean parent-child dissimilarity over internal nodes, in [0, 1]."""
    vals = [min(1.0, max(0.0, 1.0 - n.min_child_cos))
            for tree in trees for n in tree.walk() if not n.is_leaf]
    return float(np.mean(vals)) if vals else 0.0


def clamp_window(params: HyperParams, heterogeneity: float) -> tuple[float, float]:
    """Target window used when the ratio leaves ``[v_min, v_max]``.

    With modulation on, the window shrinks by ``alpha`` of its width and its
    centre tilts toward ``v_max`` for heterogeneous chunks, staying inside
    the hard bounds.
    """
    lo, hi = params.v_min, params.v_max
    if not params.alpha_modulation:
        return lo, hi
    a = min(params.alpha, 1.0)
    width = hi - lo
    return lo + a * heterogeneity * width, hi - a * (1.0 - heterogeneity) * width


class _Cut:
    """Mutable per-frame spatial cut with cached merge status."""

    def __init__(self, cuts: list[list[QuadNode]], tau_t: float):
        self.cuts = [sorted(c, key=lambda n: n.raster) for c in cuts]
        self.tau_t = tau_t
        self.merged = [self._flags(t) for t in range(len(cuts))]

    def _flags(self, t: int) -> int:
        if t == 0:
            return 0
        return int((_match(self.cuts[t], self.cuts[t - 1], self.tau_t) >= 0).sum())

    def count(self) -> int:
        return sum(len(c) for c in self.cuts) - sum(self.merged)

    def try_replace(self, t: int, remove: list[QuadNode], add: list[QuadNode], accept) -> bool:
        before = self.count()
        old_cut, old_m = self.cuts[t], self.merged[t:t + 2]
        drop = set(map(id, remove))
        self.cuts[t] = sorted([n for n in old_cut if id(n) not in drop] + add,
                              key=lambda n: n.raster)
        for k in (t, t + 1):
            if k < len(self.cuts):
                self.merged[k] = self._flags(k)
        if accept(before, self.count()):
            return True
        self.cuts[t] = old_cut
        self.merged[t:t + len(old_m)] = old_m
        return False


def _clamp(cut: _Cut, lo_count: int, hi_count: int) -> None:
    while cut.count() > hi_count:
        cands = []
        for t, nodes in enumerate(cut.cuts):
            members = set(map(id, nodes))
            parents = {id(n.parent): n.parent for n in nodes if n.parent is not None}
            for p in parents.values():
                if all(id(c) in members for c in p.children):
                    cands.append((-p.min_child_cos, t, p.raster, p))
        cands.sort(key=lambda c: c[:3])
        for _, t, _, p in cands:
            if cut.try_replace(t, p.children, [p], lambda b, a: lo_count <= a < b):
                break
        else:
            return
    while cut.count() < lo_count:
        cands = [(n.min_child_cos, t, n.raster, n)
                 for t, nodes in enumerate(cut.cuts) for n in nodes if not n.is_leaf]
        cands.sort(key=lambda c: c[:3])
        for _, t, _, n in cands:
            if cut.try_replace(t, [n], list(n.children), lambda b, a: b < a <= hi_count):
                break
        else:
            return


def compress_video_chunk(frames, params: HyperParams) -> VideoCompressionResult:
    """Compress an ``(n_frames, h, w, d)`` block of patch tokens."""
    frames = np.asarray(frames, dtype=np.float64)
    n_frames, h, w, d = frames.shape
    total = n_frames * h * w
    trees = [build_hierarchy(frames[k], k) for k in range(n_frames)]
    cut = _Cut([spatial_select(tree, params.tau_s) for tree in trees], params.tau_t)
    pre = cut.count() / total
    het = chunk_heterogeneity(trees)
    window = clamp_window(params, het)
    notes: list[str] = []

    if pre > params.v_max or pre < params.v_min:
        lo_count = max(1, math.ceil(window[0] * total - 1e-9))
        hi_count = max(lo_count, math.floor(window[1] * total + 1e-9))
        _clamp(cut, lo_count, hi_count)
    final_count = cut.count()
    r_v = final_count / total
    if not params.v_min <= r_v <= params.v_max:
        notes.append(f"retention bound infeasible: reached r_v={r_v:.4f} "
                     f"for [{params.v_min}, {params.v_max}] with {total} tokens")

    temporal = temporal_merge(cut.cuts, params.tau_t)
    survivors = temporal.survivors
    retained = [[] for _ in range(n_frames)]
    for s in survivors:
        retained[s.frame].append(s)
    order = sorted(range(len(survivors)), key=lambda i: (survivors[i].frame, survivors[i].node.raster))
    rank = {old: new for new, old in enumerate(order)}
    reps = (np.stack([survivors[i].rep for i in order]) if order else np.zeros((0, d)))

    token_mask = np.zeros((n_frames, h, w), dtype=bool)
    anchor_mask = np.zeros((n_frames, h, w), dtype=bool)
    rep_index = np.full((n_frames, h, w), -1, dtype=np.int64)
    for t, nodes in enumerate(cut.cuts):
        for j, node in enumerate(nodes):
            r0, r1, c0, c1 = node.rect
            sid = rank[temporal.owners[t][j]]
            rep_index[t, r0:r1 + 1, c0:c1 + 1] = sid
            if (t, j) not in temporal.merge_map:
                token_mask[t, r0:r1 + 1, c0:c1 + 1] = True
                anchor_mask[t, r0, c0] = True

    merge_map = {key: rank[s] for key, s in temporal.merge_map.items()}
    return VideoCompressionResult(
        retained_nodes=[sorted(f, key=lambda s: s.node.raster) for f in retained],
        spatial_nodes=[list(c) for c in cut.cuts],
        token_mask=token_mask,
        rep_index=rep_index,
        anchor_mask=anchor_mask,
        merged_reps=reps,
        merge_map=merge_map,
        r_v=r_v,
        r_v_pre_clamp=pre,
        window=window,
        heterogeneity=het,
        num_tokens=total,
        notes=notes,
    )
