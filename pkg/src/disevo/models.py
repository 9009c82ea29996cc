"""Concrete systems: a massless scalar field on triangulated lattices.

Edges carry the weight ``w (φ_s − φ_t)²``.  An equilateral triangle
contributes ``w = 1/4`` per edge, which gives the slab actions below.
Scenario files describing schedules are also read here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernel as K
from .action import QuadraticAction, RoleMap, Slice, build_action
from .evolution import Schedule
from .legendre import PhasePoint
from .local_moves import ExtendedState, MoveSpec, initial_state, momentum_update, transport_constraints

__all__ = [
    "PachnerRun",
    "Scenario",
    "ScenarioError",
    "SlabSpec",
    "cdt_slab_action",
    "edge_action",
    "fixture_names",
    "load_scenario",
    "pachner_move",
    "run_pachner_sequence",
    "strip_adjacency",
    "strip_triangles",
    "triangle_action",
    "vertex_labels",
]

QUARTER = Fraction(1, 4)


def vertex_labels(q: int) -> tuple[str, ...]:
    return tuple(str(i + 1) for i in range(q))


def edge_action(
    prev: Slice,
    next: Slice,
    edges: Iterable[tuple[tuple[str, str], tuple[str, str], object]],
) -> QuadraticAction:
    """Action ``Σ w (φ_u − φ_v)²`` over edges given as ``((side, label), (side, label), w)``.

    ``side`` is ``"prev"`` or ``"next"``.  Self-loops contribute nothing.
    """
    keys = [("prev", lab) for lab in prev.labels] + [("next", lab) for lab in next.labels]
    pos = {k: i for i, k in enumerate(keys)}
    m = len(keys)
    H = K.zeros((m, m))
    for u, v, w in edges:
        i, j = pos[tuple(u)], pos[tuple(v)]
        if i == j:
            continue
        w2 = 2 * K.scalar(w)
        H[i, i] += w2
        H[j, j] += w2
        H[i, j] -= w2
        H[j, i] -= w2
    p = prev.dim
    return build_action(prev, next, A=H[:p, :p], B=H[:p, p:], C=H[p:, p:])


def _triangle_edges(a, b, c, w=QUARTER):
    return [(a, b, w), (b, c, w), (a, c, w)]


def triangle_action(
    next_vertices: Sequence[str] = ("1", "2", "3"),
    prev_vertices: Sequence[str] = (),
    prev_step=0,
    next_step=1,
) -> QuadraticAction:
    """One equilateral triangle, ``¼ Σ_edges (φ_s − φ_t)²``.

    The three vertices are split between the two slices as requested;
    by default all of them are read at the later step.

    >>> from disevo.action import evaluate
    >>> evaluate(triangle_action(), [], [1, 0, 0])
    Fraction(1, 2)
    """
    keys = [("prev", lab) for lab in prev_vertices] + [("next", lab) for lab in next_vertices]
    if len(keys) != 3:
        raise ValueError("a triangle has three vertices")
    prev = Slice(prev_step, prev_vertices)
    nxt = Slice(next_step, next_vertices)
    return edge_action(prev, nxt, _triangle_edges(*keys))


@dataclass(frozen=True, eq=False)
class SlabSpec:
    """One layer of a triangulated strip between two cyclic slices."""

    q_prev: int
    q_next: int
    adjacency: np.ndarray

    def __post_init__(self):
        if self.q_prev < 0 or self.q_next < 0:
            raise ValueError("slice sizes must be non-negative")
        rows = [list(r) for r in self.adjacency] if len(self.adjacency) else []
        if len(rows) != self.q_prev or any(len(r) != self.q_next for r in rows):
            raise ValueError(
                f"adjacency must be {self.q_prev}x{self.q_next}"
            )
        vals = [v for r in rows for v in r]
        for v in vals:
            if isinstance(v, bool) or v not in (0, 1, 2) or int(v) != v:
                raise ValueError("adjacency entries must be 0, 1 or 2")
        arr = np.array([[int(v) for v in r] for r in rows], dtype=int).reshape(self.q_prev, self.q_next)
        object.__setattr__(self, "adjacency", arr)

    def transpose(self) -> "SlabSpec":
        return SlabSpec(self.q_next, self.q_prev, self.adjacency.T)


def _cycle_edges(side: str, labels: Sequence[str]):
    q = len(labels)
    return [((side, labels[i]), (side, labels[(i + 1) % q]), QUARTER) for i in range(q)]


def cdt_slab_action(spec: SlabSpec, step: int = 0, prev_labels=None, next_labels=None) -> QuadraticAction:
    """Scalar-field action of one slab.

    ``½ Σ A_ij (φ_i − φ'_j)²`` over timelike edges plus ``¼ (Δφ)²`` along
    each boundary cycle.  The boundary term is the cyclic neighbor
    coupling; on a cycle of two vertices both neighbors coincide, and on
    a single vertex it vanishes.
    """
    prev_labels = tuple(prev_labels or vertex_labels(spec.q_prev))
    next_labels = tuple(next_labels or vertex_labels(spec.q_next))
    prev, nxt = Slice(step, prev_labels), Slice(step + 1, next_labels)
    edges = _cycle_edges("prev", prev_labels) + _cycle_edges("next", next_labels)
    for i in range(spec.q_prev):
        for j in range(spec.q_next):
            a = int(spec.adjacency[i, j])
            if a:
                edges.append((("prev", prev_labels[i]), ("next", next_labels[j]), Fraction(a, 2)))
    return edge_action(prev, nxt, edges)


def _strip_edges(q_prev: int, q_next: int, pattern: str):
    pattern = pattern.lower()
    if sorted(set(pattern)) not in (["i", "j"], ["i"], ["j"]) or pattern.count("i") != q_prev \
            or pattern.count("j") != q_next:
        raise ValueError(f"pattern needs {q_prev} 'i' steps and {q_next} 'j' steps")
    i = j = 0
    seq = []
    for s in pattern:
        seq.append((i, j, s))
        if s == "i":
            i = (i + 1) % q_prev
        else:
            j = (j + 1) % q_next
    return seq


def strip_adjacency(q_prev: int, q_next: int, pattern: str) -> SlabSpec:
    """Adjacency of the strip traced by a step pattern.

    Starting on the edge between the first vertices of both slices,
    each ``i`` advances along the earlier cycle (an up-pointing triangle)
    and each ``j`` along the later one (a down-pointing triangle).
    """
    A = np.zeros((q_prev, q_next), dtype=int)
    for i, j, _ in _strip_edges(q_prev, q_next, pattern):
        A[i, j] += 1
    return SlabSpec(q_prev, q_next, A)


def strip_triangles(q_prev: int, q_next: int, pattern: str):
    """Triangles of the strip as triples of ``(side, label)`` keys."""
    P, N = vertex_labels(q_prev), vertex_labels(q_next)
    tris = []
    for i, j, s in _strip_edges(q_prev, q_next, pattern):
        if s == "i":
            tris.append((("prev", P[i]), ("prev", P[(i + 1) % q_prev]), ("next", N[j])))
        else:
            tris.append((("prev", P[i]), ("next", N[j]), ("next", N[(j + 1) % q_next])))
    return tris


# -- Pachner and square moves on a cyclic 1D surface ----------------------------

PACHNER_KINDS = {"1-2": "I", "2-1": "II", "square": "III", "2-2-3d": "IV"}


def _fresh(surface: Sequence[str], taken: Iterable[str]) -> str:
    used = set(surface) | set(taken)
    i = 1
    while f"v{i}" in used:
        i += 1
    return f"v{i}"


def pachner_move(
    kind: str,
    surface: Sequence[str],
    position: int,
    new_label: str | None = None,
    taken: Iterable[str] = (),
) -> MoveSpec:
    """Local move on a cyclic surface of vertices.

    ``1-2`` glues a triangle on the edge ``(surface[position],
    surface[position+1])``, creating a vertex.  ``2-1`` glues a
    triangle on the two edges around ``surface[position]`` and removes
    it.  ``square`` replaces ``surface[position]`` by a new vertex
    through a square building block.  ``2-2-3d`` glues a tetrahedron on
    four consecutive vertices and changes no vertex.
    """
    if kind not in PACHNER_KINDS:
        raise ValueError(f"unknown move {kind!r}; expected one of {sorted(PACHNER_KINDS)}")
    surface = tuple(str(s) for s in surface)
    L = len(surface)
    minimum = {"1-2": 2, "2-1": 4, "square": 3, "2-2-3d": 4}[kind]
    if L < minimum:
        raise ValueError(f"{kind} move needs a surface of at least {minimum} vertices, got {L}")
    if not isinstance(position, (int, np.integer)) or not 0 <= position < L:
        raise ValueError(f"invalid position {position} on a surface of {L} vertices")
    at = lambda k: surface[(position + k) % L]  # noqa: E731
    new = new_label or _fresh(surface, taken)
    if kind != "2-1" and kind != "2-2-3d" and new in surface:
        raise ValueError(f"label {new!r} already on the surface")

    if kind == "1-2":
        a, b = at(0), at(1)
        S = triangle_action((a, b, new), (), 0, 1)
        roles = {a: "e", b: "e", new: "n"}
        after = surface[: position + 1] + (new,) + surface[position + 1 :]
    elif kind == "2-1":
        a, vs, b = at(-1), at(0), at(1)
        S = triangle_action((), (a, vs, b), 0, 1)
        roles = {a: "e", b: "e", vs: "o"}
        after = surface[:position] + surface[position + 1 :]
    elif kind == "square":
        a, vs, b = at(-1), at(0), at(1)
        prev, nxt = Slice(0, (vs,)), Slice(1, (a, new, b))
        # S = Σ (φ_i² − φ_i φ_{i+1}) around the cycle vs, a, new, b
        H = K.zeros((4, 4))
        for k in range(4):
            H[k, k] += 2
            H[k, (k + 1) % 4] -= 1
            H[(k + 1) % 4, k] -= 1
        S = build_action(prev, nxt, A=H[:1, :1], B=H[:1, 1:], C=H[1:, 1:])
        roles = {a: "e", b: "e", vs: "o", new: "n"}
        after = surface[:position] + (new,) + surface[position + 1 :]
    else:
        quad = tuple(at(k) for k in range(4))
        if len(set(quad)) != 4:
            raise ValueError("tetrahedron needs four distinct vertices")
        keys = [("next", v) for v in quad]
        edges = [(keys[i], keys[j], QUARTER) for i in range(4) for j in range(i + 1, 4)]
        S = edge_action(Slice(0), Slice(1, quad), edges)
        roles = {v: "e" for v in quad}
        after = surface
    return MoveSpec(PACHNER_KINDS[kind], RoleMap(roles), S, after, f"{kind}@{position}")


@dataclass(frozen=True, eq=False)
class PachnerRun:
    states: tuple[ExtendedState, ...]
    moves: tuple[MoveSpec, ...]
    surfaces: tuple[tuple[str, ...], ...]

    @property
    def counts(self) -> list[int]:
        """Post-constraints on the extended evolving slice, per step."""
        return [len(s.constraints) for s in self.states]

    @property
    def live_counts(self) -> list[int]:
        return [sum(1 for c in s.constraints if c.provenance != "extension") for s in self.states]


def run_pachner_sequence(
    surface: Sequence[str],
    moves: Sequence[tuple[str, int]],
    state: ExtendedState | None = None,
    data: bool = False,
) -> PachnerRun:
    """Apply moves in turn, tracking the post-constraints on the slice.

    Only constraint sets are transported unless ``data`` is set, in
    which case the canonical data are updated too (free values zero).
    """
    surface = tuple(surface)
    if state is None:
        state = initial_state(surface)
    states, specs, surfaces = [state], [], [surface]
    for kind, pos in moves:
        spec = pachner_move(kind, surface, pos, taken=state.labels)
        if data:
            state = momentum_update(spec, state)
        else:
            cons = transport_constraints(spec, state.constraints)
            labels = cons.slice.labels
            pt_slc = cons.slice
            ext = (state.extension - set(spec.new)) | set(spec.old)
            state = ExtendedState(PhasePoint(pt_slc, [0] * len(labels), [0] * len(labels)), cons, ext)
        surface = spec.surface_after
        states.append(state)
        specs.append(spec)
        surfaces.append(surface)
    return PachnerRun(tuple(states), tuple(specs), tuple(surfaces))


# -- scenario files --------------------------------------------------------------

class ScenarioError(ValueError):
    """Malformed or inconsistent scenario description."""


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    mode: str = "exact"
    slabs: tuple[SlabSpec, ...] = ()
    moves: tuple[tuple[str, int], ...] = ()
    surface: tuple[str, ...] = ()
    queries: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    sources: tuple = ()

    def schedule(self) -> Schedule:
        if not self.slabs:
            raise ScenarioError("scenario has no global slabs")
        moves = []
        for n, s in enumerate(self.slabs):
            S = cdt_slab_action(s, step=n)
            src = self.sources[n] if n < len(self.sources) else None
            if src is not None:
                g = np.concatenate([K.as_vector(src[0], s.q_prev), K.as_vector(src[1], s.q_next)])
                S = replace(S, grad=S.grad + g)
            moves.append(S)
        return Schedule(moves)

    def initial_surface(self) -> tuple[str, ...]:
        if self.surface:
            return self.surface
        if self.slabs:
            return vertex_labels(self.slabs[-1].q_next)
        return ()


def fixture_names() -> list[str]:
    root = resources.files("disevo") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _fixture_text(name: str) -> str | None:
    res = resources.files("disevo") / "scenarios" / f"{name}.json"
    return res.read_text(encoding="utf-8") if res.is_file() else None


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file, or a shipped fixture by name."""
    path_s = str(path)
    text = None
    p = Path(path_s)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
    elif not path_s.endswith(".json") or not p.exists():
        text = _fixture_text(p.stem if path_s.endswith(".json") else path_s)
    if text is None:
        raise ScenarioError(f"{path_s}: no such scenario file or fixture")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path_s}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_scenario(doc, name=p.stem)


def _int_field(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ScenarioError(f"{where}: expected a non-negative integer, got {value!r}")
    return value


def parse_scenario(doc, name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    mode = doc.get("mode", "exact")
    if mode not in ("exact", "float"):
        raise ScenarioError(f"mode: expected 'exact' or 'float', got {mode!r}")
    slabs, sources = [], []
    for k, raw in enumerate(doc.get("slabs", []) or []):
        where = f"slabs[{k}]"
        if not isinstance(raw, dict):
            raise ScenarioError(f"{where}: expected an object")
        for key in ("q_prev", "q_next", "adjacency"):
            if key not in raw:
                raise ScenarioError(f"{where}: missing field {key!r}")
        qp = _int_field(raw["q_prev"], f"{where}.q_prev")
        qn = _int_field(raw["q_next"], f"{where}.q_next")
        adj = raw["adjacency"]
        if not isinstance(adj, list) or any(not isinstance(r, list) for r in adj):
            raise ScenarioError(f"{where}.adjacency: expected a list of rows")
        if len(adj) != qp or any(len(r) != qn for r in adj):
            raise ScenarioError(f"{where}.adjacency: expected {qp} rows of {qn} entries")
        try:
            slabs.append(SlabSpec(qp, qn, adj))
        except ValueError as exc:
            raise ScenarioError(f"{where}.adjacency: {exc}") from None
        sources.append(_source(raw.get("source"), qp, qn, where))
    for k in range(1, len(slabs)):
        if slabs[k - 1].q_next != slabs[k].q_prev:
            raise ScenarioError(
                f"slice {k}: slabs[{k - 1}] ends with q_next={slabs[k - 1].q_next} "
                f"but slabs[{k}] starts with q_prev={slabs[k].q_prev}"
            )
    moves = []
    for k, raw in enumerate(doc.get("moves", []) or []):
        where = f"moves[{k}]"
        if not isinstance(raw, dict) or "kind" not in raw or "position" not in raw:
            raise ScenarioError(f"{where}: expected an object with 'kind' and 'position'")
        if raw["kind"] not in PACHNER_KINDS:
            raise ScenarioError(f"{where}.kind: unknown move {raw['kind']!r}")
        moves.append((raw["kind"], _int_field(raw["position"], f"{where}.position")))
    if not slabs and not moves:
        raise ScenarioError("schedule must contain at least one move")
    surface = doc.get("surface", [])
    if isinstance(surface, int):
        surface = vertex_labels(surface)
    surface = tuple(str(s) for s in surface)
    if surface and slabs and len(surface) != slabs[-1].q_next:
        raise ScenarioError(
            f"surface: {len(surface)} labels but the last slab ends with q_next={slabs[-1].q_next}"
        )
    if moves and not surface and not slabs:
        raise ScenarioError("surface: local moves need an initial surface")
    sc = Scenario(
        name=doc.get("name", name),
        mode=mode,
        slabs=tuple(slabs),
        moves=tuple(moves),
        surface=surface,
        queries=dict(doc.get("queries", {}) or {}),
        initial=dict(doc.get("initial", {}) or {}),
        parameters={str(k): v for k, v in (doc.get("parameters", {}) or {}).items()},
        sources=tuple(sources),
    )
    _check_moves(sc)
    return sc


def _source(raw, qp: int, qn: int, where: str):
    """Optional linear term ``Σ J_i φ_i`` on either side of a slab."""
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ScenarioError(f"{where}.source: expected an object with 'prev' and/or 'next'")
    out = []
    for side, q in (("prev", qp), ("next", qn)):
        vals = raw.get(side, [0] * q)
        if not isinstance(vals, list) or len(vals) != q:
            raise ScenarioError(f"{where}.source.{side}: expected a list of {q} numbers")
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float, str)):
                raise ScenarioError(f"{where}.source.{side}: {v!r} is not a number")
            try:
                Fraction(v.strip() if isinstance(v, str) else v)
            except (ValueError, ZeroDivisionError):
                raise ScenarioError(f"{where}.source.{side}: {v!r} is not a number") from None
        out.append(tuple(vals))
    return tuple(out)


def _check_moves(sc: Scenario) -> None:
    surface = sc.initial_surface()
    taken: set[str] = set(surface)
    for k, (kind, pos) in enumerate(sc.moves):
        try:
            spec = pachner_move(kind, surface, pos, taken=taken)
        except ValueError as exc:
            raise ScenarioError(f"moves[{k}]: {exc}") from None
        taken |= set(spec.surface_after)
        surface = spec.surface_after
