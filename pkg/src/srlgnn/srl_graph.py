"""Predicate-argument graphs built from externally supplied SRL annotations.

Nodes are token spans (predicates and arguments) of the target utterance;
edges connect each predicate to its arguments within a frame, plus any pair
of nodes where one span strictly contains the other.
"""
from __future__ import annotations

import json
from dataclasses import dataclass


class SrlError(ValueError):
    """Malformed SRL annotation or span inconsistent with its utterance."""


Span = tuple[int, int]  # half-open [start, end) over utterance tokens


@dataclass(frozen=True)
class SrlFrame:
    predicate: Span
    arguments: tuple[Span, ...]

    def __post_init__(self):
        for span in (self.predicate, *self.arguments):
            s, e = span
            if not (0 <= s < e):
                raise SrlError(f"bad span {span}: need 0 <= start < end")


@dataclass(frozen=True)
class PaNode:
    node_id: int
    span: Span
    kind: str  # "predicate" | "argument"


@dataclass(frozen=True)
class PaGraph:
    nodes: tuple[PaNode, ...]
    edges: frozenset[frozenset[int]]
    utterance_token_count: int

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def neighbors(self, node_id: int) -> list[int]:
        out = []
        for edge in self.edges:
            if node_id in edge:
                (other,) = edge - {node_id}
                out.append(other)
        return sorted(out)


def _contains_strictly(inner: Span, outer: Span) -> bool:
    return outer[0] <= inner[0] and inner[1] <= outer[1] and inner != outer


def build_graph(frames: list[SrlFrame], token_count: int) -> PaGraph:
    """Canonical undirected graph over the distinct spans of `frames`.

    A span used as both predicate and argument becomes a single node of
    kind predicate. Node ordering is by (start, end).
    """
    for frame in frames:
        for span in (frame.predicate, *frame.arguments):
            if span[1] > token_count:
                raise SrlError(
                    f"span {span} exceeds utterance token count {token_count}"
                )
    kinds: dict[Span, str] = {}
    for frame in frames:
        kinds[frame.predicate] = "predicate"
        for arg in frame.arguments:
            kinds.setdefault(arg, "argument")

    spans = sorted(kinds)
    ids = {span: i for i, span in enumerate(spans)}
    nodes = tuple(PaNode(i, span, kinds[span]) for span, i in ids.items())

    edges: set[frozenset[int]] = set()
    for frame in frames:
        p = ids[frame.predicate]
        for arg in frame.arguments:
            a = ids[arg]
            if a != p:
                edges.add(frozenset((p, a)))
    for sa in spans:
        for sb in spans:
            if _contains_strictly(sa, sb):
                edges.add(frozenset((ids[sa], ids[sb])))
    return PaGraph(nodes, frozenset(edges), token_count)


def graph_stats(g: PaGraph) -> dict:
    degree = {node.node_id: 0 for node in g.nodes}
    for edge in g.edges:
        for nid in edge:
            degree[nid] += 1
    return {
        "node_count": len(g.nodes),
        "edge_count": len(g.edges),
        "isolated_nodes": sum(1 for d in degree.values() if d == 0),
        "max_degree": max(degree.values(), default=0),
    }


def drop_truncated_nodes(g: PaGraph, n_dropped_prefix: int) -> PaGraph:
    """Subgraph after the first n_dropped_prefix target tokens were cut:
    nodes whose span touches the cut region are removed, survivors shifted."""
    if n_dropped_prefix <= 0:
        return g
    kept = [node for node in g.nodes if node.span[0] >= n_dropped_prefix]
    remap = {node.node_id: i for i, node in enumerate(kept)}
    nodes = tuple(
        PaNode(remap[node.node_id],
               (node.span[0] - n_dropped_prefix, node.span[1] - n_dropped_prefix),
               node.kind)
        for node in kept
    )
    edges = frozenset(
        frozenset(remap[nid] for nid in edge)
        for edge in g.edges
        if all(nid in remap for nid in edge)
    )
    return PaGraph(nodes, edges, g.utterance_token_count - n_dropped_prefix)


def parse_srl_file(path) -> dict[tuple[str, str], list[SrlFrame]]:
    """Load `{"<conv_id>/<utt_id>": [{"predicate": [s,e], "arguments": [...]}]}`.

    Span-vs-token-count validation happens later, when the utterance's
    tokenization is known (see validate_frames / build_graph).
    """
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SrlError(f"{path}: malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SrlError(f"{path}: top level must be an object")
    out: dict[tuple[str, str], list[SrlFrame]] = {}
    for key, entries in raw.items():
        conv_id, sep, utt_id = key.partition("/")
        if not sep or not conv_id or not utt_id:
            raise SrlError(f"{path}: key {key!r} is not '<conv_id>/<utt_id>'")
        frames = []
        for entry in entries:
            try:
                frames.append(SrlFrame(
                    predicate=tuple(entry["predicate"]),
                    arguments=tuple(tuple(a) for a in entry["arguments"]),
                ))
            except (KeyError, TypeError) as exc:
                raise SrlError(f"{path}: bad frame under {key!r}: {exc}") from None
        out[(conv_id, utt_id)] = frames
    return out


def validate_frames(
    frames_map: dict[tuple[str, str], list[SrlFrame]],
    token_counts: dict[tuple[str, str], int],
) -> None:
    """Cross-check every frame's spans against its utterance's token count."""
    for key, frames in frames_map.items():
        if key not in token_counts:
            raise SrlError(f"SRL entry {key[0]}/{key[1]} has no matching utterance")
        count = token_counts[key]
        for frame in frames:
            for span in (frame.predicate, *frame.arguments):
                if span[1] > count:
                    raise SrlError(
                        f"{key[0]}/{key[1]}: span {list(span)} out of range "
                        f"for {count} tokens"
                    )
