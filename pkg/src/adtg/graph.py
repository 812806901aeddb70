"""Directed action-succession graphs built from demonstration sequences.

One node per action observed in any demonstration, plus a virtual
end-of-sequence node. An edge a -> b records that b immediately followed a
in at least one sequence; each sequence's final action gets an edge to EOS.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

from .corpus.model import EOS_NAME, ActionVocabulary


class GraphQueryError(KeyError):
    """A queried node is not part of the graph."""


@dataclass
class TaskGraph:
    task_id: str
    vocab: ActionVocabulary
    edge_counts: Dict[Tuple[int, int], int] = field(default_factory=dict)
    node_ids: Tuple[int, ...] = ()

    def has_node(self, action_id: int) -> bool:
        return action_id in self.node_ids

    def _require_node(self, action_id: int) -> None:
        if not self.has_node(action_id):
            raise GraphQueryError(f"action id {action_id} is not a node of task {self.task_id!r}")

    def successors(self, action_id: int) -> Tuple[int, ...]:
        """Outgoing-edge targets sorted by action index (EOS sorts last)."""
        self._require_node(action_id)
        return tuple(sorted(dst for (src, dst) in self.edge_counts if src == action_id))

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self.edge_counts

    def is_interchangeable(self, a: int, b: int) -> bool:
        """True iff both orderings were observed (edges in both directions)."""
        self._require_node(a)
        self._require_node(b)
        return (a, b) in self.edge_counts and (b, a) in self.edge_counts

    def edges(self) -> List[Tuple[int, int, int]]:
        return sorted((src, dst, n) for (src, dst), n in self.edge_counts.items())

    def to_dot(self) -> str:
        """DOT digraph with action-name labels and edge counts; byte-stable."""
        lines = [f'digraph "{self.task_id}" {{']
        for node in sorted(self.node_ids):
            name = self.vocab.name_of(node)
            shape = "doublecircle" if name == EOS_NAME else "box"
            lines.append(f'  n{node} [label="{name}", shape={shape}];')
        for src, dst, count in self.edges():
            lines.append(f'  n{src} -> n{dst} [label="{count}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json_obj(self) -> dict:
        return {
            "task_id": self.task_id,
            "nodes": [self.vocab.name_of(n) for n in sorted(self.node_ids)],
            "edges": [
                [self.vocab.name_of(s), self.vocab.name_of(d), n] for s, d, n in self.edges()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n"


class GraphBuildResult(NamedTuple):
    graph: TaskGraph
    skipped_empty: int


def build_graph(sequences: Iterable[Sequence[int]], vocab: ActionVocabulary) -> GraphBuildResult:
    """Build the succession graph from compressed action-id sequences.

    Empty sequences are skipped and counted in the result metadata. Every
    non-empty sequence contributes its consecutive pairs plus a final edge
    into EOS, so every node can reach EOS by construction.
    """
    eos = vocab.eos_id
    counts: Dict[Tuple[int, int], int] = {}
    nodes = {eos}
    skipped = 0
    any_sequence = False
    for seq in sequences:
        any_sequence = True
        if len(seq) == 0:
            skipped += 1
            continue
        for a in seq:
            if not (1 <= int(a) < eos):
                raise GraphQueryError(f"sequence contains invalid action id {a}")
            nodes.add(int(a))
        for a, b in zip(seq, seq[1:]):
            key = (int(a), int(b))
            counts[key] = counts.get(key, 0) + 1
        last = (int(seq[-1]), eos)
        counts[last] = counts.get(last, 0) + 1
    if not any_sequence:
        raise GraphQueryError("cannot build a graph from zero sequences")
    graph = TaskGraph(
        task_id=vocab.task_id,
        vocab=vocab,
        edge_counts=counts,
        node_ids=tuple(sorted(nodes)),
    )
    return GraphBuildResult(graph=graph, skipped_empty=skipped)


def graph_from_json_obj(doc: dict, vocab: ActionVocabulary) -> TaskGraph:
    nodes = tuple(sorted(vocab.index_of(name) for name in doc["nodes"]))
    counts = {
        (vocab.index_of(s), vocab.index_of(d)): int(n) for s, d, n in doc["edges"]
    }
    return TaskGraph(task_id=doc["task_id"], vocab=vocab, edge_counts=counts, node_ids=nodes)


def graph_from_json(text: str, vocab: ActionVocabulary) -> TaskGraph:
    return graph_from_json_obj(json.loads(text), vocab)
