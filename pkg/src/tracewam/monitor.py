"""Trace recording: the monitor marks every block the default emulator runs.

A recording session starts at a head entry of a critical predicate and ends
at one of its later head entries.  The result is a ``TraceGraph``: one node
per (instruction address, block index) seen, with the set of edge labels
observed leaving it.  A node visited more than once carries the loop
annotation (``visits > 1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cfg import CFGS, NEXT, TARGET_NAMES

# A session that has marked this many blocks per allowed node is closed early
# and compiled from what it saw; a rebuild session otherwise stays open until
# the predicate's next head entry, which may be far away.
SESSION_MARKS_PER_NODE = 16


@dataclass
class TraceNode:
    addr: int
    block: int
    op: str
    labels: dict = field(default_factory=dict)    # label -> times taken
    visits: int = 0

    @property
    def key(self):
        return (self.addr, self.block)

    @property
    def loops(self):
        return self.visits > 1


@dataclass
class TraceGraph:
    pred: object
    entry: int
    nodes: dict = field(default_factory=dict)       # (addr, block) -> TraceNode
    order: list = field(default_factory=list)       # keys in first-seen order
    instr_next: dict = field(default_factory=dict)  # addr -> {next addr}
    sessions: int = 0

    def __contains__(self, key):
        return key in self.nodes

    def has_instr(self, addr):
        return (addr, 0) in self.nodes

    def snapshot(self):
        """A copy that later recording sessions will not change."""
        g = TraceGraph(self.pred, self.entry, sessions=self.sessions)
        g.nodes = {k: TraceNode(n.addr, n.block, n.op, dict(n.labels), n.visits)
                   for k, n in self.nodes.items()}
        g.order = list(self.order)
        g.instr_next = {a: set(v) for a, v in self.instr_next.items()}
        return g

    def labels(self, key):
        n = self.nodes.get(key)
        return n.labels if n is not None else {}


class Monitor:
    """Collects marks for at most one predicate at a time."""

    def __init__(self, machine):
        self.m = machine
        self.active = False
        self.pred = None
        self.graph = None
        self._cur = None
        self._pending_next = None
        self._marks = 0

    def enable_markup(self, pred):
        """Start (or, for a rebuild, resume) recording ``pred``'s trace."""
        if self.active:
            raise RuntimeError("a recording is already in progress")
        if pred.trace is None:
            pred.trace = TraceGraph(pred, pred.entry)
        self.graph = pred.trace
        self.graph.sessions += 1
        self.pred = pred
        self.active = True
        self._cur = None
        self._pending_next = None
        self._marks = 0

    reopen = enable_markup

    def disable_markup(self):
        self.active = False
        self._cur = None
        self._pending_next = None

    def mark_block(self, addr, b):
        key = (addr, b)
        g = self.graph
        node = g.nodes.get(key)
        if node is None:
            cap = self.m.config.max_trace_nodes
            if len(g.nodes) >= cap:
                self._abandon(f"more than {cap} distinct blocks")
                return
            node = g.nodes[key] = TraceNode(addr, b, self.m.code[addr].op)
            g.order.append(key)
        node.visits += 1
        if b == 0 and self._pending_next is not None:
            g.instr_next.setdefault(self._pending_next, set()).add(addr)
            self._pending_next = None
        self._cur = node
        self._marks += 1
        self.m.stats.marks += 1
        if self._marks > SESSION_MARKS_PER_NODE * self.m.config.max_trace_nodes:
            self.m.end_recording(self.pred)

    def mark_edge(self, label):
        node = self._cur
        node.labels[label] = node.labels.get(label, 0) + 1
        blk = CFGS[node.op].blocks[node.block]
        tgt = blk.succ[label]
        if tgt == NEXT:
            self._pending_next = node.addr
        elif tgt < 0:
            self._pending_next = None
        dump = self.m.config.trace_dump
        if dump is not None:
            dump(f"{node.addr} {node.op} {blk.id} {blk.kind.value} {label}"
                 + (f" {TARGET_NAMES[tgt]}" if tgt < 0 else ""))

    def _abandon(self, why):
        p = self.pred
        self.disable_markup()
        self.graph = None
        self.pred = None
        self.m.abandon_recording(p)
        self.last_abandon_reason = why

    def finalize_trace(self):
        """Stop recording; the graph, or None when nothing usable was seen."""
        g = self.graph
        self.disable_markup()
        self.graph = None
        self.pred = None
        if g is None or not g.has_instr(g.entry):
            return None
        return g


def validate_trace(graph: TraceGraph, code) -> list[str]:
    """Check a recorded graph against the instruction metadata.

    Returns a list of problems (empty when the graph is well formed): every
    node's opcode matches the code, every observed label exists in its
    block's successor table, every observed intra-instruction edge leads to
    a recorded node, deref-loop self edges are only on deref loops, and every
    observed instruction successor was itself recorded.
    """
    problems = []
    for key in graph.order:
        node = graph.nodes[key]
        ins = code[node.addr]
        if ins.op != node.op:
            problems.append(f"{key}: opcode {node.op} != {ins.op}")
            continue
        blocks = CFGS[node.op].blocks
        if not 0 <= node.block < len(blocks):
            problems.append(f"{key}: no such block")
            continue
        blk = blocks[node.block]
        for lbl in node.labels:
            if lbl not in blk.succ:
                problems.append(f"{key}: label {lbl!r} not an edge of {blk.id}")
                continue
            tgt = blk.succ[lbl]
            if tgt >= 0 and (node.addr, tgt) not in graph.nodes:
                problems.append(f"{key}: edge {lbl!r} leads to unrecorded block {tgt}")
            if tgt == node.block and blk.kind.value != "deref_loop":
                problems.append(f"{key}: self edge outside a deref loop")
        if node.block > 0 and not any(
                graph.nodes.get((node.addr, j)) is not None
                and any(blocks[j].succ.get(l) == node.block
                        for l in graph.nodes[(node.addr, j)].labels)
                for j in range(len(blocks))):
            problems.append(f"{key}: recorded without an observed predecessor")
    for addr, nxt in graph.instr_next.items():
        for a in nxt:
            if (a, 0) not in graph.nodes:
                problems.append(f"instruction {addr}: successor {a} not recorded")
    if (graph.entry, 0) not in graph.nodes:
        problems.append("entry instruction not recorded")
    return problems
