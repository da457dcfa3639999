"""Pure-Python recognizer kernel (reference implementation).

An incremental Earley chart over bytes. Items are (production, dot,
origin-column) triples; one column per consumed byte. The grammar is
epsilon-free, so completions never target the column being built and
a prefix is viable exactly while every advance finds at least one
scanned item.

``_kernel_cy`` is the compiled twin with the same interface; the engine
picks one at import time.
"""

from __future__ import annotations

KERNEL_NAME = "python"


class _Column:
    __slots__ = ("items", "scan", "wait", "predicted", "accepting")

    def __init__(self, n_nts: int):
        self.items = set()
        self.scan = []                    # (class, prod, dot, origin)
        self.wait = [None] * n_nts        # nt -> [(prod, dot, origin), ...]
        self.predicted = bytearray(n_nts)
        self.accepting = False


class Chart:
    __slots__ = ("t", "cols")

    def __init__(self, tables):
        self.t = tables
        self.cols = []
        first = _Column(tables.n_nonterminals)
        self._closure(first, 0, [(tables.start_prod, 0, 0)])
        self.cols.append(first)

    @property
    def position(self) -> int:
        return len(self.cols) - 1

    def accepting(self) -> bool:
        return self.cols[-1].accepting

    def advance(self, byte: int) -> bool:
        """Consume one byte; False (and no state change) if not viable."""
        t = self.t
        table = t.class_table
        seed = [
            (prod, dot + 1, origin)
            for cls, prod, dot, origin in self.cols[-1].scan
            if table[(cls << 8) | byte]
        ]
        if not seed:
            return False
        col = _Column(t.n_nonterminals)
        self._closure(col, len(self.cols), seed)
        self.cols.append(col)
        return True

    def truncate(self, position: int) -> None:
        """Forget all columns past ``position`` (rewind the chart)."""
        if not 0 <= position < len(self.cols):
            raise ValueError(f"position out of range: {position}")
        del self.cols[position + 1:]

    def _closure(self, col, k: int, seed) -> None:
        t = self.t
        items = col.items
        wait = col.wait
        predicted = col.predicted
        rhs_off = t.rhs_off
        rhs_flat = t.rhs_flat
        n_classes = t.n_classes
        cols = self.cols
        stack = list(seed)
        while stack:
            item = stack.pop()
            if item in items:
                continue
            items.add(item)
            prod, dot, origin = item
            if rhs_off[prod] + dot == rhs_off[prod + 1]:  # complete
                if prod == t.start_prod:
                    col.accepting = True
                    continue
                lhs = t.prod_lhs[prod]
                waiting = cols[origin].wait[lhs]
                if waiting:
                    for parent_prod, parent_dot, parent_origin in waiting:
                        stack.append((parent_prod, parent_dot + 1, parent_origin))
                continue
            sym = rhs_flat[rhs_off[prod] + dot]
            if sym < n_classes:
                col.scan.append((sym, prod, dot, origin))
            else:
                nt = sym - n_classes
                if wait[nt] is None:
                    wait[nt] = []
                wait[nt].append((prod, dot, origin))
                if not predicted[nt]:
                    predicted[nt] = 1
                    for pid in t.nt_prods_flat[t.nt_prods_off[nt]:t.nt_prods_off[nt + 1]]:
                        stack.append((pid, 0, k))


def compute_mask(chart: Chart, trie, out: bytearray) -> None:
    """Set out[token_id] = 1 for every token whose bytes keep the
    chart viable; the chart is restored before returning."""
    child_off = trie.child_off
    child_byte = trie.child_byte
    child_node = trie.child_node
    tok_off = trie.tok_off
    tok_ids = trie.tok_ids
    advance = chart.advance
    truncate = chart.truncate

    def visit(node: int) -> None:
        for i in range(child_off[node], child_off[node + 1]):
            if advance(child_byte[i]):
                child = child_node[i]
                for j in range(tok_off[child], tok_off[child + 1]):
                    out[tok_ids[j]] = 1
                visit(child)
                truncate(chart.position - 1)

    visit(0)
