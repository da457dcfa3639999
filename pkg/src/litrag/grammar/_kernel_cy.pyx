# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled recognizer kernel; the fast twin of ``_kernel_py``.

Same chart semantics and interface, with items packed into 64-bit
integers (production << 40 | dot << 32 | origin), open-addressing item
sets, and per-column C arrays. Columns are pooled: truncate only moves
the logical end and advance reuses the buffers in place, so mask
computation (thousands of trial advances) does not churn the allocator.
"""

from libc.stdlib cimport calloc, free, malloc, realloc
from libc.string cimport memcpy, memset
from libc.stdint cimport int64_t, uint64_t, uint8_t

KERNEL_NAME = "cython"

cdef int64_t EMPTY = -1


cdef struct Column:
    int64_t *slots      # open-addressing item set, EMPTY where vacant
    int cap             # power of two
    int shift           # 64 - log2(cap)
    int used
    int *scan           # packed entries: cls, prod, dot, origin
    int n_scan
    int cap_scan
    int64_t **wait      # per-nonterminal packed parent items
    int *wait_len
    int *wait_cap
    uint8_t *predicted
    bint accepting


cdef inline uint64_t _mix(int64_t item) nogil:
    return (<uint64_t>item) * <uint64_t>0x9E3779B97F4A7C15ULL


cdef void _col_init(Column *col, int n_nts):
    col.cap = 64
    col.shift = 58
    col.used = 0
    col.slots = <int64_t *>malloc(col.cap * sizeof(int64_t))
    memset(col.slots, 0xFF, col.cap * sizeof(int64_t))
    col.cap_scan = 64
    col.n_scan = 0
    col.scan = <int *>malloc(col.cap_scan * 4 * sizeof(int))
    col.wait = <int64_t **>calloc(n_nts, sizeof(int64_t *))
    col.wait_len = <int *>calloc(n_nts, sizeof(int))
    col.wait_cap = <int *>calloc(n_nts, sizeof(int))
    col.predicted = <uint8_t *>calloc(n_nts, sizeof(uint8_t))
    col.accepting = False


cdef void _col_reset(Column *col, int n_nts):
    memset(col.slots, 0xFF, col.cap * sizeof(int64_t))
    col.used = 0
    col.n_scan = 0
    memset(col.wait_len, 0, n_nts * sizeof(int))
    memset(col.predicted, 0, n_nts * sizeof(uint8_t))
    col.accepting = False


cdef void _col_free(Column *col, int n_nts):
    cdef int i
    free(col.slots)
    free(col.scan)
    if col.wait != NULL:
        for i in range(n_nts):
            free(col.wait[i])
    free(col.wait)
    free(col.wait_len)
    free(col.wait_cap)
    free(col.predicted)


cdef bint _set_add(Column *col, int64_t item):
    """Insert; False if already present."""
    cdef uint64_t h
    cdef int idx, mask_, old_cap, i
    cdef int64_t *old
    cdef int64_t cur
    if (col.used + 1) * 4 > col.cap * 3:
        old = col.slots
        old_cap = col.cap
        col.cap <<= 1
        col.shift -= 1
        col.slots = <int64_t *>malloc(col.cap * sizeof(int64_t))
        memset(col.slots, 0xFF, col.cap * sizeof(int64_t))
        mask_ = col.cap - 1
        for i in range(old_cap):
            cur = old[i]
            if cur != EMPTY:
                idx = <int>(_mix(cur) >> col.shift)
                while col.slots[idx] != EMPTY:
                    idx = (idx + 1) & mask_
                col.slots[idx] = cur
        free(old)
    mask_ = col.cap - 1
    idx = <int>(_mix(item) >> col.shift)
    while True:
        cur = col.slots[idx]
        if cur == EMPTY:
            col.slots[idx] = item
            col.used += 1
            return True
        if cur == item:
            return False
        idx = (idx + 1) & mask_


cdef void _wait_append(Column *col, int nt, int64_t item):
    cdef int cap = col.wait_cap[nt]
    if col.wait_len[nt] == cap:
        cap = 8 if cap == 0 else cap * 2
        col.wait[nt] = <int64_t *>realloc(col.wait[nt], cap * sizeof(int64_t))
        col.wait_cap[nt] = cap
    col.wait[nt][col.wait_len[nt]] = item
    col.wait_len[nt] += 1


cdef class Chart:
    cdef Column *cols
    cdef int n_cols, alloc_cols, cap_cols
    cdef int64_t *stack
    cdef int stack_n, stack_cap
    # grammar tables (owned C copies)
    cdef uint8_t *class_table
    cdef int *prod_lhs
    cdef int *rhs_off
    cdef int *rhs_flat
    cdef int *nt_off
    cdef int *nt_flat
    cdef int n_classes, n_nts, n_prods, start_prod

    def __cinit__(self, tables):
        cdef bytes ct = tables.class_table
        cdef const unsigned char *ct_ptr = ct
        self.n_classes = tables.n_classes
        self.n_nts = tables.n_nonterminals
        self.start_prod = tables.start_prod
        self.n_prods = len(tables.prod_lhs)
        self.class_table = <uint8_t *>malloc(len(ct))
        memcpy(self.class_table, ct_ptr, len(ct))
        self.prod_lhs = _copy_int_array(tables.prod_lhs)
        self.rhs_off = _copy_int_array(tables.rhs_off)
        self.rhs_flat = _copy_int_array(tables.rhs_flat)
        self.nt_off = _copy_int_array(tables.nt_prods_off)
        self.nt_flat = _copy_int_array(tables.nt_prods_flat)

        self.cap_cols = 64
        self.cols = <Column *>malloc(self.cap_cols * sizeof(Column))
        self.n_cols = 0
        self.alloc_cols = 0
        self.stack_cap = 256
        self.stack_n = 0
        self.stack = <int64_t *>malloc(self.stack_cap * sizeof(int64_t))

        self._push(_pack(self.start_prod, 0, 0))
        self._open_column()
        self._closure(0)
        self.n_cols = 1

    def __dealloc__(self):
        cdef int i
        for i in range(self.alloc_cols):
            _col_free(&self.cols[i], self.n_nts)
        free(self.cols)
        free(self.stack)
        free(self.class_table)
        free(self.prod_lhs)
        free(self.rhs_off)
        free(self.rhs_flat)
        free(self.nt_off)
        free(self.nt_flat)

    @property
    def position(self):
        return self.n_cols - 1

    cpdef bint accepting(self):
        return self.cols[self.n_cols - 1].accepting

    cpdef bint advance(self, int byte):
        """Consume one byte; False (and no state change) if not viable."""
        cdef Column *cur = &self.cols[self.n_cols - 1]
        cdef int i, cls
        cdef int64_t item
        self.stack_n = 0
        for i in range(cur.n_scan):
            cls = cur.scan[4 * i]
            if self.class_table[(cls << 8) | byte]:
                item = _pack(cur.scan[4 * i + 1], cur.scan[4 * i + 2] + 1, cur.scan[4 * i + 3])
                self._push(item)
        if self.stack_n == 0:
            return False
        self._open_column()
        self._closure(self.n_cols)
        self.n_cols += 1
        return True

    cpdef truncate(self, int position):
        """Forget all columns past ``position`` (rewind the chart)."""
        if position < 0 or position >= self.n_cols:
            raise ValueError(f"position out of range: {position}")
        self.n_cols = position + 1

    cdef void _push(self, int64_t item):
        if self.stack_n == self.stack_cap:
            self.stack_cap *= 2
            self.stack = <int64_t *>realloc(self.stack, self.stack_cap * sizeof(int64_t))
        self.stack[self.stack_n] = item
        self.stack_n += 1

    cdef void _open_column(self):
        """Make cols[n_cols] ready (fresh or recycled)."""
        cdef int i
        if self.n_cols == self.cap_cols:
            self.cap_cols *= 2
            self.cols = <Column *>realloc(self.cols, self.cap_cols * sizeof(Column))
        if self.n_cols == self.alloc_cols:
            _col_init(&self.cols[self.n_cols], self.n_nts)
            self.alloc_cols += 1
        else:
            _col_reset(&self.cols[self.n_cols], self.n_nts)

    cdef void _closure(self, int k):
        cdef Column *col = &self.cols[k]
        cdef Column *origin_col
        cdef int64_t item
        cdef int prod, dot, origin, off, sym, nt, i, pid
        while self.stack_n:
            self.stack_n -= 1
            item = self.stack[self.stack_n]
            if not _set_add(col, item):
                continue
            prod = <int>(item >> 40)
            dot = <int>((item >> 32) & 0xFF)
            origin = <int>(item & 0xFFFFFFFF)
            off = self.rhs_off[prod]
            if off + dot == self.rhs_off[prod + 1]:
                # complete; epsilon-freeness guarantees origin < k
                if prod == self.start_prod:
                    col.accepting = True
                    continue
                nt = self.prod_lhs[prod]
                origin_col = &self.cols[origin]
                for i in range(origin_col.wait_len[nt]):
                    self._push(origin_col.wait[nt][i] + (<int64_t>1 << 32))
                continue
            sym = self.rhs_flat[off + dot]
            if sym < self.n_classes:
                if col.n_scan == col.cap_scan:
                    col.cap_scan *= 2
                    col.scan = <int *>realloc(col.scan, col.cap_scan * 4 * sizeof(int))
                col.scan[4 * col.n_scan] = sym
                col.scan[4 * col.n_scan + 1] = prod
                col.scan[4 * col.n_scan + 2] = dot
                col.scan[4 * col.n_scan + 3] = origin
                col.n_scan += 1
            else:
                nt = sym - self.n_classes
                _wait_append(col, nt, item)
                if not col.predicted[nt]:
                    col.predicted[nt] = 1
                    for i in range(self.nt_off[nt], self.nt_off[nt + 1]):
                        pid = self.nt_flat[i]
                        self._push(_pack(pid, 0, k))


cdef inline int64_t _pack(int prod, int dot, int origin) nogil:
    return ((<int64_t>prod) << 40) | ((<int64_t>dot) << 32) | <int64_t>origin


cdef int *_copy_int_array(object arr):
    cdef const int[:] view = arr
    cdef int n = view.shape[0]
    cdef int *out = <int *>malloc(n * sizeof(int))
    if n:
        memcpy(out, &view[0], n * sizeof(int))
    return out


cdef void _visit(Chart chart, const int[:] child_off, const unsigned char[:] child_byte,
                 const int[:] child_node, const int[:] tok_off, const int[:] tok_ids,
                 unsigned char[:] out, int node):
    cdef int i, child, j
    for i in range(child_off[node], child_off[node + 1]):
        if chart.advance(child_byte[i]):
            child = child_node[i]
            for j in range(tok_off[child], tok_off[child + 1]):
                out[tok_ids[j]] = 1
            _visit(chart, child_off, child_byte, child_node, tok_off, tok_ids, out, child)
            chart.truncate(chart.n_cols - 2)


def compute_mask(Chart chart, trie, out):
    """Set out[token_id] = 1 for every token whose bytes keep the
    chart viable; the chart is restored before returning."""
    _visit(chart, trie.child_off, trie.child_byte, trie.child_node,
           trie.tok_off, trie.tok_ids, out, 0)
