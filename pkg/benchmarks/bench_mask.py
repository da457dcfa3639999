"""Benchmark the token-mask kernels: compiled chart vs pure-Python chart.

Drives identical seeded random walks through the query grammar with both
kernels and times ``allowed_tokens`` (one full vocabulary mask per step).
The walks are mask-guided, so both kernels must visit byte-identical
states; the script verifies that before reporting.

Usage:
    python3 benchmarks/bench_mask.py [--walks N] [--max-steps N] [--seed N]
"""
from __future__ import annotations

import argparse
import random
import time

from litrag.grammar import (
    DecodeSession,
    _kernel_cy,
    _kernel_py,
    query_grammar,
    stub_ascii_vocabulary,
)


def run_walks(kernel, grammar, vocab, *, n_walks: int, max_steps: int, seed: int):
    """Return (mask_count, mask_seconds, fingerprint) for seeded walks."""
    rng = random.Random(seed)
    mask_count = 0
    mask_seconds = 0.0
    fingerprint = []
    for _ in range(n_walks):
        session = DecodeSession(grammar, vocab, kernel=kernel)
        for _ in range(max_steps):
            started = time.perf_counter()
            mask = session.allowed_tokens()
            mask_seconds += time.perf_counter() - started
            mask_count += 1
            choices = sorted(mask.allowed_ids())
            if mask.eos_allowed:
                choices.append(vocab.eos_id)
            if not choices:
                break
            token = rng.choice(choices)
            if token == vocab.eos_id:
                break
            session.advance(token)
        fingerprint.append(session.emitted)
    return mask_count, mask_seconds, fingerprint


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--walks", type=int, default=40, help="number of walks")
    parser.add_argument("--max-steps", type=int, default=60, help="steps per walk")
    parser.add_argument("--seed", type=int, default=20260815, help="walk RNG seed")
    args = parser.parse_args()

    grammar = query_grammar()
    vocab = stub_ascii_vocabulary()
    kernels = [_kernel_py, _kernel_cy]

    results = []
    for kernel in kernels:
        count, seconds, fingerprint = run_walks(
            kernel, grammar, vocab,
            n_walks=args.walks, max_steps=args.max_steps, seed=args.seed,
        )
        results.append((kernel.KERNEL_NAME, count, seconds, fingerprint))

    baseline = results[0]
    if any(r[3] != baseline[3] for r in results[1:]):
        raise SystemExit("kernels disagree on walk states — aborting")

    print(f"{'kernel':<10}{'masks':>8}{'total_s':>10}{'masks/s':>12}")
    for name, count, seconds, _ in results:
        rate = count / seconds if seconds else float("inf")
        print(f"{name:<10}{count:>8}{seconds:>10.3f}{rate:>12.0f}")
    py_s = results[0][2]
    cy_s = results[1][2]
    if cy_s:
        print(f"speedup: {py_s / cy_s:.1f}x (cython over python)")


if __name__ == "__main__":
    main()
