"""Runs the built-in oracle suites and prints a pass/fail table."""
from __future__ import annotations

import io
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from . import checkpoint
from . import functional as F
from .attention import (
    NasaParams,
    build_shift_mask,
    cyclic_shift,
    nasa_attention,
    window_partition,
    window_reverse,
)
from .errors import CheckpointError
from .fusion import MaskVariant, sample_mask
from .gradcheck import TOLERANCE, check_gradients, model_gradient_errors
from .model import ModelConfig, NasaSwin
from .nn import parameter
from .reference import naive_nasa_attention
from .tensor import exp as texp, log as tlog


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _op_cases(rng) -> List[Tuple[str, Callable, list]]:
    def p(*shape, lo=-1.0, hi=1.0):
        return parameter(rng.uniform(lo, hi, shape))

    a, b = p(3, 4), p(3, 4)
    pos = p(3, 4, lo=0.5, hi=2.0)
    m1, m2 = p(2, 3, 4), p(4, 5)
    x, g, be = p(2, 3, 6), p(6), p(6)
    img, ker, kb = p(1, 6, 8, 8), p(6, 2, 4, 4), p(6)
    logits = p(4, 3)
    signed = parameter(rng.choice([-1.0, 1.0], (3, 4)) * rng.uniform(0.2, 1.0, (3, 4)))

    def square_sum(t):
        return (t * t).sum()

    return [
        ("add", lambda: (a + b).sum(), [a, b]),
        ("mul", lambda: (a * b).sum(), [a, b]),
        ("div", lambda: (a / pos).sum(), [a, pos]),
        ("exp_log", lambda: (texp(pos) + tlog(pos)).sum(), [pos]),
        ("abs", lambda: (signed.abs() * a).sum(), [signed, a]),
        ("matmul", lambda: square_sum(m1 @ m2), [m1, m2]),
        ("softmax", lambda: (F.softmax(a) * b).sum(), [a, b]),
        ("gelu", lambda: (F.gelu(a) * b).sum(), [a, b]),
        ("layer_norm", lambda: (F.layer_norm(x, g, be) * x).sum(), [x, g, be]),
        ("conv2d_grouped", lambda: square_sum(F.conv2d_grouped(img, ker, kb, stride=4, groups=3)), [img, ker, kb]),
        ("cross_entropy", lambda: F.cross_entropy(logits, [0, 2, 1, 1]), [logits]),
    ]


def suite_op_gradients() -> str:
    rng = np.random.default_rng(0)
    worst, bad = 0.0, []
    for name, fn, inputs in _op_cases(rng):
        errs = check_gradients(fn, inputs)
        e = max(errs.values())
        worst = max(worst, e)
        if e >= TOLERANCE:
            bad.append(f"{name}={e:.2e}")
    if bad:
        raise AssertionError("gradient mismatch: " + ", ".join(bad))
    return f"max rel err {worst:.1e}"


def suite_model_gradients() -> str:
    worst = 0.0
    for span in ((2, 3), None):
        model = NasaSwin(ModelConfig(nasa_span=span), seed=0)
        worst = max(worst, max(model_gradient_errors(model, seed=0).values()))
    if worst >= TOLERANCE:
        raise AssertionError(f"model gradient rel err {worst:.2e}")
    return f"max rel err {worst:.1e}"


def suite_nasa_oracle() -> str:
    rng = np.random.default_rng(1)
    worst = 0.0
    for M, heads in ((2, 1), (4, 2), (7, 4)):
        C = 4 * heads
        params = NasaParams(C, heads, rng)
        params.mix_weight.data = rng.standard_normal((heads, heads))
        params.mix_bias.data = rng.standard_normal(heads)
        tokens = rng.standard_normal((1, 2, M * M, C))
        fast = nasa_attention(tokens, params).data
        worst = max(worst, float(np.abs(fast - naive_nasa_attention(tokens, params)).max()))
    if worst > 1e-10:
        raise AssertionError(f"vectorised vs loop differ by {worst:.2e}")
    return f"max abs diff {worst:.1e}"


def suite_roundtrips() -> str:
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 64, 5))
    back = window_reverse(window_partition(x, 8, 8, 4)).data
    if not np.array_equal(back, x):
        raise AssertionError("window partition/reverse not exact")
    rolled = cyclic_shift(cyclic_shift(x, 8, 8, 2), 8, 8, 2, inverse=True).data
    if not np.array_equal(rolled, x):
        raise AssertionError("shift/unshift not exact")
    mask = build_shift_mask(8, 8, 4, 2)
    if not (mask.min() < -1e8 and (mask == mask.transpose(0, 2, 1)).all()):
        raise AssertionError("shift mask malformed")
    state = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(4)}
    loaded = checkpoint.loads(checkpoint.dumps(state))
    if set(loaded) != set(state) or not all(np.array_equal(loaded[k], state[k]) for k in state):
        raise AssertionError("checkpoint roundtrip not exact")
    return "partition, shift, checkpoint exact"


def suite_cms_distribution() -> str:
    rng = np.random.default_rng(3)
    counts = {v: 0 for v in MaskVariant}
    n = 10_000
    for _ in range(n):
        choice = sample_mask(rng)
        counts[choice.variant] += 1
    freqs = {v.value: c / n for v, c in counts.items()}
    off = {k: f for k, f in freqs.items() if abs(f - 0.25) > 0.02}
    if off:
        raise AssertionError(f"variant frequencies off: {off}")
    return " ".join(f"{k}={f:.3f}" for k, f in freqs.items())


def suite_corrupt_checkpoint() -> str:
    blob = bytearray(checkpoint.dumps({"w": np.ones(2)}))
    blob[0:4] = b"XXXX"
    try:
        checkpoint.loads(bytes(blob))
    except CheckpointError as exc:
        return f"rejected: {exc}"
    raise AssertionError("corrupted magic was accepted")


SUITES: List[Tuple[str, Callable[[], str]]] = [
    ("op gradients", suite_op_gradients),
    ("model gradients", suite_model_gradients),
    ("nasa oracle", suite_nasa_oracle),
    ("roundtrips", suite_roundtrips),
    ("cms distribution", suite_cms_distribution),
    ("corrupt checkpoint", suite_corrupt_checkpoint),
]


def run(suites=None) -> List[SuiteResult]:
    results = []
    for name, fn in suites or SUITES:
        t0 = time.perf_counter()
        try:
            detail, ok = fn(), True
        except Exception as exc:  # any failure is reported, never raised
            detail, ok = f"{type(exc).__name__}: {exc}", False
        results.append(SuiteResult(name, ok, detail, time.perf_counter() - t0))
    return results


def format_report(results: List[SuiteResult]) -> str:
    buf = io.StringIO()
    width = max(len(r.name) for r in results)
    for r in results:
        buf.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name.ljust(width)}  {r.seconds:6.2f}s  {r.detail}\n")
    failed = sum(not r.passed for r in results)
    buf.write(f"{len(results) - failed}/{len(results)} suites passed\n")
    return buf.getvalue()


def main() -> int:
    results = run()
    print(format_report(results), end="")
    return 0 if all(r.passed for r in results) else 1
