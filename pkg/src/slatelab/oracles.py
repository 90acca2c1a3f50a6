"""Brute-force reference checks behind ``slatelab oracle-check``.

Every reference here is written independently of the optimized code it
checks: plain Python loops, no shared helpers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .features import FeatureBatch
from .metrics import hitrate_at_k, spearman_rho
from .predictor import Head, auc, loss_and_grad
from .reranker import beam_search_arrays, brute_force_arrays, exposure_probs

BEAM_QUALITY_FLOOR = 0.98


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# -- references --------------------------------------------------------------


def ref_sequence_value(order, v, sdr) -> float:
    total, reach = 0.0, 1.0
    for i in order:
        total += reach * v[i]
        reach *= sdr[i]
    return total


def ref_best_slate(ids, v, sdr, m):
    """Exhaustive search; ties go to the lexicographically smaller id sequence."""
    best_val, best_seq = -math.inf, None
    for order in permutations(range(len(ids)), m):
        val = ref_sequence_value(order, v, sdr)
        seq = tuple(ids[i] for i in order)
        if val > best_val or (val == best_val and seq < best_seq):
            best_val, best_seq = val, seq
    return best_val, best_seq


def ref_auc(scores, labels, weights) -> float:
    num = den = 0.0
    for si, yi, wi in zip(scores, labels, weights):
        if yi != 1:
            continue
        for sj, yj, wj in zip(scores, labels, weights):
            if yj != 0:
                continue
            pair = wi * wj
            den += pair
            num += pair * (1.0 if si > sj else 0.5 if si == sj else 0.0)
    return num / den


def ref_ranks(x) -> list[float]:
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def ref_spearman(x, y) -> float:
    rx, ry = ref_ranks(x), ref_ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    return sxy / math.sqrt(sxx * syy)


def _draw_slate(rng, n):
    ids = rng.permutation(1000)[:n]
    return ids, rng.random(n), rng.random(n)


# -- suites --------------------------------------------------------------------


def check_beam_exact(draws: int = 500, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng([seed, 1])
    cases = bad = 0
    for n in range(5, 9):
        for m in range(2, 5):
            width = math.perm(n, m)
            for _ in range(draws):
                ids, v, sdr = _draw_slate(rng, n)
                beam = beam_search_arrays(ids, v, sdr, m, width)
                brute = brute_force_arrays(ids, v, sdr, m)
                cases += 1
                if abs(beam.sequence_value - brute.sequence_value) > 1e-12 or \
                        beam.permutation != brute.permutation:
                    bad += 1
    return OracleResult("beam_equals_brute_force", bad == 0,
                        f"{cases - bad}/{cases} instances identical (n=5..8, m=2..4)")


def check_brute_force_reference(draws: int = 60, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng([seed, 2])
    cases = bad = 0
    for n in range(3, 8):
        for m in range(1, min(n, 4) + 1):
            for _ in range(draws):
                ids, v, sdr = _draw_slate(rng, n)
                if cases % 3 == 0:
                    v = np.round(v * 4) / 4  # force ties
                    sdr = np.round(sdr * 2) / 2
                got = brute_force_arrays(ids, v, sdr, m)
                want_val, want_seq = ref_best_slate(ids.tolist(), v.tolist(), sdr.tolist(), m)
                cases += 1
                if abs(got.sequence_value - want_val) > 1e-12 or got.permutation != want_seq:
                    bad += 1
    return OracleResult("brute_force_matches_reference", bad == 0,
                        f"{cases - bad}/{cases} instances match the loop enumerator")


def check_beam_quality(draws: int = 500, seed: int = 0, floor: float = BEAM_QUALITY_FLOOR
                       ) -> OracleResult:
    rng = np.random.default_rng([seed, 3])
    worst = 1.0
    for _ in range(draws):
        ids, v, sdr = _draw_slate(rng, 8)
        beam = beam_search_arrays(ids, v, sdr, 4, 25)
        brute = brute_force_arrays(ids, v, sdr, 4)
        worst = min(worst, beam.sequence_value / brute.sequence_value)
    return OracleResult("beam_quality_B25", worst >= floor,
                        f"min beam/brute ratio {worst:.6f} over {draws} draws (floor {floor})")


def check_auc(instances: int = 100, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng([seed, 4])
    worst = 0.0
    for i in range(instances):
        n = int(rng.integers(2, 60))
        scores = np.round(rng.random(n), 1 if i % 2 else 6)
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        weights = rng.random(n) + 0.1 if i % 3 else np.ones(n)
        worst = max(worst, abs(auc(scores, labels, weights)
                               - ref_auc(scores.tolist(), labels.tolist(), weights.tolist())))
    return OracleResult("auc_pairwise", worst <= 1e-12,
                        f"max |auc - pairwise| = {worst:.2e} over {instances} instances")


def check_spearman(instances: int = 100, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng([seed, 5])
    worst = 0.0
    for i in range(instances):
        n = int(rng.integers(3, 80))
        x = rng.integers(0, 2, n).astype(float) if i % 2 else rng.random(n)
        y = np.round(rng.random(n), 1)
        x[0], x[1] = 0.0, 1.0
        y[0], y[1] = 0.0, 1.0
        worst = max(worst, abs(spearman_rho(x, y) - ref_spearman(x.tolist(), y.tolist())))
    return OracleResult("spearman_rank_pearson", worst <= 1e-12,
                        f"max |rho - reference| = {worst:.2e} over {instances} instances")


def check_gradient(instances: int = 20, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng([seed, 6])
    worst = 0.0
    dim, eps = 16, 1e-6
    for _ in range(instances):
        n = int(rng.integers(5, 30))
        ids = rng.integers(1, dim, (n, 3))
        batch = FeatureBatch(ids, rng.random((n, 3)))
        y = rng.integers(0, 2, n).astype(float)
        z = rng.random(n)
        head = Head(rng.normal(size=dim), float(rng.normal()))
        head.weights[0] = 0.0
        l2 = float(rng.random() * 0.1)
        _, grad, gb = loss_and_grad(head, batch, y, z, l2)
        for j in list(np.unique(ids))[:5]:
            w0 = head.weights[j]
            head.weights[j] = w0 + eps
            up = loss_and_grad(head, batch, y, z, l2)[0]
            head.weights[j] = w0 - eps
            down = loss_and_grad(head, batch, y, z, l2)[0]
            head.weights[j] = w0
            fd = (up - down) / (2 * eps)
            worst = max(worst, abs(fd - grad[j]) / max(abs(fd), 1e-3))
        b0 = head.bias
        head.bias = b0 + eps
        up = loss_and_grad(head, batch, y, z, l2)[0]
        head.bias = b0 - eps
        down = loss_and_grad(head, batch, y, z, l2)[0]
        head.bias = b0
        fd = (up - down) / (2 * eps)
        worst = max(worst, abs(fd - gb) / max(abs(fd), 1e-3))
    return OracleResult("bce_gradient_fd", worst <= 1e-5,
                        f"max relative gradient error {worst:.2e}")


def check_exposure(instances: int = 10_000, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng([seed, 7])
    bad = 0
    for _ in range(instances):
        sdr = rng.random(int(rng.integers(1, 9))).tolist()
        p = exposure_probs(sdr)
        if p[0] != 1.0 or any(b > a for a, b in zip(p, p[1:])):
            bad += 1
    return OracleResult("exposure_probs", bad == 0,
                        f"{instances - bad}/{instances} inputs start at 1 and never increase")


def check_hitrate(instances: int = 1000, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng([seed, 8])
    bad = 0
    for _ in range(instances):
        m = int(rng.integers(1, 8))
        a = rng.permutation(12)[:m].tolist()
        b = rng.permutation(12)[:m].tolist()
        for k in range(1, m + 1):
            want = sum(1 for x in a[:k] if x in b[:k]) / k
            if hitrate_at_k(a, b, k) != want:
                bad += 1
    return OracleResult("hitrate_set_overlap", bad == 0, f"{bad} mismatches")


def run_all(quick: bool = False) -> list[OracleResult]:
    scale = 5 if quick else 1
    return [
        check_beam_exact(500 // scale),
        check_brute_force_reference(60 // scale),
        check_beam_quality(500 // scale),
        check_auc(),
        check_spearman(),
        check_gradient(),
        check_exposure(10_000 // scale),
        check_hitrate(),
    ]
