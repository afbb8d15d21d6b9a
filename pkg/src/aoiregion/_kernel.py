"""Compiled slot loop.

Mirrors ``simulator.step`` plus the selectors in ``policies`` operation for
operation, so a trace produced here is bit-identical to the pure-Python
replay driven by the same random streams.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def advance(kind, n_slots, t0, m, p, a, b, c, scalar, u_chan, u_pol,
            aoi, delivered, aoi_sum, block_len, block_counts, cur_block,
            record_gaps, gap_dev, gap_val, gap_n, seen,
            proj_sq, record_spread, spread):
    n = p.shape[0]
    score = np.empty(n)
    chosen = np.zeros(n, dtype=np.bool_)
    weights = np.empty(n)
    if kind == 0:
        wsum = 0.0
        for i in range(n):
            weights[i] = b[i] / p[i]
            wsum += weights[i]

    for s in range(n_slots):
        t = t0 + s
        if kind == 0:
            for i in range(n):
                score[i] = (t * a[i] - delivered[i]) / b[i]
            if record_spread:
                dsys = 0.0
                for i in range(n):
                    dsys += weights[i] * score[i]
                dsys /= wsum
                worst = 0.0
                for i in range(n):
                    gap = abs(score[i] - dsys)
                    if gap > worst:
                        worst = gap
                spread[t] = worst
        elif kind == 1:
            for i in range(n):
                debt = t * a[i] - delivered[i]
                if debt < 0.0:
                    debt = 0.0
                age = float(aoi[i])
                score[i] = b[i] * p[i] / 2.0 * age * (age + 2.0) + scalar * p[i] * debt
        else:
            for i in range(n):
                score[i] = -u_pol[s, i]

        for i in range(n):
            chosen[i] = False
        for k in range(m):
            best = -1
            for i in range(n):
                if not chosen[i] and (best < 0 or score[i] > score[best]):
                    best = i
            chosen[best] = True

        inc = float(m)
        for i in range(n):
            aoi_sum[i] += aoi[i]
            if chosen[i] and u_chan[s, i] < p[i]:
                if record_gaps:
                    if seen[i]:
                        k = gap_n[0]
                        gap_dev[k] = i
                        gap_val[k] = aoi[i]
                        gap_n[0] = k + 1
                    seen[i] = True
                aoi[i] = 1
                delivered[i] += 1
                cur_block[i] += 1
                inc -= 1.0 / p[i]
            else:
                aoi[i] += 1
        proj_sq[0] += inc * inc

        if (t + 1) % block_len == 0:
            kb = (t + 1) // block_len - 1
            if kb < block_counts.shape[0]:
                for i in range(n):
                    block_counts[kb, i] = cur_block[i]
            for i in range(n):
                cur_block[i] = 0
