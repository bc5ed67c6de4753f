"""Explicit per-slot Markov chains, solved numerically, as formula oracles."""
import numpy as np


def _stationary(P):
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def wifi_chain_rate(q, w0, m, pb, pf):
    """DCF chain: (i, k) counts down on idle slots, (i, 0) is the transmit slot."""
    idx = {"I": 0}
    for i in range(m + 1):
        for k in range(w0 << i):
            idx[(i, k)] = len(idx)
    P = np.zeros((len(idx), len(idx)))
    I = idx["I"]
    P[I, I] += 1 - q
    for k in range(w0):
        P[I, idx[(0, k)]] += q / w0
    for i in range(m + 1):
        for k in range(1, w0 << i):
            s = idx[(i, k)]
            P[s, idx[(i, k - 1)]] += 1 - pb
            P[s, s] += pb
        s = idx[(i, 0)]
        P[s, I] += 1 - pf
        j = min(i + 1, m)
        for k in range(w0 << j):
            P[s, idx[(j, k)]] += pf / (w0 << j)
    pi = _stationary(P)
    return sum(pi[idx[(i, 0)]] for i in range(m + 1))


def cat4_chain_rate(q, w0, m, pb, pf):
    """Cat.4 chain: initial CCA, immediate transmit or counted backoff, drop after stage m.

    A counter of ``k`` needs ``k`` idle slots; ``k = 0`` transmits in the next slot.
    """
    idx = {"I": 0, "T": 1}
    for i in range(m + 1):
        idx[("T", i)] = len(idx)
        for k in range(1, w0 << i):
            idx[(i, k)] = len(idx)
    P = np.zeros((len(idx), len(idx)))

    def enter(src, i, w):
        W = w0 << i
        for k in range(W):
            dst = idx[("T", i)] if k == 0 else idx[(i, k)]
            P[src, dst] += w / W

    I, T = idx["I"], idx["T"]
    P[I, I] += 1 - q
    P[I, T] += q * (1 - pb)
    enter(I, 0, q * pb)
    P[T, I] += 1 - pf
    enter(T, 0, pf)
    for i in range(m + 1):
        for k in range(1, w0 << i):
            s = idx[(i, k)]
            P[s, s] += pb
            P[s, idx[("T", i)] if k == 1 else idx[(i, k - 1)]] += 1 - pb
        s = idx[("T", i)]
        P[s, I] += 1 - pf
        if i < m:
            enter(s, i + 1, pf)
        else:
            P[s, I] += pf
    pi = _stationary(P)
    return pi[T] + sum(pi[idx[("T", i)]] for i in range(m + 1))
