"""Numeric inner loops, jitted with numba when available.

Set ``ATTACKPLAN_NUMBA=0`` to force the pure-numpy path.  Both paths are
always importable as ``*_numpy`` / ``*_numba`` so tests and the benchmark
can compare them directly.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

USE_NUMBA = numba is not None and os.environ.get("ATTACKPLAN_NUMBA", "1") != "0"


def propagate_numpy(dist, matrix, days):
    if days == 0:
        return dist.copy()
    return dist @ np.linalg.matrix_power(matrix, days)


def run_policy_numpy(next_state, obs, reward, node_action, node_child, starts):
    """Walk a flattened policy tree for every start state in lockstep.

    ``node_action[n] < 0`` marks a terminate leaf; ``node_child[n, o] < 0``
    means the observation leaves the tree (treated as terminate).
    """
    n = starts.shape[0]
    state = starts.astype(np.int64).copy()
    node = np.zeros(n, dtype=np.int64)
    total = np.zeros(n)
    alive = node_action[node] >= 0
    while alive.any():
        idx = np.nonzero(alive)[0]
        a = node_action[node[idx]]
        s = state[idx]
        total[idx] += reward[a, s]
        o = obs[a, s]
        state[idx] = next_state[a, s]
        nxt = node_child[node[idx], o]
        node[idx] = np.where(nxt >= 0, nxt, 0)
        alive[idx] = (nxt >= 0) & (node_action[np.maximum(nxt, 0)] >= 0)
    return total, state


if numba is not None:

    @numba.njit(cache=True)
    def propagate_numba(dist, matrix, days):
        out = dist.copy()
        k = matrix.shape[0]
        for _ in range(days):
            nxt = np.zeros(k)
            for i in range(k):
                p = out[i]
                if p == 0.0:
                    continue
                for j in range(k):
                    nxt[j] += p * matrix[i, j]
            out = nxt
        return out

    @numba.njit(cache=True)
    def run_policy_numba(next_state, obs, reward, node_action, node_child, starts):
        n = starts.shape[0]
        total = np.zeros(n)
        finals = np.empty(n, dtype=np.int64)
        for r in range(n):
            s = starts[r]
            node = 0
            acc = 0.0
            while True:
                a = node_action[node]
                if a < 0:
                    break
                acc += reward[a, s]
                o = obs[a, s]
                s = next_state[a, s]
                node = node_child[node, o]
                if node < 0:
                    break
            total[r] = acc
            finals[r] = s
        return total, finals

else:  # pragma: no cover
    propagate_numba = None
    run_policy_numba = None


def propagate(dist, matrix, days):
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if USE_NUMBA:
        return propagate_numba(dist, matrix, int(days))
    return propagate_numpy(dist, matrix, int(days))


def run_policy(next_state, obs, reward, node_action, node_child, starts):
    args = (
        np.ascontiguousarray(next_state, dtype=np.int64),
        np.ascontiguousarray(obs, dtype=np.int64),
        np.ascontiguousarray(reward, dtype=np.float64),
        np.ascontiguousarray(node_action, dtype=np.int64),
        np.ascontiguousarray(node_child, dtype=np.int64),
        np.ascontiguousarray(starts, dtype=np.int64),
    )
    if USE_NUMBA:
        return run_policy_numba(*args)
    return run_policy_numpy(*args)
