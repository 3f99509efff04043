"""Independent reference implementations used by the tests.

Nothing here imports the tracker; the enumeration oracle works on the full
path space directly.
"""
from __future__ import annotations

import itertools

import numpy as np


class TableTransition:
    """Next-frequency kernel given as explicit tables.

    ``steps[k] = (nodes, table)`` where ``table`` has one axis per previous
    step (full-history dependence) plus the new axis, or just two axes
    ``(prev, new)`` for a Markov chain (``markov=True``).
    """

    def __init__(self, steps, markov: bool = False):
        self.steps = steps
        self.markov = markov

    def kernel(self, belief):
        k = belief.indices[-1]  # next step index (0-based into steps)
        nodes, table = self.steps[k]
        shape = belief.joint.probs.shape
        if k == 0:
            return nodes, np.broadcast_to(table.reshape((1,) * len(shape) + (-1,)), shape + (len(nodes),))
        if self.markov:
            # depends only on the last retained axis
            rows = table.reshape((1,) * (len(shape) - 1) + table.shape)
            return nodes, np.broadcast_to(rows, shape + (len(nodes),))
        # full-history table indexed by every retained real axis (axis 0 is the pinned reference)
        real = len(shape) - 1 if belief.indices[0] == 0 else len(shape)
        if real != table.ndim - 1:
            raise ValueError("full-history table needs the complete history")
        return nodes, table.reshape(shape[: len(shape) - real] + table.shape)


def random_chain(rng, steps: int, nodes: int, markov: bool = False):
    out = []
    shape = ()
    for k in range(steps):
        y = np.sort(rng.normal(0.0, 0.5, nodes))
        if k == 0:
            table = rng.dirichlet(np.ones(nodes))
        elif markov:
            table = rng.dirichlet(np.ones(nodes), size=nodes)
        else:
            table = rng.dirichlet(np.ones(nodes), size=shape)
        shape = shape + (nodes,)
        out.append((y, table))
    return out


def enumerate_paths(steps, likelihoods, T: float, markov: bool = False):
    """Dense posterior over complete paths.

    Returns ``(weights, paths, theta)``: normalized path weights, the path
    node values (one column per step), and ``theta = T * sum(omega)``.
    """
    sizes = [len(y) for y, _ in steps]
    paths_idx = np.array(list(itertools.product(*[range(s) for s in sizes])))
    w = np.ones(len(paths_idx))
    for k, (y, table) in enumerate(steps):
        if k == 0:
            w *= table[paths_idx[:, 0]]
        elif markov:
            w *= table[paths_idx[:, k - 1], paths_idx[:, k]]
        else:
            w *= table[tuple(paths_idx[:, : k + 1].T)]
        if likelihoods[k] is not None:
            w *= np.asarray(likelihoods[k])[paths_idx[:, k]]
    w = w / w.sum()
    vals = np.column_stack([steps[k][0][paths_idx[:, k]] for k in range(len(steps))])
    return w, paths_idx, T * vals.sum(axis=1), vals


def conditional_moment(w, key_idx, x, q):
    """``E(x^q | key)`` for every distinct key row; returns dict key -> value."""
    out = {}
    keys = [tuple(r) for r in key_idx]
    num, den = {}, {}
    for wi, k, xi in zip(w, keys, x):
        num[k] = num.get(k, 0.0) + wi * xi**q
        den[k] = den.get(k, 0.0) + wi
    for k in num:
        out[k] = num[k] / den[k] if den[k] > 0 else np.nan
    return out, den


def allan_streaming(y, m):
    """Overlapping Allan variance by explicit loops (no cumulative sums)."""
    y = [float(v) for v in y]
    M = len(y)
    total = 0.0
    count = 0
    for j in range(M - 2 * m + 1):
        a = sum(y[j : j + m]) / m
        b = sum(y[j + m : j + 2 * m]) / m
        total += (b - a) ** 2
        count += 1
    return total / (2.0 * count)
