"""Per-node posteriors over threat types and lock/prune credible sets."""

from __future__ import annotations

import math

import numpy as np

from ._validation import check_probability_vector


def update_belief(b, a, o, protos):
    """Bayes update of one node's belief after observing ``o`` under action ``a``.

    Returns ``(posterior, degenerate)``. When every hypothesis with prior mass
    assigns ``o`` zero density the prior is returned unchanged and
    ``degenerate`` is True.
    """
    return update_belief_loglik(b, protos.log_likelihoods(a, o))


def update_belief_loglik(b, loglik):
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore"):
        logpost = np.log(b) + loglik
    top = logpost.max()
    if not np.isfinite(top):
        return b.copy(), True
    w = np.exp(logpost - top)
    return w / w.sum(), False


def posterior_log_gap(b, i, j):
    """``log(b_(i) / b_(j))`` for 1-based descending ranks ``i < j``."""
    b = np.sort(np.asarray(b, dtype=float))[::-1]
    if not 1 <= i < j <= b.size:
        raise IndexError(f"ranks must satisfy 1 <= i < j <= {b.size}, got ({i}, {j})")
    hi, lo = b[i - 1], b[j - 1]
    if lo == 0.0:
        return math.inf
    return math.log(hi / lo)


def shrink_credible_set(members, locked, b, rho_lock, eps_prune):
    """One application of the lock/prune rule to a single node.

    ``members`` is a boolean mask over threat types (index 0 is type 1).
    Returns the new ``(members, locked)``; locked entries pass through.
    """
    members = np.asarray(members, dtype=bool)
    if locked:
        return members.copy(), True
    b = np.asarray(b, dtype=float)
    top = int(np.argmax(b))
    if b[top] >= rho_lock:
        out = np.zeros_like(members)
        out[top] = True
        return out, True
    out = members & (b >= eps_prune)
    if not out.any():
        out = np.zeros_like(members)
        out[top] = True
    return out, False


class CredibleSets:
    """Credible sets ``U_v`` for every node, stored as a boolean ``(S, n_types)`` mask."""

    def __init__(self, n_nodes, n_types):
        self.members = np.ones((n_nodes, n_types), dtype=bool)
        self.locked = np.zeros(n_nodes, dtype=bool)

    @classmethod
    def from_sets(cls, sets, n_types):
        """Build from an iterable of per-node sets of 1-based threat ids."""
        sets = list(sets)
        out = cls(len(sets), n_types)
        out.members[:] = False
        for v, s in enumerate(sets):
            if not s:
                raise ValueError(f"credible set of node {v} is empty")
            for theta in s:
                out.members[v, theta - 1] = True
        out.locked[:] = out.members.sum(axis=1) == 1
        return out

    @property
    def n_nodes(self):
        return self.members.shape[0]

    def sizes(self):
        return self.members.sum(axis=1)

    def members_of(self, v):
        return {int(k) + 1 for k in np.flatnonzero(self.members[v])}

    def shrink(self, v, b, rho_lock, eps_prune):
        self.members[v], self.locked[v] = shrink_credible_set(
            self.members[v], self.locked[v], b, rho_lock, eps_prune
        )

    def copy(self):
        out = CredibleSets.__new__(CredibleSets)
        out.members = self.members.copy()
        out.locked = self.locked.copy()
        return out


def all_singleton(U, reachable):
    """True iff every node in ``reachable`` has a singleton credible set."""
    sizes = U.sizes()
    return all(sizes[v] == 1 for v in reachable)


class BeliefState:
    """Per-node probability vectors over threat types, uniform at start."""

    def __init__(self, n_nodes, n_types):
        self.b = np.full((n_nodes, n_types), 1.0 / n_types)
        self.degenerate_events = 0

    def update(self, v, a, o, protos):
        self.b[v], degenerate = update_belief(self.b[v], a, o, protos)
        if degenerate:
            self.degenerate_events += 1
        return self.b[v]

    def update_loglik(self, v, loglik):
        self.b[v], degenerate = update_belief_loglik(self.b[v], loglik)
        if degenerate:
            self.degenerate_events += 1
        return self.b[v]

    def map_types(self):
        """MAP threat id per node; ties go to the lowest id."""
        return np.argmax(self.b, axis=1) + 1

    def check(self):
        for row in self.b:
            check_probability_vector(row)


def belief_snapshot_csv(beliefs, sets, step, path=None):
    """CSV rows ``step,node,p_1..p_k,set_size`` for every node; returns the text.

    Pass ``sets=None`` for planners without credible sets (size written as the
    number of types).
    """
    b = beliefs.b
    n_nodes, n_types = b.shape
    sizes = sets.sizes() if sets is not None else np.full(n_nodes, n_types)
    lines = ["step,node," + ",".join(f"p_{k + 1}" for k in range(n_types)) + ",set_size"]
    for v in range(n_nodes):
        probs = ",".join(repr(float(x)) for x in b[v])
        lines.append(f"{step},{v},{probs},{int(sizes[v])}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "a" if step else "w") as fh:
            fh.write(text if not step else text.split("\n", 1)[1])
    return text
