"""Leader-follower distributed control over the cyber graph.

Every follower agent steers a shared scalar (the secondary
frequency-restoration signal here, though vector states work too) toward the
leader's reference x0 using only neighbor differences and, where a direct
leader link exists, the leader error:

    u_i = -h_i * sum_j a_ij (x_i - x_j)  -  h_i * b_i * (x_i - x0)

Agents flagged as compromised are removed from the working set: their
adjacency row/column is zeroed so their state stops influencing anyone, and
they are excluded from the consensus-error metric until restored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class StaleDataError(KeyError):
    """A required neighbor state is missing (agent dropped or compromised)."""


class EmptyConsensusSetError(ValueError):
    pass


@dataclass
class ConsensusController:
    """Working adjacency plus gains; mutates only via remove/restore."""

    adjacency: np.ndarray          # original matrix, kept pristine
    gains: np.ndarray              # h_i > 0 per agent
    leader_flags: np.ndarray       # b_i in {0, 1}
    leader_state: float            # x0
    working: np.ndarray = field(init=False)
    in_set: np.ndarray = field(init=False)

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        self.leader_flags = np.asarray(self.leader_flags, dtype=float)
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency must be square")
        if not np.array_equal(self.adjacency, self.adjacency.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(self.adjacency) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if np.any(self.gains <= 0):
            raise ValueError("all gains h_i must be > 0")
        if not set(np.unique(self.leader_flags)) <= {0.0, 1.0}:
            raise ValueError("leader flags must be 0 or 1")
        # uint8 so the arrays can back the integration kernel's views directly
        self.working = self.adjacency.copy()
        self.in_set = np.ones(n, dtype=np.uint8)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    def remove_agent(self, k: int) -> bool:
        """Drop agent k from the working set; True if it was already out."""
        already = not self.in_set[k]
        self.working[k, :] = 0.0
        self.working[:, k] = 0.0
        self.in_set[k] = 0
        return already

    def restore_agent(self, k: int) -> None:
        """Reinstate agent k's original links (both directions, in-set only)."""
        self.in_set[k] = 1
        for j in range(self.n_agents):
            if self.in_set[j]:
                self.working[k, j] = self.adjacency[k, j]
                self.working[j, k] = self.adjacency[j, k]


def consensus_input(ctrl: ConsensusController, states, i: int, t: float = 0.0) -> float:
    """Control input for agent i given the current shared states.

    states maps agent id -> value (dict or sequence).  A missing in-set
    neighbor raises StaleDataError; that signal feeds the supervisory layer,
    which responds by removing compromised agents from the consensus set.
    """
    def get(j):
        try:
            s = states[j]
        except (KeyError, IndexError) as exc:
            raise StaleDataError(f"no state for agent {j} at t={t}") from exc
        if s is None:
            raise StaleDataError(f"no state for agent {j} at t={t}")
        return s

    h = ctrl.gains[i]
    xi = get(i)
    total = 0.0
    for j in range(ctrl.n_agents):
        a = ctrl.working[i, j]
        if a != 0.0:
            total += a * (xi - get(j))
    return -h * total - h * ctrl.leader_flags[i] * (xi - ctrl.leader_state)


def consensus_error(states, x0: float, in_set=None) -> float:
    """max_i |x_i - x0| over the agents currently in the consensus set."""
    values = list(states.values()) if isinstance(states, dict) else list(states)
    if in_set is not None:
        values = [v for v, keep in zip(values, in_set) if keep]
    if not values:
        raise EmptyConsensusSetError("consensus error undefined on an empty set")
    return max(abs(v - x0) for v in values)


def iterate(ctrl: ConsensusController, states, dt: float, steps: int) -> np.ndarray:
    """Euler-iterate the protocol; handy as a convergence harness."""
    x = np.asarray(states, dtype=float).copy()
    for _ in range(steps):
        u = np.array([
            consensus_input(ctrl, x, i) if ctrl.in_set[i] else 0.0
            for i in range(ctrl.n_agents)
        ])
        x = x + dt * u
    return x
