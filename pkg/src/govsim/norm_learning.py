"""Norm emergence on a grid under hierarchical supervision.

Agents play a pure coordination game with a random neighbour and learn
with stateless Q-learning.  Every subgroup governor tallies the reported
``(action, reward)`` pairs, votes a public opinion, imitates a neighbouring
governor through the Fermi rule, and broadcasts the result as the
supervision policy.  Agents that already play the policy slow down their
learning/exploration; the others speed up (a WoLF-style heuristic).

The module has two layers.  The small functions operating on
:class:`NormAgentState` / :class:`GovernorRecord` are the reference
semantics.  :class:`NormLearningSim` runs the same step on whole batches
of independent trials with numpy; every trial draws from its own random
generator so a trial's trajectory does not depend on what else is in the
batch.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from govsim.errors import InvalidParameterError, TopologyTooSmallError
from govsim.topology import GridPartition, GridTopology

IL_DECAY = 0.99
"""Per-step multiplicative decay used by the decaying IL baselines."""


class AdaptationMode(str, enum.Enum):
    IL_FIXED = "il-fixed"
    IL_DECAY_ALPHA = "il-decay-alpha"
    IL_DECAY_EPSILON = "il-decay-epsilon"
    HL_ALPHA = "hl-alpha"
    HL_EPSILON = "hl-epsilon"
    HL_ALPHA_EPSILON = "hl-alpha-epsilon"

    @property
    def hierarchical(self) -> bool:
        return self.value.startswith("hl")

    @property
    def adapts_alpha(self) -> bool:
        return self in (AdaptationMode.HL_ALPHA, AdaptationMode.HL_ALPHA_EPSILON)

    @property
    def adapts_epsilon(self) -> bool:
        return self in (AdaptationMode.HL_EPSILON, AdaptationMode.HL_ALPHA_EPSILON)


class RateVariant(str, enum.Enum):
    """How a losing agent raises its rate.

    ``AS_PRINTED``: ``(1 - rate) * lam + lam``.
    ``SMOOTHED``: ``(1 - lam) * rate + lam`` (moves toward 1).
    """

    AS_PRINTED = "as-printed"
    SMOOTHED = "smoothed"


@dataclass(frozen=True)
class CoordinationGamePayoff:
    match_reward: float = 1.0
    mismatch_penalty: float = -1.0

    def __post_init__(self):
        if not self.match_reward > self.mismatch_penalty:
            raise InvalidParameterError("match_reward must exceed mismatch_penalty")


@dataclass
class NormAgentState:
    q_values: np.ndarray
    alpha: float = 0.1
    epsilon: float = 0.01
    last_action: int = -1
    last_reward: float = 0.0

    @classmethod
    def fresh(cls, num_actions: int, alpha: float = 0.1, epsilon: float = 0.01) -> NormAgentState:
        return cls(np.zeros(num_actions), alpha, epsilon)

    @property
    def num_actions(self) -> int:
        return len(self.q_values)

    @property
    def greedy_action(self) -> int:
        return int(np.argmax(self.q_values))


@dataclass
class GovernorRecord:
    frequency: np.ndarray
    mean_reward: np.ndarray
    public_opinion: int
    fitness: float
    supervision_policy: int = field(default=-1)

    def __post_init__(self):
        if self.supervision_policy < 0:
            self.supervision_policy = self.public_opinion


def _argmax_random_tie(values: np.ndarray, rng: np.random.Generator) -> int:
    best = np.flatnonzero(values == values.max())
    return int(best[rng.integers(len(best))]) if len(best) > 1 else int(best[0])


def select_action(agent: NormAgentState, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties are broken uniformly at random."""
    if rng.random() < agent.epsilon:
        return int(rng.integers(agent.num_actions))
    return _argmax_random_tie(agent.q_values, rng)


def play_round(
    agents: Sequence[NormAgentState],
    topology: GridTopology,
    payoff: CoordinationGamePayoff,
    rng: np.random.Generator,
) -> list[tuple[NormAgentState, int, float]]:
    """One interaction round over all agents (row-major order).

    All agents first commit to this round's action, then each focal agent
    meets one uniformly random neighbour and is paid by the coordination
    game.  Only the focal agent's reward is recorded.
    """
    if topology.size < 2:
        raise TopologyTooSmallError("every agent needs at least one neighbour (R >= 2)")
    if len(agents) != topology.size:
        raise InvalidParameterError("one agent per grid cell is required")
    actions = [select_action(a, rng) for a in agents]
    out = []
    for cell, agent in zip(topology.cells, agents):
        nbrs = topology.neighbors(cell)
        j = topology.index(nbrs[rng.integers(len(nbrs))])
        i = topology.index(cell)
        r = payoff.match_reward if actions[i] == actions[j] else payoff.mismatch_penalty
        agent.last_action, agent.last_reward = actions[i], r
        out.append((agent, actions[i], r))
    return out


def aggregate_opinion(
    reports: Sequence[tuple[int, float]], num_actions: int | None = None
) -> GovernorRecord:
    """Tally frequencies and mean rewards; vote the most frequent action."""
    if len(reports) == 0:
        raise InvalidParameterError("a governor needs at least one report")
    acts = np.array([a for a, _ in reports], dtype=np.int64)
    rews = np.array([r for _, r in reports], dtype=float)
    size = max(num_actions or 0, int(acts.max()) + 1)
    freq = np.bincount(acts, minlength=size)
    total = np.bincount(acts, weights=rews, minlength=size)
    mean = np.divide(total, freq, out=np.zeros(size), where=freq > 0)
    opinion = int(np.argmax(freq))
    return GovernorRecord(freq, mean, opinion, float(mean[opinion]))


def fermi_probability(u_x, u_y, beta: float):
    """Probability that a player with fitness ``u_x`` imitates one with ``u_y``."""
    if beta <= 0:
        raise InvalidParameterError("beta must be positive")
    p = expit(beta * (np.asarray(u_y, dtype=float) - np.asarray(u_x, dtype=float)))
    return float(p) if np.ndim(p) == 0 else p


def generate_supervision_policy(
    own: GovernorRecord,
    peer: GovernorRecord | None,
    beta: float,
    rng: np.random.Generator,
) -> int:
    if peer is None:
        own.supervision_policy = own.public_opinion
        return own.supervision_policy
    p = fermi_probability(own.fitness, peer.fitness, beta)
    own.supervision_policy = peer.public_opinion if rng.random() < p else own.public_opinion
    return own.supervision_policy


def adapt_rate(rate, winning, lam: float, variant: RateVariant = RateVariant.AS_PRINTED):
    """Win: shrink by ``(1 - lam)``.  Lose: grow according to ``variant``.

    The as-printed rule can reach ``2 * lam``; it is capped at 1 so rates
    stay valid probabilities for ``lam > 0.5``.  Works elementwise on arrays.
    """
    rate = np.asarray(rate, dtype=float)
    if RateVariant(variant) is RateVariant.AS_PRINTED:
        grown = np.minimum((1.0 - rate) * lam + lam, 1.0)
    else:
        grown = (1.0 - lam) * rate + lam
    out = np.where(winning, (1.0 - lam) * rate, grown)
    return float(out) if out.ndim == 0 else out


def adapt_parameters(
    agent: NormAgentState,
    supervision_policy: int,
    lam: float,
    mode: AdaptationMode,
    variant: RateVariant = RateVariant.AS_PRINTED,
) -> NormAgentState:
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterError("lambda must lie in [0, 1]")
    mode = AdaptationMode(mode)
    winning = agent.last_action == supervision_policy
    if mode.adapts_alpha:
        agent.alpha = adapt_rate(agent.alpha, winning, lam, variant)
    if mode.adapts_epsilon:
        agent.epsilon = adapt_rate(agent.epsilon, winning, lam, variant)
    return agent


def q_update(agent: NormAgentState, action: int, reward: float) -> NormAgentState:
    agent.q_values[action] += agent.alpha * (reward - agent.q_values[action])
    return agent


def _greedy_matrix(agents) -> np.ndarray:
    if isinstance(agents, np.ndarray):
        return np.argmax(agents, axis=-1)
    return np.array([a.greedy_action for a in agents])


def coordination_ratio(agents) -> float:
    """Share of agents whose greedy action is the population's modal one.

    ``agents`` is a sequence of :class:`NormAgentState` or an ``(M, A)``
    array of Q-values.
    """
    greedy = _greedy_matrix(agents)
    if greedy.size == 0:
        raise InvalidParameterError("empty population")
    return float(np.bincount(greedy).max() / greedy.size)


def norm_poa(agents) -> float:
    return 1.0 - coordination_ratio(agents)


@dataclass(frozen=True)
class NormParams:
    num_actions: int = 4
    mode: AdaptationMode = AdaptationMode.HL_ALPHA
    variant: RateVariant = RateVariant.AS_PRINTED
    alpha0: float = 0.1
    epsilon0: float = 0.01
    beta: float = 0.1
    lam: float = 0.1
    payoff: CoordinationGamePayoff = CoordinationGamePayoff()
    decay: float = IL_DECAY


@dataclass
class NormSeries:
    """Per-step trajectories, each shaped ``(trials, steps)``."""

    coordination: np.ndarray
    mean_alpha: np.ndarray
    mean_epsilon: np.ndarray


class NormLearningSim:
    """Batched norm-learning runs, one independent random stream per trial.

    Each step consumes exactly one ``(6, M)`` block of uniforms per trial,
    rows used as: exploration coin, exploratory action, greedy tie-break,
    neighbour slot, peer-governor slot, imitation coin.
    """

    def __init__(self, partition: GridPartition, params: NormParams, seeds: Sequence):
        topo = partition.topology
        if topo.size < 2:
            raise TopologyTooSmallError("norm learning needs R >= 2")
        if params.num_actions < 1:
            raise InvalidParameterError("need at least one action")
        self.partition = partition
        self.params = params
        self.rngs = [np.random.default_rng(s) for s in seeds]
        T, M, A = len(self.rngs), topo.size, params.num_actions
        self.T, self.M, self.A = T, M, A
        self.G = partition.num_groups
        # action-major layout: each action plane is a contiguous (T, M) block
        self.q = np.zeros((A, T, M))
        self.alpha = np.full((T, M), float(params.alpha0))
        self.epsilon = np.full((T, M), float(params.epsilon0))
        self._nbr, self._deg = topo.neighbor_table
        self._group = partition.assignment
        self._peers, self._npeers = partition.peer_table
        self._buf = np.empty((T, 6, M))
        self._trial_idx = np.arange(T)[:, None]
        self._agent_idx = np.arange(M)[None, :]

    def _draw(self) -> np.ndarray:
        for g, row in zip(self.rngs, self._buf):
            g.random(out=row)
        return self._buf.transpose(1, 0, 2)

    def _greedy_lowest(self) -> np.ndarray:
        best = self.q[0].copy()
        greedy = np.zeros(best.shape, dtype=np.int64)
        for a in range(1, self.A):
            better = self.q[a] > best
            greedy[better] = a
            np.maximum(best, self.q[a], out=best)
        return greedy

    def _select(self, u: np.ndarray) -> np.ndarray:
        q = self.q
        qmax = q.max(axis=0)
        ties = q == qmax
        count = ties.sum(axis=0)
        # pick the k-th maximal action, k uniform in [0, count)
        pick = np.floor(u[2] * count)
        greedy = np.zeros(qmax.shape, dtype=np.int64)
        seen = np.zeros(qmax.shape)
        for a in range(self.A):
            hit = ties[a] & (seen == pick)
            greedy[hit] = a
            seen += ties[a]
        explore = u[0] < self.epsilon
        random_action = np.minimum((u[1] * self.A).astype(np.int64), self.A - 1)
        return np.where(explore, random_action, greedy)

    def _supervise(self, actions: np.ndarray, rewards: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Aggregate, vote, imitate; returns each agent's broadcast policy."""
        T, G, A = self.T, self.G, self.A
        flat = ((self._trial_idx * G + self._group[None, :]) * A + actions).ravel()
        freq = np.bincount(flat, minlength=T * G * A).reshape(T, G, A)
        total = np.bincount(flat, weights=rewards.ravel(), minlength=T * G * A).reshape(T, G, A)
        mean = np.divide(total, freq, out=np.zeros_like(total), where=freq > 0)
        opinion = np.argmax(freq, axis=-1)
        fitness = np.take_along_axis(mean, opinion[..., None], axis=-1)[..., 0]

        slot = np.minimum((u[4, :, :G] * self._npeers).astype(np.int64), np.maximum(self._npeers - 1, 0))
        peer = self._peers[np.arange(G)[None, :], slot]
        p = fermi_probability(fitness, np.take_along_axis(fitness, peer, axis=1), self.params.beta)
        adopt = (self._npeers > 0) & (u[5, :, :G] < p)
        policy = np.where(adopt, np.take_along_axis(opinion, peer, axis=1), opinion)
        return policy[:, self._group]

    def step(self) -> None:
        prm = self.params
        u = self._draw()
        actions = self._select(u)
        slot = np.minimum((u[3] * self._deg).astype(np.int64), self._deg - 1)
        partner = self._nbr[self._agent_idx, slot]
        partner_action = np.take_along_axis(actions, partner, axis=1)
        rewards = np.where(
            actions == partner_action, prm.payoff.match_reward, prm.payoff.mismatch_penalty
        )

        mode = prm.mode
        if mode.hierarchical:
            winning = actions == self._supervise(actions, rewards, u)
            if mode.adapts_alpha:
                self.alpha = adapt_rate(self.alpha, winning, prm.lam, prm.variant)
            if mode.adapts_epsilon:
                self.epsilon = adapt_rate(self.epsilon, winning, prm.lam, prm.variant)
        elif mode is AdaptationMode.IL_DECAY_ALPHA:
            self.alpha = self.alpha * prm.decay
        elif mode is AdaptationMode.IL_DECAY_EPSILON:
            self.epsilon = self.epsilon * prm.decay

        flat = self.q.reshape(self.A, -1)
        cols = np.arange(flat.shape[1])
        sel = actions.ravel()
        flat[sel, cols] += self.alpha.ravel() * (rewards.ravel() - flat[sel, cols])

    def coordination(self) -> np.ndarray:
        greedy = self._greedy_lowest()
        counts = np.bincount(
            (self._trial_idx * self.A + greedy).ravel(), minlength=self.T * self.A
        ).reshape(self.T, self.A)
        return counts.max(axis=1) / self.M

    def run(self, steps: int) -> NormSeries:
        coord = np.empty((self.T, steps))
        malpha = np.empty((self.T, steps))
        meps = np.empty((self.T, steps))
        for t in range(steps):
            self.step()
            coord[:, t] = self.coordination()
            malpha[:, t] = self.alpha.mean(axis=1)
            meps[:, t] = self.epsilon.mean(axis=1)
        return NormSeries(coord, malpha, meps)
