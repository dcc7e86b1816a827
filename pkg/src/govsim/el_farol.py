"""El Farol bar attendance under community governors.

Each resident attends with probability ``p_i``.  Attendees are paid +1 on
an uncrowded night (attendance <= threshold) and -1 otherwise; residents
who stay home get 0.  A governor per subgroup learns, with tabular
Q-learning over a lattice of attendance probabilities, which probability
to broadcast, may copy a neighbouring governor's choice (Fermi rule), and
residents drift toward the broadcast value at rate ``mu``.

The benchmark population has no governors: every resident compares its
last reward with a random other resident's and may copy that resident's
attendance probability.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from govsim.errors import (
    DegenerateNormalizationError,
    InvalidParameterError,
)
from govsim.norm_learning import fermi_probability
from govsim.topology import GridPartition


@dataclass(frozen=True)
class BarConfig:
    population: int = 900
    threshold: int = 540
    mu: float = 0.1
    num_actions: int = 50
    epsilon_g: float = 0.01
    alpha_g: float = 0.1
    beta: float = 0.1
    horizon: int = 1000

    def __post_init__(self):
        if self.population < 1 or self.threshold < 1:
            raise InvalidParameterError("population and threshold must be positive")
        if self.threshold > self.population:
            raise InvalidParameterError("threshold cannot exceed the population")
        for name in ("mu", "epsilon_g", "alpha_g"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1]")
        if self.num_actions < 1:
            raise InvalidParameterError("need at least one governor action")

    @property
    def spacing(self) -> float:
        return 1.0 / self.num_actions

    def action_probability(self, k):
        """Attendance probability broadcast by governor action ``k``."""
        return np.asarray(k) * self.spacing


@dataclass
class BarAgentState:
    p: float = 0.5
    attended: bool = False
    last_reward: float = 0.0


@dataclass
class BarGovernorState:
    q_values: np.ndarray
    chosen_action: int = -1
    fitness: float = 0.0
    observed_ratio: float = 0.0

    @classmethod
    def fresh(cls, num_actions: int = 50) -> BarGovernorState:
        return cls(np.zeros(num_actions))


def attend_night(agents: Sequence[BarAgentState], rng: np.random.Generator) -> tuple[int, np.ndarray]:
    if len(agents) == 0:
        raise InvalidParameterError("no agents")
    p = np.array([a.p for a in agents])
    flags = rng.random(len(p)) < p
    for a, f in zip(agents, flags):
        a.attended = bool(f)
    return int(flags.sum()), flags


def bar_reward(attendance, attended, threshold: int):
    """+1 for attending an uncrowded night, -1 if crowded, 0 for staying home."""
    paid = np.where(np.asarray(attendance) <= threshold, 1.0, -1.0)
    out = np.where(attended, paid, 0.0)
    return float(out) if out.ndim == 0 else out


def governor_observe(attended, rewards) -> tuple[float, float]:
    """Attendance ratio and mean reward of one subgroup."""
    attended = np.asarray(attended, dtype=bool)
    rewards = np.asarray(rewards, dtype=float)
    if attended.size == 0:
        raise InvalidParameterError("empty subgroup")
    return float(attended.mean()), float(rewards.mean())


def _epsilon_greedy(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    best = np.flatnonzero(q == q.max())
    return int(best[rng.integers(len(best))])


def governor_step(
    governor: BarGovernorState,
    observation: tuple[float, float],
    peers: Sequence[BarGovernorState],
    beta: float,
    epsilon_g: float,
    alpha_g: float,
    rng: np.random.Generator,
) -> int:
    """Learn from last night, maybe imitate a peer, and pick the broadcast action.

    ``peers`` carry their own ``fitness`` and ``chosen_action`` from the
    same night; the imitated action is the one that earned the peer its
    fitness.
    """
    ratio, reward = observation
    governor.observed_ratio, governor.fitness = ratio, reward
    a = governor.chosen_action
    if a >= 0:
        governor.q_values[a] += alpha_g * (reward - governor.q_values[a])
    if peers:
        peer = peers[rng.integers(len(peers))]
        if peer.chosen_action >= 0 and rng.random() < fermi_probability(reward, peer.fitness, beta):
            governor.chosen_action = peer.chosen_action
            return governor.chosen_action
    governor.chosen_action = _epsilon_greedy(governor.q_values, epsilon_g, rng)
    return governor.chosen_action


def diffuse_policy(agent: BarAgentState, probability: float, mu: float) -> BarAgentState:
    if not 0.0 <= mu <= 1.0:
        raise InvalidParameterError("mu must lie in [0, 1]")
    agent.p = (1.0 - mu) * agent.p + mu * probability
    return agent


def benchmark_step(agents: Sequence[BarAgentState], beta: float, rng: np.random.Generator):
    """Simultaneous pairwise imitation of attendance probabilities."""
    m = len(agents)
    if m < 2:
        raise InvalidParameterError("benchmark imitation needs at least two agents")
    p = np.array([a.p for a in agents])
    r = np.array([a.last_reward for a in agents])
    other = rng.integers(m - 1, size=m)
    other += other >= np.arange(m)
    copy = rng.random(m) < fermi_probability(r, r[other], beta)
    new_p = np.where(copy, p[other], p)
    for a, v in zip(agents, new_p):
        a.p = float(v)
    return agents


def _minmax(values: Mapping[int, float]) -> tuple[float, float]:
    lo, hi = min(values.values()), max(values.values())
    if not hi > lo:
        raise DegenerateNormalizationError("all values are equal; cannot normalize")
    return lo, hi


def mars_poa(mean_rewards: Mapping[int, float]) -> dict[int, float]:
    """Min-max normalised performance loss per subgroup size."""
    lo, hi = _minmax(mean_rewards)
    return {n: 1.0 - (r - lo) / (hi - lo) for n, r in mean_rewards.items()}


def mars_pom(costs: Mapping[int, float]) -> dict[int, float]:
    lo, hi = _minmax(costs)
    return {n: (c - lo) / (hi - lo) for n, c in costs.items()}


@dataclass
class BarSeries:
    """Per-night trajectories, each shaped ``(trials, nights)``."""

    attendance: np.ndarray
    mean_reward: np.ndarray
    mean_p: np.ndarray

    def overcrowded(self, threshold: int, window: int = 100) -> np.ndarray:
        return (self.attendance[:, -window:] > threshold).sum(axis=1)

    def final_reward(self, window: int = 100) -> np.ndarray:
        return self.mean_reward[:, -window:].mean(axis=1)


class BarSim:
    """Batched El Farol runs with one random stream per trial.

    ``partition=None`` runs the governor-free imitation benchmark.  Each
    night consumes one ``(6, M)`` block of uniforms per trial: attendance
    coins, then (governors) peer slot, imitation coin, exploration coin,
    exploratory action, greedy tie-break, or (benchmark) partner slot and
    imitation coin.  Initial attendance probabilities are drawn U(0, 1)
    from the same stream before the first night.
    """

    def __init__(self, partition: GridPartition | None, config: BarConfig, seeds: Sequence,
                 population: int | None = None):
        self.config = config
        self.partition = partition
        if partition is not None:
            M = partition.topology.size
        else:
            M = population if population is not None else config.population
        if partition is None and M < 2:
            raise InvalidParameterError("benchmark imitation needs at least two agents")
        self.rngs = [np.random.default_rng(s) for s in seeds]
        self.T, self.M = len(self.rngs), M
        self.p = np.stack([g.random(M) for g in self.rngs])
        self.reward = np.zeros((self.T, M))
        self._buf = np.empty((self.T, 6, M))
        self._trial = np.arange(self.T)[:, None]
        if partition is not None:
            G, K = partition.num_groups, config.num_actions
            self.G, self.K = G, K
            self.q = np.zeros((self.T, G, K))
            self.action = np.full((self.T, G), -1, dtype=np.int64)
            self.fitness = np.zeros((self.T, G))
            self.ratio = np.zeros((self.T, G))
            self._group = partition.assignment
            self._sizes = partition.group_sizes.astype(float)
            self._peers, self._npeers = partition.peer_table

    def _draw(self) -> np.ndarray:
        for g, row in zip(self.rngs, self._buf):
            g.random(out=row)
        return self._buf.transpose(1, 0, 2)

    def _greedy(self, u: np.ndarray) -> np.ndarray:
        q = self.q
        greedy = np.argmax(q, axis=-1)
        ties = q == q.max(axis=-1, keepdims=True)
        count = ties.sum(axis=-1)
        multi = count > 1
        if multi.any():
            sub = ties[multi]
            pick = np.floor(u[multi] * count[multi]).astype(np.int64) + 1
            greedy[multi] = np.argmax(sub & (np.cumsum(sub, axis=-1) == pick[:, None]), axis=-1)
        return greedy

    def _governors(self, u: np.ndarray) -> None:
        cfg = self.config
        T, G, K = self.T, self.G, self.K
        flat = (self._trial * G + self._group[None, :]).ravel()
        att = np.bincount(flat, weights=self.attended.ravel().astype(float), minlength=T * G).reshape(T, G)
        tot = np.bincount(flat, weights=self.reward.ravel(), minlength=T * G).reshape(T, G)
        self.ratio = att / self._sizes
        fitness = tot / self._sizes

        prev = self.action
        acted = prev >= 0
        if acted.any():
            ti, gi = np.nonzero(acted)
            ai = prev[ti, gi]
            self.q[ti, gi, ai] += cfg.alpha_g * (fitness[ti, gi] - self.q[ti, gi, ai])

        slot = np.minimum((u[1, :, :G] * self._npeers).astype(np.int64),
                          np.maximum(self._npeers - 1, 0))
        peer = self._peers[np.arange(G)[None, :], slot]
        peer_fit = np.take_along_axis(fitness, peer, axis=1)
        peer_act = np.take_along_axis(prev, peer, axis=1)
        imitate = ((self._npeers > 0) & (peer_act >= 0)
                   & (u[2, :, :G] < fermi_probability(fitness, peer_fit, cfg.beta)))

        explore = u[3, :, :G] < cfg.epsilon_g
        random_action = np.minimum((u[4, :, :G] * K).astype(np.int64), K - 1)
        chosen = np.where(explore, random_action, self._greedy(u[5, :, :G]))
        self.action = np.where(imitate, peer_act, chosen)
        self.fitness = fitness

        target = cfg.action_probability(self.action)[:, self._group]
        self.p = (1.0 - cfg.mu) * self.p + cfg.mu * target

    def _benchmark(self, u: np.ndarray) -> None:
        M = self.M
        other = np.minimum((u[1] * (M - 1)).astype(np.int64), M - 2)
        other += other >= np.arange(M)[None, :]
        r_other = np.take_along_axis(self.reward, other, axis=1)
        copy = u[2] < fermi_probability(self.reward, r_other, self.config.beta)
        self.p = np.where(copy, np.take_along_axis(self.p, other, axis=1), self.p)

    def night(self) -> np.ndarray:
        u = self._draw()
        self.attended = u[0] < self.p
        count = self.attended.sum(axis=1)
        self.reward = bar_reward(count[:, None], self.attended, self.config.threshold)
        if self.partition is None:
            self._benchmark(u)
        else:
            self._governors(u)
        return count

    def run(self, nights: int | None = None) -> BarSeries:
        nights = self.config.horizon if nights is None else nights
        att = np.empty((self.T, nights), dtype=np.int64)
        rew = np.empty((self.T, nights))
        mp = np.empty((self.T, nights))
        for t in range(nights):
            mp[:, t] = self.p.mean(axis=1)
            att[:, t] = self.night()
            rew[:, t] = self.reward.mean(axis=1)
        return BarSeries(att, rew, mp)
