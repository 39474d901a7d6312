"""The original stochastic system at finite population size.

Users are exchangeable, so the controlled Markov chain collapses to the
vector of per-class counts (n1, n2, n3, n4). The only useful transmissions
come from class 4 (packet waiting, good channel): zero-gain classes can
never clear the SINR threshold and empty queues gain nothing from service,
while any power level other than the exact-threshold one is either wasted
or insufficient under the 0/1 rate. The action is therefore the number k
of class-4 users driven to meet the threshold exactly, at the symmetric
power that makes each of their SINRs equal to it.

Provides exact machinery (relative value iteration for the optimal
average cost, stationary-distribution policy evaluation) and a seeded
slot-by-slot Monte Carlo simulator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import Infeasible, MultichainDetected, NoConvergence
from .kernel import IID, MARKOV, build_tables
from .model import ModelParams, require_good_bad, validate_params


class AggregateSpace:
    """All count vectors of a fixed population over the four classes."""

    def __init__(self, n_users: int, params: ModelParams):
        require_good_bad(params)
        self.n_users = n_users
        states = []
        for n1 in range(n_users + 1):
            for n2 in range(n_users - n1 + 1):
                for n3 in range(n_users - n1 - n2 + 1):
                    states.append((n1, n2, n3, n_users - n1 - n2 - n3))
        self.states = np.array(states, dtype=np.int64)
        self._index = {tuple(s): i for i, s in enumerate(states)}

    def __len__(self):
        return len(self.states)

    def index_of(self, counts) -> int:
        return self._index[tuple(int(c) for c in counts)]


def enumerate_states(n_users: int, params: ModelParams):
    """Lexicographic list of all aggregate states (compositions of n_users)."""
    return [tuple(s) for s in AggregateSpace(n_users, params).states]


def transmit_power(k: int, n_users: int, params: ModelParams) -> float:
    """Symmetric power putting k simultaneous class-4 transmitters exactly
    at the SINR threshold.

    Raises Infeasible when no such power exists or it exceeds the cap,
    which excludes action k from the decision problem.
    """
    if k == 0:
        return 0.0
    load = params.theta * (k - 1) / n_users
    if load >= 1.0:
        raise Infeasible(f"{k} simultaneous transmitters saturate the channel", k=k)
    p = params.theta * params.n0 / (1.0 - load)
    if p > params.p_max:
        raise Infeasible(f"power {p:.6g} for k={k} exceeds cap {params.p_max}", k=k)
    return p


def stage_cost(counts, k: int, n_users: int, params: ModelParams) -> float:
    """Per-slot cost charged on the pre-transition state: power plus holding."""
    return k * transmit_power(k, n_users, params) + params.lam * (
        int(counts[1]) + int(counts[3])
    )


def _multinomial_dists(rows, n_max: int):
    """Count-vector distributions of n iid draws from each distinct row.

    Returns {row_key: [dist_0, ..., dist_n_max]} where dist_n maps a
    4-tuple of destination counts to its probability.
    """
    out = {}
    for key, row in rows.items():
        dists = [{(0, 0, 0, 0): 1.0}]
        for _ in range(n_max):
            nxt = {}
            for counts, prob in dists[-1].items():
                for dest in range(4):
                    if row[dest] == 0.0:
                        continue
                    bumped = list(counts)
                    bumped[dest] += 1
                    bumped = tuple(bumped)
                    nxt[bumped] = nxt.get(bumped, 0.0) + prob * row[dest]
            dists.append(nxt)
        out[key] = dists
    return out


def _convolve(a, b):
    if len(a) == 1 and next(iter(a.keys())) == (0, 0, 0, 0):
        return dict(b)
    out = {}
    for ca, pa in a.items():
        for cb, pb in b.items():
            key = (ca[0] + cb[0], ca[1] + cb[1], ca[2] + cb[2], ca[3] + cb[3])
            out[key] = out.get(key, 0.0) + pa * pb
    return out


class _TransitionBuilder:
    """Shared per-group multinomial tables for one parameter set."""

    def __init__(self, params: ModelParams, n_users: int, channel_model: str = IID):
        tables = build_tables(params, channel_model)
        # groups: class 1..3 always fail; class 4 splits into k successes
        # and n4 - k failures
        self.group_rows = [tables.gamma0[i] for i in range(4)] + [tables.gamma1[3]]
        rows = {}
        for row in self.group_rows:
            rows.setdefault(row.tobytes(), row)
        self._dists = _multinomial_dists(rows, n_users)

    def distribution(self, counts, k: int):
        """Joint destination-count distribution for state ``counts``, action k."""
        group_sizes = [int(counts[0]), int(counts[1]), int(counts[2]),
                       int(counts[3]) - k, k]
        dist = {(0, 0, 0, 0): 1.0}
        for row, size in zip(self.group_rows, group_sizes):
            if size == 0:
                continue
            dist = _convolve(dist, self._dists[row.tobytes()][size])
        return dist


def transition_distribution(counts, k: int, params: ModelParams, n_users=None):
    """Sparse next-state distribution of the aggregate chain.

    k class-4 users transit with guaranteed success, everyone else without;
    the per-group multinomials over destination classes are convolved.
    """
    counts = tuple(int(c) for c in counts)
    if n_users is None:
        n_users = sum(counts)
    if not 0 <= k <= counts[3]:
        raise Infeasible(f"k={k} exceeds class-4 occupancy {counts[3]}", k=k)
    transmit_power(k, n_users, params)  # raises when k is excluded
    return _TransitionBuilder(params, n_users).distribution(counts, k)


@dataclass
class VIResult:
    """Output of average-cost relative value iteration."""

    g: float
    h: np.ndarray
    policy: np.ndarray
    iterations: int
    span_residual: float

    def to_json(self, path=None) -> str:
        payload = {
            "g": self.g,
            "iterations": self.iterations,
            "span_residual": self.span_residual,
            "policy": self.policy.tolist(),
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


class _AggregateMdp:
    """Flattened transition/cost arrays of the aggregated decision problem."""

    def __init__(self, params: ModelParams, n_users: int):
        validate_params(params)
        space = AggregateSpace(n_users, params)
        builder = _TransitionBuilder(params, n_users)
        n_states = len(space)

        pair_state, pair_action, pair_cost = [], [], []
        idx_chunks, prob_chunks = [], []
        state_offsets = [0]
        for si in range(n_states):
            counts = space.states[si]
            for k in range(int(counts[3]) + 1):
                try:
                    cost = stage_cost(counts, k, n_users, params)
                except Infeasible:
                    continue
                dist = builder.distribution(counts, k)
                idx = np.fromiter(
                    (space.index_of(c) for c in dist), dtype=np.int64, count=len(dist)
                )
                prob = np.fromiter(dist.values(), dtype=float, count=len(dist))
                pair_state.append(si)
                pair_action.append(k)
                pair_cost.append(cost)
                idx_chunks.append(idx)
                prob_chunks.append(prob)
            state_offsets.append(len(pair_state))

        self.space = space
        self.n_states = n_states
        self.pair_state = np.array(pair_state)
        self.pair_action = np.array(pair_action)
        self.pair_cost = np.array(pair_cost)
        self.pair_sizes = np.array([len(c) for c in idx_chunks])
        self.idx_flat = np.concatenate(idx_chunks)
        self.prob_flat = np.concatenate(prob_chunks)
        self.seg_starts = np.concatenate([[0], np.cumsum(self.pair_sizes)[:-1]])
        self.state_offsets = np.array(state_offsets)

    def q_values(self, h):
        """Expected cost-to-go of every (state, action) pair at value h."""
        vals = self.prob_flat * h[self.idx_flat]
        return self.pair_cost + np.add.reduceat(vals, self.seg_starts)

    def greedy(self, h):
        """Per-state minimal q-value and the smallest minimizing action."""
        q = self.q_values(h)
        best = np.minimum.reduceat(q, self.state_offsets[:-1])
        policy = np.empty(self.n_states, dtype=np.int64)
        for si in range(self.n_states):
            lo, hi = self.state_offsets[si], self.state_offsets[si + 1]
            block = q[lo:hi]
            policy[si] = self.pair_action[lo + int(np.argmax(block <= best[si] + 1e-12))]
        return best, policy


def relative_value_iteration(
    params: ModelParams, n_users: int, tol: float = 1e-9, max_iter: int = 10**6
) -> VIResult:
    """Optimal average cost of the aggregated problem by relative VI.

    Span-seminorm stopping: iterate the Bellman update, stop once
    span(Th - h) < tol, report g as the midpoint of the span bounds and
    the greedy policy at the final values.
    """
    mdp = _AggregateMdp(params, n_users)
    h = np.zeros(mdp.n_states)
    for it in range(1, max_iter + 1):
        q = mdp.q_values(h)
        th = np.minimum.reduceat(q, mdp.state_offsets[:-1])
        delta = th - h
        span = float(delta.max() - delta.min())
        if span < tol:
            g = 0.5 * float(delta.max() + delta.min())
            h = th - th[0]
            _, policy = mdp.greedy(h)
            return VIResult(
                g=g, h=h, policy=policy, iterations=it, span_residual=span
            )
        h = th - th[0]
    raise NoConvergence(
        f"span {span:.3e} above tolerance {tol} after {max_iter} iterations",
        span=span,
        iterations=max_iter,
    )


def _policy_matrix_and_cost(policy_fn, params, n_users, channel_model=IID):
    mdp_space = AggregateSpace(n_users, params)
    builder = _TransitionBuilder(params, n_users, channel_model)
    n = len(mdp_space)
    rows, cols, probs = [], [], []
    costs = np.empty(n)
    for si in range(n):
        counts = mdp_space.states[si]
        k = int(policy_fn(counts))
        costs[si] = stage_cost(counts, k, n_users, params)
        for dest, prob in builder.distribution(counts, k).items():
            rows.append(si)
            cols.append(mdp_space.index_of(dest))
            probs.append(prob)
    mat = csr_matrix((probs, (rows, cols)), shape=(n, n))
    return mat, costs


def evaluate_policy_exact(
    policy_fn,
    params: ModelParams,
    n_users: int,
    tol: float = 1e-12,
    channel_model: str = IID,
) -> float:
    """Exact long-run average cost of a stationary policy.

    Builds the induced chain, verifies it has a single recurrent class,
    and averages the stage cost under the stationary distribution obtained
    by power iteration. Memoryless channels always yield a single
    recurrent class; the check guards degenerate Markov channel laws.
    """
    mat, costs = _policy_matrix_and_cost(policy_fn, params, n_users, channel_model)
    n = mat.shape[0]
    n_comp, labels = connected_components(mat, directed=True, connection="strong")
    # a recurrent class is a strongly connected component with no exit edge
    closed = set(range(n_comp))
    coo = mat.tocoo()
    for i, j_, v in zip(coo.row, coo.col, coo.data):
        if v > 0.0 and labels[i] != labels[j_]:
            closed.discard(labels[i])
    if len(closed) != 1:
        raise MultichainDetected(
            f"policy induces {len(closed)} recurrent classes; expected 1"
        )
    mu = np.full(n, 1.0 / n)
    mat_t = mat.T.tocsr()
    for _ in range(10**6):
        nxt = mat_t @ mu
        nxt /= nxt.sum()
        if np.abs(nxt - mu).sum() < tol:
            mu = nxt
            break
        mu = nxt
    else:
        raise NoConvergence("stationary distribution power iteration stalled")
    return float(mu @ costs)


@dataclass
class SimResult:
    """Seeded slot simulation output."""

    mean_cost: float
    ci95: float
    measures: np.ndarray
    actions: np.ndarray
    costs: np.ndarray

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,n1,n2,n3,n4,action,cost\n")
            n = self.measures.shape[0]
            for t in range(n):
                row = [t, *self.measures[t], self.actions[t], self.costs[t]]
                fh.write(",".join(f"{x:.12g}" if isinstance(x, float) else str(int(x))
                                  for x in row) + "\n")


def simulate(
    policy_fn,
    params: ModelParams,
    n_users: int,
    horizon: int,
    seed: int,
    burn_in: float = 0.1,
    channel_model: str = IID,
    initial_counts=None,
) -> SimResult:
    """Slot-by-slot simulation of the finite stochastic system.

    Per slot: the policy picks k from the class counts, the k transmitters
    are driven to the exact SINR threshold (their packets depart), queues
    then absorb Bernoulli arrivals with overflow drop, and channels redraw.
    Deterministic given the seed. Cost is charged on the pre-transition
    state; the mean is taken after the burn-in fraction.
    """
    require_good_bad(params)
    rng = np.random.default_rng(seed)
    beta = np.asarray(params.beta, dtype=float)
    if initial_counts is not None:
        counts = [int(c) for c in initial_counts]
        if sum(counts) != n_users:
            raise ValueError(f"initial counts {counts} must sum to {n_users}")
        lvl = np.repeat([0, 0, 1, 1], counts).astype(np.int8)
        q = np.repeat([0, 1, 0, 1], counts).astype(np.int8)
    else:
        lvl = (rng.random(n_users) < beta[1]).astype(np.int8)
        q = np.zeros(n_users, dtype=np.int8)
    if channel_model == MARKOV:
        chan = np.asarray(params.channel_matrix, dtype=float)
    measures = np.empty((horizon, 4), dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    costs = np.empty(horizon)
    for t in range(horizon):
        cls = 2 * lvl + q
        counts_now = np.bincount(cls, minlength=4)
        k = int(policy_fn(counts_now))
        measures[t] = counts_now
        actions[t] = k
        costs[t] = stage_cost(counts_now, k, n_users, params)
        served = np.zeros(n_users, dtype=bool)
        if k > 0:
            # exact-threshold power: the k scheduled users all succeed
            served[np.flatnonzero(cls == 3)[:k]] = True
        arrivals = rng.random(n_users) < params.rho
        q = np.minimum(q - (served & (q > 0)) + arrivals, params.q_max).astype(np.int8)
        if channel_model == IID:
            lvl = (rng.random(n_users) < beta[1]).astype(np.int8)
        else:
            stay_good = rng.random(n_users) < chan[lvl, 1]
            lvl = stay_good.astype(np.int8)
    start = int(burn_in * horizon)
    tail = costs[start:]
    n_batches = min(20, max(1, len(tail) // 50))
    batches = np.array_split(tail, n_batches)
    batch_means = np.array([b.mean() for b in batches])
    ci95 = (
        1.96 * batch_means.std(ddof=1) / np.sqrt(n_batches) if n_batches > 1 else 0.0
    )
    return SimResult(
        mean_cost=float(tail.mean()),
        ci95=float(ci95),
        measures=measures,
        actions=actions,
        costs=costs,
    )

