"""Round-synchronous decentralized training with quantized differential gossip.

Each round every node runs ``tau`` local SGD steps, then broadcasts two
quantized differentials to its neighbors: the fresh local displacement
and the displacement its previous mixing step produced. Receivers fold
both into a running estimate of each peer's parameters, so only
differences ever cross the wire; the weighted average is then taken over
estimates plus the fresh displacement. With a lossless quantizer the
estimates telescope to the true peer parameters and the scheme reduces to
plain gossip averaging of the locally updated models.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ProtocolError
from .learning import global_loss, minibatch_gradient
from .quantizers import (
    EmpiricalCdf,
    LevelTable,
    QuantizerKind,
    alq_coordinate_step,
    dequantize,
    encoded_bits,
    fit_lloyd_max,
    natural_level_table,
    qsgd_level_table,
    quantize_vector,
)

__all__ = [
    "AdaptiveLevels",
    "RunConfig",
    "NodeState",
    "MetricsLog",
    "node_stream",
    "local_update_phase",
    "communicate_phase",
    "adaptive_level_schedule",
    "run_simulation",
]

# role tags for per-(seed, node, round) random streams
_GRAD, _QUANT, _INIT = 0, 1, 2

LOSSLESS_INDEX_BITS = 32


def node_stream(seed, node, round_index, role):
    """Independent generator derived from (master seed, node, round, role).

    Deriving streams this way makes results independent of any execution
    order across nodes.
    """
    return np.random.default_rng(np.random.SeedSequence((seed, node, round_index, role)))


@dataclass(frozen=True)
class AdaptiveLevels:
    """Settings for the loss-driven level-count schedule."""

    s_initial: int
    s_min: int = 2
    s_max: int = 1024

    def __post_init__(self):
        if not (1 <= self.s_min <= self.s_initial <= self.s_max):
            raise ValueError("need 1 <= s_min <= s_initial <= s_max")


def adaptive_level_schedule(f_initial, f_current, s_initial, s_min, s_max):
    """Level count proportional to the root of the loss decay ratio.

    Returns ``clamp(round(sqrt(f_initial / f_current) * s_initial))``;
    a loss at or below zero means the floor was reached and the finest
    allowed quantization is used.
    """
    if f_initial <= 0:
        raise ValueError("f_initial must be positive")
    if f_current <= 0:
        return s_max
    s = round(np.sqrt(f_initial / f_current) * s_initial)
    return int(min(max(s, s_min), s_max))


@dataclass
class NodeState:
    """Everything one node carries across rounds."""

    node: int
    params: np.ndarray
    prev_round_end: np.ndarray
    shard: object
    neighbor_estimates: dict = field(default_factory=dict)
    self_estimate: np.ndarray | None = None
    pending: dict = field(default_factory=dict)  # sender -> dequantized fresh differential from last round
    alq_table: LevelTable | None = None
    s_current: int = 0
    f_initial: float | None = None


@dataclass(frozen=True)
class RunConfig:
    """Materialized plan for one simulation run."""

    model: object
    shards: list
    mixing: object
    quantizer: QuantizerKind
    rounds: int
    tau: int = 4
    eta: float = 0.001
    eta_schedule: tuple | None = None
    batch_size: int = 32
    seed: int = 0
    adaptive: AdaptiveLevels | None = None
    codebook_sidecar: bool = False
    init: str = "zeros"
    test_set: object = None
    record_estimates: bool = False

    def __post_init__(self):
        if self.rounds < 1 or self.tau < 1:
            raise ValueError("rounds and tau must be >= 1")
        if len(self.shards) != self.mixing.n:
            raise ValueError(f"{len(self.shards)} shards for {self.mixing.n} nodes")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.eta_schedule is not None and len(self.eta_schedule) < self.rounds:
            raise ValueError("eta_schedule must cover every round")
        if self.adaptive is not None and self.quantizer.name == "alq":
            raise ValueError("the level-count schedule does not apply to the stateful alq ladder")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError("init must be 'zeros' or 'gaussian'")

    def eta_at(self, round_index):
        if self.eta_schedule is not None:
            return float(self.eta_schedule[round_index - 1])
        return self.eta


class MetricsLog:
    """Per-round records plus end-of-run summary values."""

    def __init__(self):
        self.records = []
        self.final = {}

    def append(self, **record):
        self.records.append(record)

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")
            if self.final:
                fh.write(json.dumps({"final": self.final}) + "\n")

    @classmethod
    def from_jsonl(cls, path):
        log = cls()
        with open(path) as fh:
            for line in fh:
                obj = json.loads(line)
                if "final" in obj:
                    log.final = obj["final"]
                else:
                    log.records.append(obj)
        return log

    def series(self, key):
        return [record[key] for record in self.records]


def local_update_phase(params, model, shard, tau, eta, batch_size, rng, round_index=0, node=None):
    """Run ``tau`` SGD steps; returns the new parameters and the gradient sum.

    The accumulated displacement is exactly ``-eta`` times the returned
    gradient sum, which receivers exploit by transmitting differentials.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    x = params.copy()
    grad_sum = np.zeros_like(x)
    for _ in range(tau):
        g = minibatch_gradient(model, x, shard, batch_size, rng)
        x -= eta * g
        grad_sum += g
        if not np.all(np.isfinite(x)):
            raise DivergenceError(round_index, node)
    return x, grad_sum


def _active_levels(config, state, round_index):
    if config.adaptive is None:
        return config.quantizer.s
    adaptive = config.adaptive
    if round_index == 1 or state.f_initial is None:
        return adaptive.s_initial
    f_now = config.model.loss(state.params, state.shard)
    return adaptive_level_schedule(state.f_initial, f_now, adaptive.s_initial, adaptive.s_min, adaptive.s_max)


def _sent_bits(d, kind, s_active):
    if kind.name == "lossless":
        return d * LOSSLESS_INDEX_BITS + d + 32
    return encoded_bits(d, s_active)


def _prepare_payloads(config, state, x_after, round_index):
    """Fit this node's codebook and quantize its two outgoing differentials."""
    kind = config.quantizer
    fresh = x_after - state.params
    mixing_diff = state.params - state.prev_round_end
    s_active = _active_levels(config, state, round_index)
    state.s_current = s_active

    samples = []
    for v in (fresh, mixing_diff):
        norm = np.linalg.norm(v)
        if norm > 0:
            samples.append(np.abs(v) / norm)
    samples = np.concatenate(samples) if samples else np.array([])

    table = None
    if kind.name == "lloyd_max":
        if samples.size:
            table = fit_lloyd_max(samples, s_active, tol=kind.fit_tol, max_iter=kind.fit_max_iter)
        else:
            table = LevelTable.uniform(s_active)
    elif kind.name == "alq":
        if state.alq_table is None:
            state.alq_table = LevelTable.from_levels(np.linspace(0.0, 1.0, kind.s + 2))
        if samples.size:
            state.alq_table = alq_coordinate_step(state.alq_table, EmpiricalCdf(samples))
        table = state.alq_table
    elif kind.name == "qsgd":
        table = qsgd_level_table(s_active)
    elif kind.name == "natural":
        table = natural_level_table(s_active)

    use_kind = kind if config.adaptive is None else QuantizerKind(kind.name, s_active, kind.fit_tol, kind.fit_max_iter)
    rng = node_stream(config.seed, state.node, round_index, _QUANT)
    payloads, distortions = [], []
    for v in (fresh, mixing_diff):
        q = quantize_vector(v, use_kind, table=table, rng=rng)
        decoded = dequantize(q, table) if use_kind.name != "lossless" else dequantize(q)
        payloads.append(decoded)
        norm_sq = float(v @ v)
        if norm_sq > 0:
            err = decoded - v
            distortions.append(float(err @ err) / norm_sq)
        else:
            distortions.append(0.0)
    return payloads, distortions, s_active, table


def deliver(state, sender, fresh_decoded, mixing_decoded):
    """Fold one neighbor's two payloads into the tracked estimate."""
    if sender != state.node and sender not in state.neighbor_estimates:
        raise ProtocolError(f"node {state.node} received a payload from unknown neighbor {sender}")
    est = state.self_estimate if sender == state.node else state.neighbor_estimates[sender]
    est += state.pending.get(sender, 0.0) + mixing_decoded
    state.pending[sender] = fresh_decoded


def communicate_phase(states, updated_params, config, round_index):
    """Quantize, exchange, update estimates, and mix; returns accounting.

    Estimate update per sender: the estimate absorbs last round's fresh
    differential (buffered on the receiver) plus this round's mixing
    differential. The new parameters are the mixing-weighted sum of
    estimate plus fresh differential over the in-neighborhood.
    """
    C = config.mixing.entries
    n = len(states)
    payloads, per_node_distortion, bits_sent, codebook_bits = {}, [], {}, {}
    for state in states:
        decoded_pair, distortions, s_active, table = _prepare_payloads(
            config, state, updated_params[state.node], round_index
        )
        payloads[state.node] = decoded_pair
        per_node_distortion.extend(distortions)
        d = state.params.size
        bits_sent[state.node] = 2 * _sent_bits(d, config.quantizer, s_active)
        codebook_bits[state.node] = 2 * 32 * table.s if (
            config.codebook_sidecar and config.quantizer.name in ("lloyd_max", "alq")
        ) else 0

    for state in states:
        senders = [state.node] + config.mixing.neighbors(state.node)
        for sender in senders:
            fresh, mixing_diff = payloads[sender]
            deliver(state, sender, fresh, mixing_diff)

    new_params = []
    for state in states:
        i = state.node
        acc = np.zeros_like(state.params)
        for j in range(n):
            if C[j, i] == 0.0:
                continue
            est = state.self_estimate if j == i else state.neighbor_estimates[j]
            acc += C[j, i] * (est + payloads[j][0])
        new_params.append(acc)

    for state, x_after in zip(states, updated_params):
        state.prev_round_end = x_after
    for state, x_next in zip(states, new_params):
        state.params = x_next
    mean_distortion = float(np.mean(per_node_distortion)) if per_node_distortion else 0.0
    return bits_sent, codebook_bits, mean_distortion


def _init_states(config):
    model = config.model
    init_rng = node_stream(config.seed, 0, 0, _INIT)
    if config.init == "gaussian":
        x0 = model.init_params(init_rng)
    else:
        x0 = np.zeros(model.d)
    states = []
    for node in range(config.mixing.n):
        zeros = np.zeros(model.d)
        state = NodeState(
            node=node,
            params=x0.copy(),
            prev_round_end=zeros.copy(),
            shard=config.shards[node],
            self_estimate=zeros.copy(),
        )
        for j in config.mixing.neighbors(node):
            state.neighbor_estimates[j] = zeros.copy()
        states.append(state)
    return states


def run_simulation(config):
    """Execute the full protocol for ``config.rounds`` rounds.

    Fully deterministic for a fixed config and seed. The log records, per
    round: the loss of the node-average model at round start, per-node
    local losses, the active level counts, the learning rate, the mean
    normalized quantization distortion, and cumulative bits per directed
    edge.
    """
    states = _init_states(config)
    model = config.model
    log = MetricsLog()
    edges = [
        (i, j)
        for i in range(config.mixing.n)
        for j in config.mixing.neighbors(i)
    ]
    cum_bits = {f"{i}->{j}": 0 for i, j in edges}
    cum_codebook = {f"{i}->{j}": 0 for i, j in edges}

    for k in range(1, config.rounds + 1):
        u_k = np.mean([state.params for state in states], axis=0)
        node_losses = [model.loss(state.params, state.shard) for state in states]
        if k == 1:
            for state, f in zip(states, node_losses):
                state.f_initial = f
        eta_k = config.eta_at(k)

        updated = [None] * len(states)
        for state in states:
            rng = node_stream(config.seed, state.node, k, _GRAD)
            updated[state.node], _ = local_update_phase(
                state.params, model, state.shard, config.tau, eta_k,
                min(config.batch_size, state.shard.n), rng, round_index=k, node=state.node,
            )

        bits_sent, codebook_sent, mean_distortion = communicate_phase(states, updated, config, k)
        for i, j in edges:
            cum_bits[f"{i}->{j}"] += bits_sent[i]
            cum_codebook[f"{i}->{j}"] += codebook_sent[i]

        record = {
            "round": k,
            "eta": eta_k,
            "global_loss": global_loss(model, u_k, config.shards),
            "node_losses": node_losses,
            "s": [state.s_current for state in states],
            "mean_distortion": mean_distortion,
            "bits_per_edge": dict(cum_bits),
            "bits_total": int(sum(cum_bits.values())),
        }
        if config.codebook_sidecar:
            record["codebook_bits_total"] = int(sum(cum_codebook.values()))
        if config.record_estimates:
            record["u"] = u_k.tolist()
            record["u_hat"] = np.mean([state.self_estimate for state in states], axis=0).tolist()
        log.append(**record)

    u_final = np.mean([state.params for state in states], axis=0)
    log.final["global_loss"] = global_loss(model, u_final, config.shards)
    if config.test_set is not None:
        log.final["test_accuracy"] = model.accuracy(u_final, config.test_set)
    log.final["bits_per_edge_max"] = max(cum_bits.values()) if cum_bits else 0
    log.final["bits_total"] = int(sum(cum_bits.values()))
    return log
