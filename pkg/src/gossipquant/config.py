"""Strict JSON experiment configs and their materialization into run plans.

Unknown keys fail fast with the offending key named, so typos cannot
silently fall back to defaults. An experiment holds shared dataset,
topology, model, and schedule settings plus one or more arms that vary
the quantizer (and optionally the learning-rate schedule); arms share the
dataset partition and seed so comparisons isolate the quantizer.
"""

import json
import os
from dataclasses import dataclass, field

from .engine import AdaptiveLevels, RunConfig
from .errors import ConfigError
from .learning import Model, gen_synthetic, load_idx, partition_noniid
from .quantizers import QuantizerKind
from .topology import build_mixing, load_edge_list

__all__ = ["ExperimentSpec", "ArmSpec", "parse_config", "materialize"]

OUTPUT_DIR_ENV = "GOSSIPQUANT_OUTPUT_DIR"

_TOP_KEYS = {
    "name", "seed", "output_dir", "nodes", "rounds", "tau", "eta", "eta_decay",
    "batch_size", "init", "dataset", "partition", "topology", "model",
    "quantizer", "arms", "analysis",
}
_DATASET_KEYS = {"kind", "n", "p", "classes", "separation", "test_n", "images", "labels",
                 "test_images", "test_labels"}
_PARTITION_KEYS = {"label_fraction"}
_TOPOLOGY_KEYS = {"kind", "self_weight", "edge_list"}
_MODEL_KEYS = {"kind", "hidden_width"}
_QUANTIZER_KEYS = {"kind", "s", "fit_tol", "fit_max_iter", "adaptive", "codebook_sidecar"}
_ADAPTIVE_KEYS = {"s_initial", "s_min", "s_max"}
_ETA_DECAY_KEYS = {"factor", "every"}
_ARM_KEYS = {"name", "quantizer", "eta", "eta_decay"}
_ANALYSIS_KEYS = {"L", "sigma2", "delta2", "f_gap", "budget_bits", "interval_bits"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}; expected one of {sorted(allowed)}")


def _get(obj, key, kind, where, default=None, required=False):
    if key not in obj:
        if required:
            raise ConfigError(f"{where} is missing required key {key!r}")
        return default
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{where}.{key} must be {kind.__name__}, got {type(value).__name__}")
    return value


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class ArmSpec:
    name: str
    quantizer: QuantizerKind
    adaptive: AdaptiveLevels | None
    codebook_sidecar: bool
    eta: float | None = None
    eta_decay: tuple | None = None


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    seed: int
    output_dir: str
    nodes: int
    rounds: int
    tau: int
    eta: float
    eta_decay: tuple | None
    batch_size: int
    init: str
    dataset: dict
    label_fraction: float
    topology: dict
    model: dict
    arms: list = field(default_factory=list)
    analysis: dict | None = None


def _parse_quantizer(obj, where):
    _check_keys(obj, _QUANTIZER_KEYS, where)
    kind = _get(obj, "kind", str, where, default="lloyd_max")
    if kind not in ("lloyd_max", "qsgd", "natural", "alq", "lossless"):
        raise ConfigError(f"{where}.kind must be one of lloyd_max, qsgd, natural, alq, lossless")
    s = _get(obj, "s", int, where, default=16)
    _require(s >= 1, f"{where}.s must satisfy s >= 1")
    fit_tol = _get(obj, "fit_tol", float, where, default=1e-6)
    _require(fit_tol > 0, f"{where}.fit_tol must be positive")
    fit_max_iter = _get(obj, "fit_max_iter", int, where, default=100)
    _require(fit_max_iter >= 1, f"{where}.fit_max_iter must be >= 1")
    adaptive = None
    if "adaptive" in obj:
        a = obj["adaptive"]
        _check_keys(a, _ADAPTIVE_KEYS, f"{where}.adaptive")
        adaptive = AdaptiveLevels(
            s_initial=_get(a, "s_initial", int, f"{where}.adaptive", required=True),
            s_min=_get(a, "s_min", int, f"{where}.adaptive", default=2),
            s_max=_get(a, "s_max", int, f"{where}.adaptive", default=1024),
        )
    sidecar = _get(obj, "codebook_sidecar", bool, where, default=False)
    return QuantizerKind(kind, s, fit_tol, fit_max_iter), adaptive, sidecar


def _parse_eta_decay(obj, where):
    _check_keys(obj, _ETA_DECAY_KEYS, where)
    factor = _get(obj, "factor", float, where, required=True)
    every = _get(obj, "every", int, where, required=True)
    _require(0 < factor <= 1, f"{where}.factor must lie in (0, 1]")
    _require(every >= 1, f"{where}.every must be >= 1")
    return (factor, every)


def parse_config(path):
    """Load and validate an experiment config; returns the spec with defaults filled."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path} is not valid JSON: {err}") from err
    _check_keys(raw, _TOP_KEYS, "config")

    name = _get(raw, "name", str, "config", default="experiment")
    seed = _get(raw, "seed", int, "config", default=0)
    nodes = _get(raw, "nodes", int, "config", default=10)
    _require(nodes >= 2, "nodes must be >= 2")
    rounds = _get(raw, "rounds", int, "config", default=60)
    _require(rounds >= 1, "rounds must be >= 1")
    tau = _get(raw, "tau", int, "config", default=4)
    _require(tau >= 1, "tau must satisfy tau >= 1")
    batch_size = _get(raw, "batch_size", int, "config", default=32)
    _require(batch_size >= 1, "batch_size must be >= 1")
    init = _get(raw, "init", str, "config", default="zeros")
    _require(init in ("zeros", "gaussian"), "init must be 'zeros' or 'gaussian'")

    dataset = raw.get("dataset", {"kind": "synthetic"})
    _check_keys(dataset, _DATASET_KEYS, "dataset")
    ds_kind = _get(dataset, "kind", str, "dataset", default="synthetic")
    _require(ds_kind in ("synthetic", "idx"), "dataset.kind must be 'synthetic' or 'idx'")
    if ds_kind == "idx":
        _get(dataset, "images", str, "dataset", required=True)
        _get(dataset, "labels", str, "dataset", required=True)

    eta = _get(raw, "eta", float, "config", default=0.002 if ds_kind == "idx" else 0.001)
    _require(eta > 0, "eta must be positive")
    eta_decay = _parse_eta_decay(raw["eta_decay"], "eta_decay") if "eta_decay" in raw else None

    partition = raw.get("partition", {})
    _check_keys(partition, _PARTITION_KEYS, "partition")
    label_fraction = _get(partition, "label_fraction", float, "partition", default=0.5)
    _require(0.0 <= label_fraction <= 1.0, "partition.label_fraction must lie in [0, 1]")

    topology = raw.get("topology", {"kind": "ring"})
    _check_keys(topology, _TOPOLOGY_KEYS, "topology")
    topo_kind = _get(topology, "kind", str, "topology", default="ring")
    _require(topo_kind in ("ring", "complete", "disconnected", "custom"),
             "topology.kind must be one of ring, complete, disconnected, custom")
    if topo_kind == "custom":
        _get(topology, "edge_list", str, "topology", required=True)
    self_weight = _get(topology, "self_weight", float, "topology", default=1.0 / 3.0)
    _require(0.0 < self_weight < 1.0, "topology.self_weight must lie in (0, 1)")

    model = raw.get("model", {"kind": "logistic"})
    _check_keys(model, _MODEL_KEYS, "model")
    model_kind = _get(model, "kind", str, "model", default="logistic")
    _require(model_kind in ("logistic", "mlp"), "model.kind must be 'logistic' or 'mlp'")
    hidden = _get(model, "hidden_width", int, "model", default=16)
    _require(hidden >= 1, "model.hidden_width must be >= 1")

    default_q, default_adaptive, default_sidecar = _parse_quantizer(raw.get("quantizer", {}), "quantizer")

    arms = []
    if "arms" in raw:
        if not isinstance(raw["arms"], list) or not raw["arms"]:
            raise ConfigError("arms must be a nonempty list")
        for i, arm_raw in enumerate(raw["arms"]):
            where = f"arms[{i}]"
            _check_keys(arm_raw, _ARM_KEYS, where)
            arm_name = _get(arm_raw, "name", str, where, default=f"arm{i}")
            if "quantizer" in arm_raw:
                q, adaptive, sidecar = _parse_quantizer(arm_raw["quantizer"], f"{where}.quantizer")
            else:
                q, adaptive, sidecar = default_q, default_adaptive, default_sidecar
            arm_eta = _get(arm_raw, "eta", float, where)
            if arm_eta is not None:
                _require(arm_eta > 0, f"{where}.eta must be positive")
            arm_decay = _parse_eta_decay(arm_raw["eta_decay"], f"{where}.eta_decay") if "eta_decay" in arm_raw else None
            arms.append(ArmSpec(arm_name, q, adaptive, sidecar, arm_eta, arm_decay))
        names = [a.name for a in arms]
        _require(len(set(names)) == len(names), "arm names must be unique")
    else:
        arms.append(ArmSpec("default", default_q, default_adaptive, default_sidecar))

    analysis = None
    if "analysis" in raw:
        _check_keys(raw["analysis"], _ANALYSIS_KEYS, "analysis")
        analysis = {k: float(v) for k, v in raw["analysis"].items()}

    output_dir = os.environ.get(OUTPUT_DIR_ENV) or _get(
        raw, "output_dir", str, "config", default=os.path.join("runs", name)
    )

    return ExperimentSpec(
        name=name, seed=seed, output_dir=output_dir, nodes=nodes, rounds=rounds,
        tau=tau, eta=eta, eta_decay=eta_decay, batch_size=batch_size, init=init,
        dataset=dict(dataset, kind=ds_kind), label_fraction=label_fraction,
        topology=dict(topology, kind=topo_kind, self_weight=self_weight),
        model=dict(model, kind=model_kind, hidden_width=hidden),
        arms=arms, analysis=analysis,
    )


def _build_dataset(spec):
    ds = spec.dataset
    if ds["kind"] == "idx":
        train = load_idx(ds["images"], ds["labels"])
        test = None
        if "test_images" in ds and "test_labels" in ds:
            test = load_idx(ds["test_images"], ds["test_labels"])
        return train, test
    n = ds.get("n", 2000)
    p = ds.get("p", 10)
    classes = ds.get("classes", 4)
    separation = float(ds.get("separation", 3.0))
    test_n = ds.get("test_n", 0)
    train = gen_synthetic(n, p, classes, separation, seed=spec.seed)
    test = gen_synthetic(test_n, p, classes, separation, seed=spec.seed + 10**6) if test_n else None
    return train, test


def _decay_schedule(eta, decay, rounds):
    factor, every = decay
    return tuple(eta * factor ** ((k - 1) // every) for k in range(1, rounds + 1))


def materialize(spec):
    """Build the shared dataset/topology/model and one run plan per arm."""
    train, test = _build_dataset(spec)
    shards = partition_noniid(train, spec.nodes, spec.label_fraction, seed=spec.seed)
    topo = spec.topology
    if topo["kind"] == "custom":
        adjacency = load_edge_list(topo["edge_list"])
        mixing = build_mixing("custom", spec.nodes, adjacency=adjacency)
    elif topo["kind"] == "ring":
        mixing = build_mixing("ring", spec.nodes, self_weight=topo["self_weight"])
    else:
        mixing = build_mixing(topo["kind"], spec.nodes)
    model = Model(spec.model["kind"], train.p, train.num_classes,
                  hidden_width=spec.model["hidden_width"])

    plans = []
    for arm in spec.arms:
        eta = arm.eta if arm.eta is not None else spec.eta
        decay = arm.eta_decay if arm.eta_decay is not None else spec.eta_decay
        schedule = _decay_schedule(eta, decay, spec.rounds) if decay else None
        plans.append((arm.name, RunConfig(
            model=model, shards=shards, mixing=mixing, quantizer=arm.quantizer,
            rounds=spec.rounds, tau=spec.tau, eta=eta, eta_schedule=schedule,
            batch_size=spec.batch_size, seed=spec.seed, adaptive=arm.adaptive,
            codebook_sidecar=arm.codebook_sidecar, init=spec.init, test_set=test,
        )))
    return plans
