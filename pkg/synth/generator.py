"""Synthetic transaction graphs with a planted future-link signal.

Latent state:

* every node sits in a community and, inside it, a small circle of friends;
* nodes carry a sociability offset and an own credit risk;
* social ties (mostly circle-internal) have a strength ``tau`` in (0, 1).

Observed transfers in ``[t0, t1)`` exist with probability increasing in ``tau``;
their count, regularity and size grow with ``tau`` scaled by the signal
strength ``beta``. A tie transacts again in ``[t1, t2)`` with probability
``sigmoid(sharpness * (tau - 0.5))``, which is exactly the Bayes oracle score.
Pairs that are not social ties never transact in the target window.

All randomness is drawn from Philox streams keyed by ``(seed, stage)``, so the
output depends only on the config.
"""
import hashlib
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd

from config.config import write_key_values
from config.schemas import GenConfig
from graph.store import TemporalGraph, build_graph, write_dataset
from utils.logger import LogContext

logger = logging.getLogger(__name__)

# Philox stream ids, one per generation stage
_STREAM_NODES = 1
_STREAM_TIES = 2
_STREAM_STRENGTH = 3
_STREAM_OBSERVED = 4
_STREAM_FUTURE = 5
_STREAM_PURCHASES = 6
_STREAM_CREDIT = 7
_STREAM_NOISE = 8
_STREAM_DIRECTION = 9

_TIE_KIND_CIRCLE = 0
_TIE_KIND_COMMUNITY = 1
_TIE_KIND_RANDOM = 2

_SOCIABILITY_SD = 0.7
_STRENGTH_LOGIT = 2.0
_STRENGTH_NOISE_SD = 0.5
_RISK_ACTIVITY = 0.3


def _stream(seed: int, stage: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), stage])))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class SyntheticDataset:
    """In-memory generator output.

    Attributes:
        graph: Observed and future transfers plus purchases over ``[t0, t2)``
        ties: ``(k, 2)`` social ties with ``u < v``
        tie_strength: ``tau`` per tie
        oracle: Bayes probability of a transfer in ``[t1, t2)`` per tie
        credit_labels: 0/1 default flag per node
        latent: per-node latent columns (community, circle, sociability, risk)
    """

    graph: TemporalGraph
    ties: np.ndarray
    tie_strength: np.ndarray
    oracle: np.ndarray
    credit_labels: np.ndarray
    latent: Dict[str, np.ndarray]


def _group_members(groups: np.ndarray, group_count: int) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(groups, kind="stable")
    offsets = np.zeros(group_count + 1, dtype=np.int64)
    np.cumsum(np.bincount(groups, minlength=group_count), out=offsets[1:])
    return order, offsets


def _pick_member(
    rng: np.random.Generator, groups: np.ndarray, order: np.ndarray, offsets: np.ndarray
) -> np.ndarray:
    sizes = offsets[groups + 1] - offsets[groups]
    slot = np.floor(rng.random(groups.shape[0]) * sizes).astype(np.int64)
    return order[offsets[groups] + slot]


def _draw_ties(cfg: GenConfig, community: np.ndarray, circle_gid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    rng = _stream(cfg.seed, _STREAM_TIES)
    n = cfg.n
    draws = rng.poisson(cfg.ties_per_node / 2.0, size=n)
    src = np.repeat(np.arange(n, dtype=np.int64), draws)
    u = rng.random(src.shape[0])
    kind = np.where(
        u < cfg.circle_share,
        _TIE_KIND_CIRCLE,
        np.where(u < cfg.circle_share + cfg.community_share, _TIE_KIND_COMMUNITY, _TIE_KIND_RANDOM),
    )
    circle_order, circle_offsets = _group_members(circle_gid, cfg.communities * cfg.circles_per_community)
    comm_order, comm_offsets = _group_members(community, cfg.communities)
    partner = rng.integers(0, n, size=src.shape[0])
    in_circle = kind == _TIE_KIND_CIRCLE
    in_comm = kind == _TIE_KIND_COMMUNITY
    partner[in_circle] = _pick_member(rng, circle_gid[src[in_circle]], circle_order, circle_offsets)
    partner[in_comm] = _pick_member(rng, community[src[in_comm]], comm_order, comm_offsets)

    keep = partner != src
    a = np.minimum(src[keep], partner[keep])
    b = np.maximum(src[keep], partner[keep])
    keys, first = np.unique(a * n + b, return_index=True)
    ties = np.stack([keys // n, keys % n], axis=1)
    return ties, kind[keep][first]


def _regular_times(
    rng: np.random.Generator, counts: np.ndarray, regularity: np.ndarray, lo: int, hi: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Event times per series: on an evenly spaced grid with prob ``regularity``, else uniform."""
    owner = np.repeat(np.arange(counts.shape[0]), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    slot = np.arange(owner.shape[0]) - starts[owner]
    phase = rng.random(counts.shape[0])
    span = hi - lo
    grid = lo + (slot + phase[owner]) / counts[owner] * span
    uniform = lo + rng.random(owner.shape[0]) * span
    on_grid = rng.random(owner.shape[0]) < regularity[owner]
    times = np.where(on_grid, grid, uniform).astype(np.int64)
    return owner, np.clip(times, lo, hi - 1)


def _currency_draw(rng: np.random.Generator, size: int, currencies: int) -> np.ndarray:
    weights = 0.5 ** np.arange(currencies)
    return rng.choice(currencies, size=size, p=weights / weights.sum())


def _amounts(rng: np.random.Generator, log_mean: np.ndarray, log_sd: np.ndarray) -> np.ndarray:
    return np.maximum(1, np.round(np.exp(rng.normal(log_mean, log_sd)))).astype(np.int64)


def generate_dataset(cfg: GenConfig) -> SyntheticDataset:
    """Draw a full synthetic dataset in memory.

    Raises:
        ConfigError: If the config violates its invariants
    """
    cfg.validate()
    n, beta = cfg.n, cfg.signal_strength

    rng = _stream(cfg.seed, _STREAM_NODES)
    community = rng.integers(0, cfg.communities, size=n)
    circle = rng.integers(0, cfg.circles_per_community, size=n)
    circle_gid = community * cfg.circles_per_community + circle
    sociability = rng.normal(0.0, _SOCIABILITY_SD, size=n)
    risk = rng.normal(0.0, 1.0, size=n)

    ties, kind = _draw_ties(cfg, community, circle_gid)
    u, v = ties[:, 0], ties[:, 1]

    rng = _stream(cfg.seed, _STREAM_STRENGTH)
    strong_prob = np.select(
        [kind == _TIE_KIND_CIRCLE, kind == _TIE_KIND_COMMUNITY],
        [cfg.intra_affinity, cfg.intra_affinity / 2.0],
        default=cfg.inter_affinity,
    )
    strong = rng.random(ties.shape[0]) < strong_prob
    logit = (
        np.where(strong, _STRENGTH_LOGIT, -_STRENGTH_LOGIT)
        + sociability[u]
        + sociability[v]
        + rng.normal(0.0, _STRENGTH_NOISE_SD, size=ties.shape[0])
    )
    tau = _sigmoid(logit)
    oracle = _sigmoid(cfg.future_sharpness * (tau - 0.5))

    # observation window: tie visibility, count, regularity and size all track tau
    rng = _stream(cfg.seed, _STREAM_OBSERVED)
    observed = rng.random(ties.shape[0]) < cfg.observe_base + cfg.observe_slope * tau
    obs_idx = np.flatnonzero(observed)
    obs_tau = tau[obs_idx]
    counts = 1 + rng.poisson(cfg.transfer_rate * np.exp(beta * (obs_tau - 0.5)))
    regularity = 1.0 - np.exp(-beta * obs_tau)
    owner, obs_time = _regular_times(rng, counts, regularity, cfg.t0, cfg.t1)
    obs_tie = obs_idx[owner]
    obs_amount = _amounts(
        rng, cfg.amount_log_mean + 0.5 * beta * (tau[obs_tie] - 0.5), np.full(owner.shape[0], cfg.amount_log_sd)
    )
    obs_currency = _currency_draw(rng, owner.shape[0], cfg.currencies)

    # one-off transfers between unrelated clients; they never recur
    rng = _stream(cfg.seed, _STREAM_NOISE)
    noise_count = rng.poisson(cfg.noise_ties_per_node * n)
    noise_a = rng.integers(0, n, size=noise_count)
    noise_b = rng.integers(0, n, size=noise_count)
    noise_keep = noise_a != noise_b
    noise_a, noise_b = noise_a[noise_keep], noise_b[noise_keep]
    noise_time = rng.integers(cfg.t0, cfg.t1, size=noise_a.shape[0])
    noise_amount = _amounts(rng, np.full(noise_a.shape[0], cfg.amount_log_mean), cfg.amount_log_sd)
    noise_currency = _currency_draw(rng, noise_a.shape[0], cfg.currencies)

    rng = _stream(cfg.seed, _STREAM_FUTURE)
    future = rng.random(ties.shape[0]) < oracle
    fut_idx = np.flatnonzero(future)
    fut_counts = 1 + rng.poisson(1.0, size=fut_idx.shape[0])
    fut_owner = np.repeat(np.arange(fut_idx.shape[0]), fut_counts)
    fut_time = rng.integers(cfg.t1, cfg.t2, size=fut_owner.shape[0])
    fut_tie = fut_idx[fut_owner]
    fut_amount = _amounts(
        rng, cfg.amount_log_mean + 0.5 * beta * (tau[fut_tie] - 0.5), np.full(fut_owner.shape[0], cfg.amount_log_sd)
    )
    fut_currency = _currency_draw(rng, fut_owner.shape[0], cfg.currencies)

    tie_events = np.concatenate([obs_tie, fut_tie])
    flip_rng = _stream(cfg.seed, _STREAM_DIRECTION)
    flip = flip_rng.random(tie_events.shape[0]) < 0.5
    src = np.concatenate([np.where(flip, v[tie_events], u[tie_events]), noise_a])
    dst = np.concatenate([np.where(flip, u[tie_events], v[tie_events]), noise_b])

    # purchases: riskier clients buy less often with more erratic amounts
    rng = _stream(cfg.seed, _STREAM_PURCHASES)
    horizon_scale = (cfg.t2 - cfg.t0) / (cfg.t1 - cfg.t0)
    activity = np.exp(rng.normal(0.0, 0.5, size=n) - _RISK_ACTIVITY * risk)
    purchase_counts = rng.poisson(cfg.purchase_rate * horizon_scale * activity)
    buyer = np.repeat(np.arange(n, dtype=np.int64), purchase_counts)
    purchase_time = rng.integers(cfg.t0, cfg.t2, size=buyer.shape[0])
    purchase_amount = _amounts(
        rng,
        cfg.amount_log_mean - 1.0 - 0.2 * risk[buyer],
        cfg.amount_log_sd * np.exp(_RISK_ACTIVITY * risk[buyer]),
    )
    purchase_currency = _currency_draw(rng, buyer.shape[0], cfg.currencies)

    # credit defaults: own risk plus tau-weighted risk of social partners
    rng = _stream(cfg.seed, _STREAM_CREDIT)
    weight_sum = np.bincount(u, weights=tau, minlength=n) + np.bincount(v, weights=tau, minlength=n)
    weighted_risk = np.bincount(u, weights=tau * risk[v], minlength=n) + np.bincount(
        v, weights=tau * risk[u], minlength=n
    )
    neighbour_risk = np.divide(weighted_risk, weight_sum, out=np.zeros(n), where=weight_sum > 0)
    base = np.log(cfg.default_rate / (1.0 - cfg.default_rate)) if 0 < cfg.default_rate < 1 else 0.0
    default_prob = _sigmoid(base + risk + cfg.contagion * neighbour_risk)
    if cfg.default_rate in (0.0, 1.0):
        default_prob = np.full(n, cfg.default_rate)
    credit = (rng.random(n) < default_prob).astype(np.int64)

    graph = build_graph(
        n,
        cfg.currencies,
        (cfg.t0, cfg.t2 - 1),
        node_ids=buyer,
        node_time=purchase_time,
        node_amount=purchase_amount,
        node_currency=purchase_currency,
        src=src,
        dst=dst,
        time=np.concatenate([obs_time, fut_time, noise_time]),
        amount=np.concatenate([obs_amount, fut_amount, noise_amount]),
        currency=np.concatenate([obs_currency, fut_currency, noise_currency]),
    )
    logger.info(
        f"Generated {graph!r}: {ties.shape[0]} social ties, {int(observed.sum())} observed, "
        f"{int(future.sum())} recur in target window"
    )
    return SyntheticDataset(
        graph=graph,
        ties=ties,
        tie_strength=tau,
        oracle=oracle,
        credit_labels=credit,
        latent={"community": community, "circle": circle, "sociability": sociability, "risk": risk},
    )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def generate(cfg: GenConfig, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Generate a dataset and write every artifact under ``out_dir``.

    Files: ``nodes.csv``, ``transfers.csv``, ``header.txt``, ``oracle.csv``
    (``u,v,bayes_prob``, one row per social tie; absent pairs have probability 0),
    ``credit_labels.csv``, ``latent.csv`` (diagnostics only) and ``manifest.txt``.

    Returns:
        Mapping of artifact name to path
    """
    out_dir = Path(out_dir)
    with LogContext(stage="generate", seed=cfg.seed):
        dataset = generate_dataset(cfg)
        nodes_path, transfers_path, header_path = write_dataset(dataset.graph, out_dir)

        oracle_path = out_dir / "oracle.csv"
        pd.DataFrame({"u": dataset.ties[:, 0], "v": dataset.ties[:, 1], "bayes_prob": dataset.oracle}).to_csv(
            oracle_path, index=False, float_format="%.17g", lineterminator="\n"
        )
        labels_path = out_dir / "credit_labels.csv"
        pd.DataFrame({"node_id": np.arange(cfg.n), "label": dataset.credit_labels}).to_csv(
            labels_path, index=False, lineterminator="\n"
        )
        latent_path = out_dir / "latent.csv"
        pd.DataFrame({"node_id": np.arange(cfg.n), **dataset.latent}).to_csv(
            latent_path, index=False, float_format="%.17g", lineterminator="\n"
        )

        paths = {
            "nodes": nodes_path,
            "transfers": transfers_path,
            "header": header_path,
            "oracle": oracle_path,
            "credit_labels": labels_path,
            "latent": latent_path,
        }
        manifest = {f"gen.{key}": value for key, value in asdict(cfg).items()}
        manifest.update({f"sha256.{name}": _sha256(path) for name, path in paths.items()})
        manifest_path = out_dir / "manifest.txt"
        write_key_values(manifest_path, manifest)
        paths["manifest"] = manifest_path
        logger.info(f"Wrote synthetic dataset to {out_dir}")
    return paths


def read_oracle(path: Union[str, Path]) -> Dict[Tuple[int, int], float]:
    """Load ``oracle.csv`` keyed by the unordered pair ``(min, max)``."""
    frame = pd.read_csv(path)
    a = np.minimum(frame["u"].to_numpy(), frame["v"].to_numpy())
    b = np.maximum(frame["u"].to_numpy(), frame["v"].to_numpy())
    return {(int(x), int(y)): float(p) for x, y, p in zip(a, b, frame["bayes_prob"].to_numpy())}


def read_credit_labels(path: Union[str, Path], node_count: int) -> np.ndarray:
    """Load ``credit_labels.csv``; unlabelled nodes get -1."""
    frame = pd.read_csv(path)
    labels = np.full(node_count, -1, dtype=np.int64)
    labels[frame["node_id"].to_numpy()] = frame["label"].to_numpy()
    return labels
