"""Full-softmax cross-entropy training with reciprocal queries.

Every train triple (h, r, t) contributes two queries per batch: predict t
among all entities for (h, r, ?) and predict h for (t, r~, ?) where r~ is
the reciprocal relation row. Each query's cross-entropy is weighted by the
frequency weight of its target entity,

    w(e) = w0 * count(e) / max_count + (1 - w0),

and each query adds lambda times the regularization penalty of its own
(source, relation, target) parameters. The batch objective is the mean
over the 2 * batch_size queries.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import TripleStore, entity_frequency
from .model import EmbeddingTable, block_rotate, block_rotate_t, init_embeddings
from .regularization import RegConfig, penalty_terms_batch

logger = logging.getLogger(__name__)

OPTIMIZERS = ("Adagrad", "SGD")
ADAGRAD_EPS = 1e-10


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or non-finite parameters."""


@dataclass
class TrainConfig:
    n: int
    epochs: int
    lr: float = 0.1
    batch_size: int = 100
    w0: float = 0.0
    reg: RegConfig = field(default_factory=RegConfig)
    seed: int = 0
    optimizer: str = "Adagrad"
    eval_every: int = 0
    init_scale: float = 1e-3

    def __post_init__(self):
        if self.n <= 0 or self.n % 2 != 0:
            raise ValueError(f"n must be positive and even, got {self.n}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.w0 <= 1.0:
            raise ValueError(f"w0 must lie in [0, 1], got {self.w0}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0 (0 disables validation)")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


@dataclass
class OptimizerState:
    """Adagrad accumulators (elementwise squared-gradient sums) or nothing for SGD."""

    acc_entities: np.ndarray | None = None
    acc_rel_c: np.ndarray | None = None
    acc_rel_tau: np.ndarray | None = None
    eps: float = ADAGRAD_EPS

    @classmethod
    def for_table(cls, table: EmbeddingTable, optimizer: str) -> "OptimizerState":
        if optimizer == "SGD":
            return cls()
        return cls(
            np.zeros_like(table.entity_embeddings),
            np.zeros_like(table.rel_c),
            np.zeros_like(table.rel_tau),
        )


@dataclass
class BatchGradients:
    """Dense gradients of the batch objective for every parameter matrix."""

    d_entities: np.ndarray
    d_rel_c: np.ndarray
    d_rel_tau: np.ndarray


def tail_weight(entity_id, counts: np.ndarray, w0: float):
    """Frequency weight w0 * count / max_count + (1 - w0).

    ``counts`` comes from :func:`star_kge.data.entity_frequency` (tail counts
    for tail queries, head counts for head queries). Accepts scalar or array
    entity ids.
    """
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValueError("empty entity counts")
    max_count = counts.max()
    if max_count < 1:
        raise ValueError("entity counts must contain at least one appearance")
    w = w0 * (counts[entity_id] / max_count) + (1.0 - w0)
    if np.isscalar(entity_id) or np.ndim(entity_id) == 0:
        return float(w)
    return w


def _query_arrays(batch: np.ndarray, num_relations: int):
    """Expand triples into the 2m query rows (tail queries then head queries)."""
    h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
    src = np.concatenate([h, t])
    rel = np.concatenate([r, r + num_relations])
    tgt = np.concatenate([t, h])
    return src, rel, tgt


def batch_loss(
    batch: np.ndarray,
    table: EmbeddingTable,
    config: TrainConfig,
    tail_weights: np.ndarray | None = None,
    head_weights: np.ndarray | None = None,
) -> tuple[float, BatchGradients]:
    """Mean weighted cross-entropy plus penalties over one batch of triples.

    ``tail_weights`` / ``head_weights`` are per-entity weight arrays
    (default: uniform 1). Returns the scalar loss and dense gradients of the
    mean objective for every parameter matrix.
    """
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    ents = table.entity_embeddings
    src, rel, tgt = _query_arrays(batch, table.num_relations)
    nq = len(src)

    if tail_weights is None and head_weights is None:
        w = np.ones(nq)
    else:
        tw = np.ones(table.num_entities) if tail_weights is None else tail_weights
        hw = np.ones(table.num_entities) if head_weights is None else head_weights
        m = len(batch)
        w = np.concatenate([tw[tgt[:m]], hw[tgt[m:]]])

    H = ents[src]
    RC = table.rel_c[rel]
    TAU = table.rel_tau[rel]
    T = ents[tgt]

    # the +1 score constant shifts every candidate equally, so the softmax
    # never sees it; buffers are reused in place, the score matrix is large
    Q = block_rotate_t(RC, H) + TAU
    scores = Q @ ents.T
    rows = np.arange(nq)
    tgt_scores = scores[rows, tgt].copy()
    smax = scores.max(axis=1)
    max_abs_score = float(np.abs(smax).max())
    scores -= smax[:, None]
    np.exp(scores, out=scores)
    row_sums = scores.sum(axis=1)
    ce = smax + np.log(row_sums) - tgt_scores

    reg_vals, reg_dH, reg_dT, reg_dRC, reg_dTAU = penalty_terms_batch(H, T, RC, TAU, config.reg)
    lam = config.reg.lam if config.reg.kind != "none" else 0.0
    loss = float((w @ ce + lam * reg_vals.sum()) / nq)
    if not np.isfinite(loss):
        raise DivergenceError(
            f"non-finite batch loss (max |score| = {max_abs_score:.3e}); "
            "lower the learning rate or raise the regularization weight"
        )

    # d loss / d scores: softmax probabilities minus the one-hot target
    dS = scores
    dS /= row_sums[:, None]
    dS[rows, tgt] -= 1.0
    dS *= (w / nq)[:, None]

    d_entities = dS.T @ Q
    V = dS @ ents
    d_src = block_rotate(RC, V)
    s1, s2 = H[:, 0::2], H[:, 1::2]
    v1, v2 = V[:, 0::2], V[:, 1::2]
    d_RC = np.empty_like(RC)
    d_RC[:, 0::2] = s1 * v1 + s2 * v2
    d_RC[:, 1::2] = s2 * v1 - s1 * v2
    d_TAU = V

    scale = lam / nq
    np.add.at(d_entities, src, d_src + scale * reg_dH)
    np.add.at(d_entities, tgt, scale * reg_dT)
    d_rel_c = np.zeros_like(table.rel_c)
    d_rel_tau = np.zeros_like(table.rel_tau)
    np.add.at(d_rel_c, rel, d_RC + scale * reg_dRC)
    np.add.at(d_rel_tau, rel, d_TAU + scale * reg_dTAU)
    return loss, BatchGradients(d_entities, d_rel_c, d_rel_tau)


def adagrad_update(param: np.ndarray, grad: np.ndarray, accumulator: np.ndarray, lr: float):
    """In-place Adagrad step: acc += g^2; param -= lr * g / sqrt(acc + eps)."""
    if param.shape != grad.shape or param.shape != accumulator.shape:
        raise ValueError("param, grad and accumulator shapes must match")
    accumulator += grad * grad
    param -= lr * grad / np.sqrt(accumulator + ADAGRAD_EPS)


def sgd_update(param: np.ndarray, grad: np.ndarray, lr: float):
    param -= lr * grad


def _mask_frozen(grads: BatchGradients, model_kind: str):
    """Zero gradients of parameters the model kind pins (so they stay pinned)."""
    if model_kind in ("ComplEx", "DistMult"):
        grads.d_rel_tau[:] = 0.0
    if model_kind == "DistMult":
        grads.d_rel_c[:, 1::2] = 0.0


def _apply_updates(table, grads, state, config):
    if config.optimizer == "Adagrad":
        adagrad_update(table.entity_embeddings, grads.d_entities, state.acc_entities, config.lr)
        adagrad_update(table.rel_c, grads.d_rel_c, state.acc_rel_c, config.lr)
        adagrad_update(table.rel_tau, grads.d_rel_tau, state.acc_rel_tau, config.lr)
    else:
        sgd_update(table.entity_embeddings, grads.d_entities, config.lr)
        sgd_update(table.rel_c, grads.d_rel_c, config.lr)
        sgd_update(table.rel_tau, grads.d_rel_tau, config.lr)


def train(
    store: TripleStore,
    config: TrainConfig,
    model_kind: str = "STaR",
) -> tuple[EmbeddingTable, list[dict]]:
    """Train a fresh table on the store's train split.

    Shuffles triples each epoch under the config seed, runs filtered
    validation every ``eval_every`` epochs (when a valid split exists) and
    returns the checkpoint with the best validation MRR, or the final table
    when validation never ran. The log holds one record per epoch:
    {epoch, mean_loss, valid_mrr, wall_ms}.
    """
    from .evaluation import evaluate  # local import to avoid a module cycle

    if len(store.train) == 0:
        raise ValueError("train split is empty")
    rng = np.random.default_rng(config.seed)
    table = init_embeddings(
        store.num_entities, store.num_relations, config.n, model_kind, config.init_scale, config.seed
    )
    state = OptimizerState.for_table(table, config.optimizer)

    if config.w0 > 0.0:
        tail_counts, _ = entity_frequency(store, "tail")
        head_counts, _ = entity_frequency(store, "head")
        tail_w = tail_weight(np.arange(store.num_entities), tail_counts, config.w0)
        head_w = tail_weight(np.arange(store.num_entities), head_counts, config.w0)
    else:
        tail_w = head_w = None

    can_validate = config.eval_every > 0 and len(store.valid) > 0
    best_mrr = -np.inf
    best_table = None
    best_epoch = -1
    log: list[dict] = []

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(store.train))
        loss_sum = 0.0
        query_count = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = store.train[idx]
            try:
                loss, grads = batch_loss(batch, table, config, tail_w, head_w)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"epoch {epoch}, batch {start // config.batch_size}: {exc}"
                ) from None
            _mask_frozen(grads, model_kind)
            _apply_updates(table, grads, state, config)
            table.enforce_kind()
            if not np.isfinite(table.entity_embeddings).all():
                raise DivergenceError(
                    f"epoch {epoch}, batch {start // config.batch_size}: "
                    "non-finite entity embeddings after update"
                )
            loss_sum += loss * 2 * len(batch)
            query_count += 2 * len(batch)
        mean_loss = loss_sum / query_count

        valid_mrr = None
        if can_validate and (epoch + 1) % config.eval_every == 0:
            valid_mrr = evaluate("valid", table, store).mrr
            if valid_mrr > best_mrr:
                best_mrr = valid_mrr
                best_table = table.copy()
                best_epoch = epoch
        log.append(
            {
                "epoch": epoch,
                "mean_loss": mean_loss,
                "valid_mrr": valid_mrr,
                "wall_ms": (time.perf_counter() - t0) * 1000.0,
            }
        )

    if best_table is not None:
        logger.info("best validation MRR %.4f at epoch %d", best_mrr, best_epoch)
        return best_table, log
    return table, log
