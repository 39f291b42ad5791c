"""Contrastive hashing objective and the alternating training loop.

The total loss on a batch of n paired embeddings (Y^p, Y^m, each n x d) is

    L = L_c + lambda * L_hash

where L_c is a bidirectional InfoNCE over the n x n cosine-similarity
matrix scaled by 1/tau (rows: each protein against all molecules; columns:
each molecule against all proteins; only the diagonal pairs are positive)

    L_c = 1/2 * (L^p + L^m),   L^p = -(1/n) sum_k log softmax_row(S/tau)_kk

and L_hash pulls embeddings toward their own sign codes

    L_hash = (1/(n d)) * sum_k (|y_k^p - b_k^p|^2 + |y_k^m - b_k^m|^2).

Optimization alternates: codes are set to sign(embeddings) in closed form
(no gradient flows through sign), then one Adam step updates the encoder
parameters with the codes held constant.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .codes import NORM_EPS
from .encoder import EncoderConfig, Model, backward, encode_batch, init_model
from .errors import (
    DegenerateInputError,
    InvalidInputError,
    ShapeError,
    TrainingDivergedError,
)
from .metrics import DEFAULT_ALPHA, bedroc, make_ranking


@dataclass(frozen=True)
class TrainingConfig:
    lambda_: float = 0.2
    tau: float = 0.07
    batch_size: int = 48
    code_length: int = 128
    epochs: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    grad_accumulation: int = 1
    hidden_dim: int = 64
    bedroc_alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.lambda_ < 0:
            raise InvalidInputError(f"lambda must be >= 0, got {self.lambda_}")
        if self.tau <= 0:
            raise InvalidInputError(f"tau must be > 0, got {self.tau}")
        for name in ("batch_size", "code_length", "epochs", "grad_accumulation", "hidden_dim"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class LossReport:
    contrastive: float
    hash: float
    total: float
    protein_side: float
    molecule_side: float


def _check_embedding_pair(protein_emb, molecule_emb):
    p = np.atleast_2d(np.asarray(protein_emb, dtype=np.float64))
    m = np.atleast_2d(np.asarray(molecule_emb, dtype=np.float64))
    if p.shape != m.shape:
        raise ShapeError(f"embedding shapes differ: {p.shape} vs {m.shape}")
    return p, m


def _unit_rows(rows: np.ndarray, side: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(rows, axis=1)
    bad = np.flatnonzero(norms < NORM_EPS)
    if bad.size:
        raise DegenerateInputError(f"near-zero-norm {side} embedding at row {int(bad[0])}")
    return rows / norms[:, None], norms


def _logsumexp(z: np.ndarray, axis: int) -> np.ndarray:
    top = z.max(axis=axis, keepdims=True)
    return np.squeeze(top, axis) + np.log(np.exp(z - top).sum(axis=axis))


def contrastive_loss(protein_emb, molecule_emb, tau: float) -> tuple[float, float, float]:
    """Bidirectional InfoNCE over cosine similarities.

    Returns (L_c, protein side L^p, molecule side L^m).
    """
    if tau <= 0:
        raise InvalidInputError(f"tau must be > 0, got {tau}")
    p, m = _check_embedding_pair(protein_emb, molecule_emb)
    p_hat, _ = _unit_rows(p, "protein")
    m_hat, _ = _unit_rows(m, "molecule")
    z = (p_hat @ m_hat.T) / tau
    diag = np.diagonal(z)
    loss_p = float(np.mean(_logsumexp(z, axis=1) - diag))
    loss_m = float(np.mean(_logsumexp(z, axis=0) - diag))
    return 0.5 * (loss_p + loss_m), loss_p, loss_m


def _check_codes(emb: np.ndarray, codes, side: str) -> np.ndarray:
    b = np.asarray(codes, dtype=np.float64)
    if b.shape != emb.shape:
        raise ShapeError(f"{side} codes shaped {b.shape} for embeddings {emb.shape}")
    if not np.all(np.abs(b) == 1.0):
        raise InvalidInputError(f"{side} codes must be +1/-1 valued")
    return b


def hash_loss(protein_emb, molecule_emb, protein_codes, molecule_codes) -> float:
    """Mean squared gap between embeddings and their binary codes."""
    p, m = _check_embedding_pair(protein_emb, molecule_emb)
    bp = _check_codes(p, protein_codes, "protein")
    bm = _check_codes(m, molecule_codes, "molecule")
    n, d = p.shape
    return float((np.sum((p - bp) ** 2) + np.sum((m - bm) ** 2)) / (n * d))


def update_codes(protein_emb, molecule_emb) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form code update: elementwise sign, zeros mapping to -1."""
    p, m = _check_embedding_pair(protein_emb, molecule_emb)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(m))):
        raise InvalidInputError("embeddings contain non-finite entries")
    return (
        np.where(p > 0, 1.0, -1.0),
        np.where(m > 0, 1.0, -1.0),
    )


def total_loss(protein_emb, molecule_emb, protein_codes, molecule_codes,
               config: TrainingConfig) -> LossReport:
    lc, lp, lm = contrastive_loss(protein_emb, molecule_emb, config.tau)
    lh = hash_loss(protein_emb, molecule_emb, protein_codes, molecule_codes)
    return LossReport(
        contrastive=lc,
        hash=lh,
        total=lc + config.lambda_ * lh,
        protein_side=lp,
        molecule_side=lm,
    )


def loss_gradients(protein_emb, molecule_emb, protein_codes, molecule_codes,
                   config: TrainingConfig):
    """Total loss plus its exact gradient w.r.t. both embedding matrices.

    Codes are treated as constants. Returns (LossReport, dP, dM).
    """
    p, m = _check_embedding_pair(protein_emb, molecule_emb)
    bp = _check_codes(p, protein_codes, "protein")
    bm = _check_codes(m, molecule_codes, "molecule")
    n, d = p.shape
    tau = config.tau
    p_hat, p_norm = _unit_rows(p, "protein")
    m_hat, m_norm = _unit_rows(m, "molecule")
    s = p_hat @ m_hat.T
    z = s / tau
    diag = np.diagonal(z)
    loss_p = float(np.mean(_logsumexp(z, axis=1) - diag))
    loss_m = float(np.mean(_logsumexp(z, axis=0) - diag))
    lc = 0.5 * (loss_p + loss_m)
    lh = float((np.sum((p - bp) ** 2) + np.sum((m - bm) ** 2)) / (n * d))
    report = LossReport(
        contrastive=lc,
        hash=lh,
        total=lc + config.lambda_ * lh,
        protein_side=loss_p,
        molecule_side=loss_m,
    )

    # dL_c/dZ: rows contribute softmax over molecules, columns over proteins,
    # the diagonal positives subtract; everything averaged over the batch
    row_soft = np.exp(z - z.max(axis=1, keepdims=True))
    row_soft /= row_soft.sum(axis=1, keepdims=True)
    col_soft = np.exp(z - z.max(axis=0, keepdims=True))
    col_soft /= col_soft.sum(axis=0, keepdims=True)
    g = (row_soft + col_soft) / (2.0 * n)
    np.fill_diagonal(g, np.diagonal(g) - 1.0 / n)
    g /= tau  # now dL_c/dS

    # cosine backward: dS_ij/dp_i = (m_hat_j - S_ij p_hat_i) / |p_i|
    row_weight = np.sum(g * s, axis=1)
    dp = (g @ m_hat - row_weight[:, None] * p_hat) / p_norm[:, None]
    col_weight = np.sum(g * s, axis=0)
    dm = (g.T @ p_hat - col_weight[:, None] * m_hat) / m_norm[:, None]

    if config.lambda_ != 0.0:
        scale = 2.0 * config.lambda_ / (n * d)
        dp = dp + scale * (p - bp)
        dm = dm + scale * (m - bm)
    return report, dp, dm


class Adam:
    """Standard Adam with bias correction; state mirrors the model layout."""

    def __init__(self, model: Model, config: TrainingConfig):
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.adam_eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in _tensors(model)]
        self.v = [np.zeros_like(a) for a in _tensors(model)]

    def step(self, model: Model, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for array, grad, m, v in zip(_tensors(model), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            array -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _tensors(model: Model) -> list[np.ndarray]:
    out = []
    for side in (model.protein, model.molecule):
        for weight, bias in side:
            out.append(weight)
            out.append(bias)
    return out


def _grad_tensors(model: Model, proteins, molecules, dp, dm) -> list[np.ndarray]:
    """Backpropagate embedding gradients into flat parameter-gradient list."""
    halves = []
    for params, xs, upstream in (
        (model.protein, proteins, dp),
        (model.molecule, molecules, dm),
    ):
        acc = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        for k in range(xs.shape[0]):
            layer_grads, _ = backward(params, xs[k], upstream[k])
            for (gw, gb), (aw, ab) in zip(layer_grads, acc):
                aw += gw
                ab += gb
        halves.append(acc)
    flat = []
    for acc in halves:
        for gw, gb in acc:
            flat.append(gw)
            flat.append(gb)
    return flat


def _batch_gradients(model: Model, proteins, molecules, config: TrainingConfig):
    """One alternation on one batch: encode, set codes, differentiate."""
    yp = encode_batch(model.protein, proteins)
    ym = encode_batch(model.molecule, molecules)
    if not (np.all(np.isfinite(yp)) and np.all(np.isfinite(ym))):
        raise TrainingDivergedError(
            "encoder produced non-finite embeddings; parameters have blown up"
        )
    bp, bm = update_codes(yp, ym)
    report, dp, dm = loss_gradients(yp, ym, bp, bm, config)
    if not np.isfinite(report.total):
        raise TrainingDivergedError(
            f"non-finite loss: contrastive={report.contrastive}, "
            f"hash={report.hash}, total={report.total}"
        )
    return report, _grad_tensors(model, proteins, molecules, dp, dm)


def train_step(model: Model, proteins, molecules, config: TrainingConfig,
               optimizer: Adam | None = None) -> tuple[Model, LossReport]:
    """One full alternation plus one optimizer step, mutating the model.

    Pass a persistent optimizer to keep Adam moments across steps; a fresh
    one is used otherwise.
    """
    proteins = np.atleast_2d(np.asarray(proteins, dtype=np.float64))
    molecules = np.atleast_2d(np.asarray(molecules, dtype=np.float64))
    if proteins.shape[0] != molecules.shape[0]:
        raise ShapeError(
            f"{proteins.shape[0]} proteins vs {molecules.shape[0]} molecules in batch"
        )
    if optimizer is None:
        optimizer = Adam(model, config)
    report, grads = _batch_gradients(model, proteins, molecules, config)
    optimizer.step(model, grads)
    return model, report


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    contrastive: float
    hash: float
    total: float
    val_loss: float | None = None
    val_bedroc: float | None = None


@dataclass
class TrainResult:
    model: Model
    curve: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0


def hashed_retrieval_bedroc(protein_emb, molecule_emb, clusters=None,
                            alpha: float = DEFAULT_ALPHA) -> float:
    """Mean BEDROC over protein queries ranking molecules by code agreement.

    Embeddings are sign-quantized; molecules rank by the integer dot of the
    sign vectors, which orders exactly like Hamming distance. A query's
    actives are the molecules sharing its cluster label, or just its own
    partner when no labels are given.
    """
    p, m = _check_embedding_pair(protein_emb, molecule_emb)
    sp = np.where(p > 0, 1.0, -1.0)
    sm = np.where(m > 0, 1.0, -1.0)
    scores = sp @ sm.T
    n = p.shape[0]
    if clusters is None:
        labels = np.eye(n, dtype=bool)
    else:
        clusters = np.asarray(clusters)
        labels = clusters[None, :] == clusters[:, None]
    values = []
    for k in range(n):
        active = labels[k]
        if 0 < int(active.sum()) < n:
            values.append(bedroc(make_ranking(scores[k], active), alpha))
    if not values:
        raise InvalidInputError(
            "validation BEDROC undefined: every query has all or no actives"
        )
    return float(np.mean(values))


def _epoch_batches(rng: np.random.Generator, count: int, batch_size: int):
    """Shuffled without-replacement batches; a trailing partial is dropped."""
    perm = rng.permutation(count)
    for start in range(0, count - batch_size + 1, batch_size):
        yield perm[start : start + batch_size]


def train(dataset, config: TrainingConfig, validation=None) -> TrainResult:
    """Full training loop; a pure function of (dataset, config, seed).

    ``dataset`` and ``validation`` expose ``protein_features`` (n, F_p),
    ``molecule_features`` (n, F_m), and optionally ``clusters``. Parameters
    come from the epoch with the best validation BEDROC (earliest on ties);
    without a validation set the final epoch wins.
    """
    xp = np.asarray(dataset.protein_features, dtype=np.float64)
    xm = np.asarray(dataset.molecule_features, dtype=np.float64)
    if xp.shape[0] != xm.shape[0]:
        raise ShapeError(f"{xp.shape[0]} proteins vs {xm.shape[0]} molecules")
    if xp.shape[0] < config.batch_size:
        raise InvalidInputError(
            f"dataset has {xp.shape[0]} pairs, batch_size is {config.batch_size}"
        )
    model = init_model(
        EncoderConfig(xp.shape[1], config.hidden_dim, config.code_length),
        EncoderConfig(xm.shape[1], config.hidden_dim, config.code_length),
        config.seed,
    )
    optimizer = Adam(model, config)
    rng = np.random.default_rng(config.seed)
    val = None
    if validation is not None:
        val = (
            np.asarray(validation.protein_features, dtype=np.float64),
            np.asarray(validation.molecule_features, dtype=np.float64),
            getattr(validation, "clusters", None),
        )

    result = TrainResult(model=model)
    best_bedroc = -np.inf
    pending: list[list[np.ndarray]] = []
    for epoch in range(1, config.epochs + 1):
        epoch_reports = []
        for batch in _epoch_batches(rng, xp.shape[0], config.batch_size):
            report, grads = _batch_gradients(model, xp[batch], xm[batch], config)
            epoch_reports.append(report)
            pending.append(grads)
            if len(pending) == config.grad_accumulation:
                summed = [np.sum(group, axis=0) for group in zip(*pending)]
                optimizer.step(model, summed)
                pending.clear()
        if pending:  # leftover sub-batches at epoch end still make a step
            summed = [np.sum(group, axis=0) for group in zip(*pending)]
            optimizer.step(model, summed)
            pending.clear()

        stats = EpochStats(
            epoch=epoch,
            contrastive=float(np.mean([r.contrastive for r in epoch_reports])),
            hash=float(np.mean([r.hash for r in epoch_reports])),
            total=float(np.mean([r.total for r in epoch_reports])),
        )
        if val is not None:
            vp = encode_batch(model.protein, val[0])
            vm = encode_batch(model.molecule, val[1])
            vbp, vbm = update_codes(vp, vm)
            val_report = total_loss(vp, vm, vbp, vbm, config)
            val_bed = hashed_retrieval_bedroc(vp, vm, val[2], config.bedroc_alpha)
            if not np.isfinite(val_report.total):
                raise TrainingDivergedError(
                    f"non-finite validation loss at epoch {epoch}"
                )
            stats = replace(stats, val_loss=val_report.total, val_bedroc=val_bed)
            if val_bed > best_bedroc:
                best_bedroc = val_bed
                result.best_epoch = epoch
                result.model = copy.deepcopy(model)
        result.curve.append(stats)
    if val is None:
        result.best_epoch = config.epochs
        result.model = model
    return result


CURVE_COLUMNS = ["epoch", "contrastive", "hash", "total", "val_bedroc", "val_loss"]


def write_curve_csv(path: str, curve: list[EpochStats]) -> None:
    """Per-epoch training log, one row per epoch."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for s in curve:
            writer.writerow(
                [
                    s.epoch,
                    repr(s.contrastive),
                    repr(s.hash),
                    repr(s.total),
                    "" if s.val_bedroc is None else repr(s.val_bedroc),
                    "" if s.val_loss is None else repr(s.val_loss),
                ]
            )
