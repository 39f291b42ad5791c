"""Dataset ingestion and synthetic pair generation.

Feature files are TSV: one row per item, an identifier column followed by a
fixed number of numeric feature fields. Row i of the protein file pairs
with row i of the molecule file. Parsing is strict: every rejected line is
reported as path:line, nothing is silently dropped.

The synthetic generator builds clustered cross-modal pairs: each cluster
has one latent direction, realized in the two feature spaces through fixed
random linear maps, plus isotropic noise. Items in the same cluster are
mutually "active", giving retrieval metrics more than one hit per query.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ParseError, ShapeError


@dataclass
class PairDataset:
    """Aligned protein/molecule feature arrays; row k is the positive pair."""

    protein_features: np.ndarray
    molecule_features: np.ndarray
    protein_ids: list[str] | None = None
    molecule_ids: list[str] | None = None
    clusters: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.protein_features = np.atleast_2d(
            np.asarray(self.protein_features, dtype=np.float64)
        )
        self.molecule_features = np.atleast_2d(
            np.asarray(self.molecule_features, dtype=np.float64)
        )
        n = self.protein_features.shape[0]
        if self.molecule_features.shape[0] != n:
            raise ShapeError(
                f"{n} protein rows vs {self.molecule_features.shape[0]} molecule rows"
            )
        for name, ids in (("protein", self.protein_ids), ("molecule", self.molecule_ids)):
            if ids is not None and len(ids) != n:
                raise ShapeError(f"{len(ids)} {name} ids for {n} rows")
        if self.clusters is not None:
            self.clusters = np.asarray(self.clusters)
            if self.clusters.shape[0] != n:
                raise ShapeError(f"{self.clusters.shape[0]} cluster labels for {n} rows")

    def __len__(self) -> int:
        return self.protein_features.shape[0]

    def subset(self, indices) -> "PairDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return PairDataset(
            self.protein_features[indices],
            self.molecule_features[indices],
            [self.protein_ids[i] for i in indices] if self.protein_ids else None,
            [self.molecule_ids[i] for i in indices] if self.molecule_ids else None,
            self.clusters[indices] if self.clusters is not None else None,
        )


def read_features(path: str) -> tuple[list[str], np.ndarray]:
    """Parse one TSV feature file into (ids, (n, F) float64 matrix)."""
    ids: list[str] = []
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise ParseError(
                    f"{path}:{lineno}: expected an id and at least one feature, "
                    f"got {len(fields)} field(s)"
                )
            if width is None:
                width = len(fields) - 1
            elif len(fields) - 1 != width:
                raise ParseError(
                    f"{path}:{lineno}: {len(fields) - 1} features, "
                    f"previous rows have {width}"
                )
            try:
                values = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric feature field ({exc})") from exc
            if not all(np.isfinite(values)):
                raise ParseError(f"{path}:{lineno}: non-finite feature value")
            ids.append(fields[0])
            rows.append(values)
    matrix = (
        np.array(rows, dtype=np.float64) if rows else np.empty((0, 0), dtype=np.float64)
    )
    return ids, matrix


def write_features(path: str, ids, matrix) -> None:
    """Inverse of read_features; floats use shortest round-trip formatting."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    ids = list(ids)
    if len(ids) != matrix.shape[0]:
        raise ShapeError(f"{len(ids)} ids for {matrix.shape[0]} rows")
    with open(path, "w", encoding="utf-8") as fh:
        for item_id, row in zip(ids, matrix):
            fh.write("\t".join([str(item_id)] + [repr(float(v)) for v in row]) + "\n")


def load_pairs(protein_path: str, molecule_path: str) -> PairDataset:
    """Load two aligned feature files as a paired dataset."""
    p_ids, p_mat = read_features(protein_path)
    m_ids, m_mat = read_features(molecule_path)
    if p_mat.shape[0] != m_mat.shape[0]:
        raise InvalidInputError(
            f"row counts differ: {protein_path} has {p_mat.shape[0]}, "
            f"{molecule_path} has {m_mat.shape[0]}"
        )
    return PairDataset(p_mat, m_mat, p_ids, m_ids)


@dataclass(frozen=True)
class SynthSpec:
    num_clusters: int = 8
    pairs_per_cluster: int = 32
    protein_dim: int = 32
    molecule_dim: int = 24
    center_scale: float = 4.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("num_clusters", "pairs_per_cluster", "protein_dim", "molecule_dim"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.center_scale <= 0:
            raise InvalidInputError(f"center_scale must be > 0, got {self.center_scale}")
        if self.noise_sigma < 0:
            raise InvalidInputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def generate_synthetic(spec: SynthSpec) -> PairDataset:
    """Clustered cross-modal pairs; a pure function of the spec.

    Cluster c's latent direction is center_scale * e_c; fixed random maps
    A_p and A_m carry it into the two feature spaces, then N(0, sigma^2)
    noise is added per item. The returned dataset carries cluster labels.
    """
    rng = np.random.default_rng(spec.seed)
    latent_dim = spec.num_clusters
    map_p = rng.normal(0.0, 1.0 / np.sqrt(latent_dim), (spec.protein_dim, latent_dim))
    map_m = rng.normal(0.0, 1.0 / np.sqrt(latent_dim), (spec.molecule_dim, latent_dim))
    n = spec.num_clusters * spec.pairs_per_cluster
    clusters = np.repeat(np.arange(spec.num_clusters), spec.pairs_per_cluster)
    centers_p = (map_p * spec.center_scale).T  # row c = A_p @ (scale * e_c)
    centers_m = (map_m * spec.center_scale).T
    proteins = centers_p[clusters] + spec.noise_sigma * rng.standard_normal(
        (n, spec.protein_dim)
    )
    molecules = centers_m[clusters] + spec.noise_sigma * rng.standard_normal(
        (n, spec.molecule_dim)
    )
    digits = max(4, len(str(n - 1)))
    return PairDataset(
        proteins,
        molecules,
        [f"p{i:0{digits}d}" for i in range(n)],
        [f"m{i:0{digits}d}" for i in range(n)],
        clusters,
    )


def split(
    dataset: PairDataset, fractions: tuple[float, float, float], seed: int
) -> tuple[PairDataset, PairDataset, PairDataset]:
    """Disjoint (train, validation, test) partition, stratified by cluster.

    Fractions must sum to 1. Zero fractions give empty splits; a positive
    fraction that still comes out empty is rejected. Per-cluster proportions
    hold to within one item (largest-remainder allocation).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise InvalidInputError(f"need three fractions >= 0, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions must sum to 1, got sum {sum(fractions)}")
    n = len(dataset)
    if n == 0:
        raise InvalidInputError("cannot split an empty dataset")
    labels = (
        dataset.clusters if dataset.clusters is not None else np.zeros(n, dtype=np.int64)
    )
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[], [], []]
    for value in np.unique(labels):
        members = np.flatnonzero(labels == value)
        members = members[rng.permutation(members.shape[0])]
        c = members.shape[0]
        base = [int(np.floor(f * c)) for f in fractions]
        remainder = [f * c - b for f, b in zip(fractions, base)]
        for _ in range(c - sum(base)):  # largest remainder takes the leftover
            j = int(np.argmax(remainder))
            base[j] += 1
            remainder[j] = -1.0
        cursor = 0
        for j in range(3):
            buckets[j].extend(int(i) for i in members[cursor : cursor + base[j]])
            cursor += base[j]
    names = ("train", "validation", "test")
    for j in range(3):
        if fractions[j] > 0 and not buckets[j]:
            raise InvalidInputError(
                f"{names[j]} fraction {fractions[j]} produced an empty split "
                f"on {n} items"
            )
    return tuple(dataset.subset(sorted(b)) for b in buckets)  # type: ignore[return-value]
