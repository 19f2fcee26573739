"""Dataset loading, manifests, standardisation, synthetic blobs.

CSV conventions: one row per sample, numeric feature columns, one label
column (any strings; densified to 0..K-1 in first-appearance order).
A manifest is a small JSON sidecar that pins the expected shape of a
CSV so a benchmark run fails fast on the wrong file.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CsvParseError,
    DegenerateDataError,
    DimensionMismatchError,
    ManifestMismatchError,
)
from .rng import Rng


@dataclass
class Dataset:
    name: str
    features: np.ndarray       # [n, dim] float64
    labels: np.ndarray         # [n] int, dense 0..n_classes-1
    label_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(
            np.asarray(self.features, dtype=np.float64)
        )
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DegenerateDataError(
                f"features must be a non-empty 2-D matrix, got {self.features.shape}"
            )
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionMismatchError(
                f"{self.features.shape[0]} rows but {self.labels.shape} labels"
            )
        if self.labels.min() < 0:
            raise DegenerateDataError("labels must be non-negative")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    # short aliases matching the usual notation
    @property
    def x(self) -> np.ndarray:
        return self.features

    @property
    def y_true(self) -> np.ndarray:
        return self.labels

    @property
    def k(self) -> int:
        return self.n_classes


# expected (rows, features, classes) for the bundled benchmark names
KNOWN_DATASETS: dict[str, tuple[int, int, int]] = {
    "breast_cancer": (569, 30, 2),
    "dermatology": (358, 34, 6),
    "ecoli": (336, 7, 8),
    "malware": (4465, 241, 2),
    "mice_protein": (552, 78, 8),
    "olive": (572, 10, 3),
    "vehicle": (846, 18, 4),
}


@dataclass
class DatasetManifest:
    name: str
    path: str                  # CSV location, relative to the manifest file
    label_column: int | str = -1   # index, or a header name
    expected_n: int | None = None
    expected_dim: int | None = None
    expected_classes: int | None = None
    delimiter: str = ","
    has_header: bool = True


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "name": manifest.name,
        "path": manifest.path,
        "label_column": manifest.label_column,
        "expected_n": manifest.expected_n,
        "expected_dim": manifest.expected_dim,
        "expected_classes": manifest.expected_classes,
        "delimiter": manifest.delimiter,
        "has_header": manifest.has_header,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return DatasetManifest(
            name=doc["name"],
            path=doc["path"],
            label_column=doc.get("label_column", -1),
            expected_n=doc.get("expected_n"),
            expected_dim=doc.get("expected_dim"),
            expected_classes=doc.get("expected_classes"),
            delimiter=doc.get("delimiter", ","),
            has_header=doc.get("has_header", True),
        )
    except KeyError as exc:
        raise ManifestMismatchError(f"manifest {path} missing field {exc}") from exc


def read_labelled_csv(
    path,
    label_column: int | str = -1,
    delimiter: str = ",",
    has_header: bool = True,
    name: str | None = None,
) -> Dataset:
    """Parse a labelled CSV into a Dataset.

    Raises CsvParseError with 1-based ``row``/``column`` positions on
    ragged rows or non-numeric feature cells.  Labels may be arbitrary
    strings; they densify to integers in first-appearance order.  The
    label column is an index (negative counts from the end) or, when
    the file has a header, a column name.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = list(reader)
    line = 0
    header: list[str] | None = None
    if has_header:
        if not rows:
            raise CsvParseError("file is empty", row=1)
        header = rows[0]
        line = 1
        rows = rows[1:]
    rows = [(line + i + 1, r) for i, r in enumerate(rows) if r]
    if not rows:
        raise CsvParseError("no data rows", row=line + 1)

    width = len(rows[0][1])
    if isinstance(label_column, str):
        if header is None:
            raise CsvParseError(
                f"label column {label_column!r} needs a header row", row=1
            )
        stripped = [cell.strip() for cell in header]
        if label_column not in stripped:
            raise CsvParseError(
                f"no header column named {label_column!r}", row=1
            )
        label_idx = stripped.index(label_column)
    else:
        label_idx = label_column if label_column >= 0 else width + label_column
    if not 0 <= label_idx < width:
        raise CsvParseError(
            f"label column {label_column} outside a {width}-column file",
            row=rows[0][0],
        )

    features = np.empty((len(rows), width - 1))
    raw_labels: list[str] = []
    for out_row, (line_no, cells) in enumerate(rows):
        if len(cells) != width:
            raise CsvParseError(
                f"expected {width} columns, found {len(cells)}", row=line_no
            )
        feat_col = 0
        for col, cell in enumerate(cells):
            if col == label_idx:
                raw_labels.append(cell.strip())
                continue
            try:
                features[out_row, feat_col] = float(cell)
            except ValueError:
                raise CsvParseError(
                    f"non-numeric feature value {cell!r}",
                    row=line_no,
                    column=col + 1,
                ) from None
            feat_col += 1

    label_ids: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, raw in enumerate(raw_labels):
        if raw not in label_ids:
            label_ids[raw] = len(label_ids)
        labels[i] = label_ids[raw]
    return Dataset(
        name=name if name is not None else os.path.splitext(os.path.basename(path))[0],
        features=features,
        labels=labels,
        label_names=list(label_ids),
    )


def load_csv(
    manifest: DatasetManifest, base_dir=".", allow_mismatch=False
) -> Dataset:
    """Load the CSV a manifest points at and verify its shape.

    Mismatches raise ManifestMismatchError listing every violated
    expectation unless ``allow_mismatch`` is set (some published copies
    of the bundled datasets differ from the canonical row counts).
    """
    path = manifest.path
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    ds = read_labelled_csv(
        path,
        label_column=manifest.label_column,
        delimiter=manifest.delimiter,
        has_header=manifest.has_header,
        name=manifest.name,
    )
    problems = []
    for label, expected, found in (
        ("rows", manifest.expected_n, ds.n),
        ("features", manifest.expected_dim, ds.dim),
        ("classes", manifest.expected_classes, ds.n_classes),
    ):
        if expected is not None and expected != found:
            problems.append(f"{label}: expected {expected}, found {found}")
    if problems and not allow_mismatch:
        raise ManifestMismatchError(
            f"dataset {manifest.name!r} does not match its manifest "
            f"({'; '.join(problems)})"
        )
    return ds


def write_dataset_csv(dataset: Dataset, path, manifest_path=None) -> None:
    """Write features plus a trailing label column; optionally emit a
    matching manifest next to it."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"feat_{j}" for j in range(dataset.dim)] + ["label"])
        names = dataset.label_names
        for row, label in zip(dataset.features, dataset.labels):
            text = names[label] if label < len(names) else str(int(label))
            writer.writerow([repr(float(v)) for v in row] + [text])
    if manifest_path is not None:
        manifest = DatasetManifest(
            name=dataset.name,
            path=os.path.relpath(path, os.path.dirname(manifest_path) or "."),
            label_column=-1,
            expected_n=dataset.n,
            expected_dim=dataset.dim,
            expected_classes=dataset.n_classes,
        )
        save_manifest(manifest, manifest_path)


# ---------------------------------------------------------------------------
# standardisation
# ---------------------------------------------------------------------------

@dataclass
class Scaler:
    mean: np.ndarray
    scale: np.ndarray               # population std, 1.0 where variance is 0
    zero_variance: np.ndarray       # bool mask of passthrough columns

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.mean.shape[0]:
            raise DimensionMismatchError(
                f"expected [n, {self.mean.shape[0]}] matrix, got {x.shape}"
            )
        return (x - self.mean) / self.scale


def standardize(data):
    """Zero-mean unit-variance columns (population std).

    Accepts a matrix or a Dataset and returns the transformed value of
    the same kind plus the fitted Scaler.  Constant columns pass through
    centred only, flagged on the scaler, so downstream code never
    divides by zero.
    """
    if isinstance(data, Dataset):
        scaled, scaler = standardize(data.features)
        out = Dataset(
            name=data.name,
            features=scaled,
            labels=data.labels,
            label_names=list(data.label_names),
        )
        return out, scaler
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateDataError(
            f"need a 2-D matrix with at least two rows, got {x.shape}"
        )
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    zero = std == 0.0
    scale = np.where(zero, 1.0, std)
    scaler = Scaler(mean=mean, scale=scale, zero_variance=zero)
    return scaler.transform(x), scaler


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def synth_blobs(
    n: int,
    dim: int,
    n_clusters: int,
    separation: float,
    sigma: float = 1.0,
    rng: Rng | None = None,
) -> Dataset:
    """Isotropic Gaussian blobs around well-separated centers.

    Centers are drawn uniformly from a box and re-drawn until every pair
    is at least ``separation`` apart (bounded retries).  Cluster sizes
    are balanced to within one row; rows come out shuffled.
    """
    if n_clusters < 1 or n < n_clusters or dim < 1:
        raise DegenerateDataError(
            f"cannot place {n} rows in {n_clusters} clusters of dim {dim}"
        )
    if separation <= 0 or sigma < 0:
        raise ValueError("separation must be positive and sigma non-negative")
    rng = Rng(0) if rng is None else rng
    half = separation * max(n_clusters, 2)
    centers = np.empty((n_clusters, dim))
    for j in range(n_clusters):
        for attempt in range(1000):
            candidate = rng.spawn("center", j, attempt).uniform(-half, half, dim)
            gaps = np.linalg.norm(centers[:j] - candidate, axis=1)
            if j == 0 or gaps.min() >= separation:
                centers[j] = candidate
                break
        else:
            raise DegenerateDataError(
                f"could not place {n_clusters} centers {separation} apart"
            )
    base, extra = divmod(n, n_clusters)
    sizes = [base + (1 if j < extra else 0) for j in range(n_clusters)]
    features = np.empty((n, dim))
    labels = np.empty(n, dtype=np.int64)
    start = 0
    for j, size in enumerate(sizes):
        noise = rng.spawn("points", j).normal((size, dim))
        features[start : start + size] = centers[j] + sigma * noise
        labels[start : start + size] = j
        start += size
    order = rng.spawn("shuffle").permutation(n)
    return Dataset(
        name="synth",
        features=features[order],
        labels=labels[order],
        label_names=[str(j) for j in range(n_clusters)],
    )
