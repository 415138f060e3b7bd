"""Coordinates, great-circle distance, k-d tree region discretization, metrics.

Training coordinates are discretized by recursive median splits into at most
``bucket_size`` points per leaf; each leaf is a class whose representative
point (the componentwise median of its members) stands in for the region when
scoring predictions. Errors are great-circle distances on a 6371.0 km sphere
and are summarized as Acc@161 (fraction within 161 km), mean, and median.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ShapeError

EARTH_RADIUS_KM = 6371.0
ACC_THRESHOLD_KM = 161.0


@dataclass(frozen=True)
class GeoPoint:
    """Latitude/longitude pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ArgumentError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ArgumentError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ArgumentError(f"longitude {self.lon} outside [-180, 180]")


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in kilometres."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km_arrays(
    lat1: np.ndarray, lon1: np.ndarray, lat2: np.ndarray, lon2: np.ndarray
) -> np.ndarray:
    """Vectorized haversine over aligned coordinate arrays (degrees in, km out)."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=np.float64)) for x in (lat1, lon1, lat2, lon2))
    h = (
        np.sin((lat2 - lat1) / 2.0) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


class _Node:
    __slots__ = ("axis", "split", "left", "right", "class_id")

    def __init__(self, axis=None, split=None, left=None, right=None, class_id=None):
        self.axis = axis
        self.split = split
        self.left = left
        self.right = right
        self.class_id = class_id

    @property
    def is_leaf(self) -> bool:
        return self.class_id is not None


class RegionTree:
    """k-d tree over training coordinates; leaves are the target classes.

    Split rules: the axis with the larger raw-degree spread is cut at the
    lower median of that coordinate, with ties (values equal to the split)
    descending to the left branch. Recursion stops once a node holds at most
    ``bucket_size`` points. When the lower median equals the axis maximum the
    split moves down to the largest strictly smaller value so both branches
    stay nonempty; a node whose points are all identical becomes a leaf
    regardless of size.
    """

    def __init__(self, root: _Node, leaves: list[list[GeoPoint]], bucket_size: int):
        self._root = root
        self._members = leaves
        self.bucket_size = bucket_size
        self._representatives = [
            GeoPoint(
                float(np.median([p.lat for p in pts])),
                float(np.median([p.lon for p in pts])),
            )
            for pts in leaves
        ]

    @classmethod
    def build(cls, train_points: list[GeoPoint], bucket_size: int) -> "RegionTree":
        if bucket_size < 1:
            raise ArgumentError(f"bucket_size must be >= 1, got {bucket_size}")
        if not train_points:
            raise ArgumentError("cannot build a region tree from zero points")
        coords = np.array([[p.lat, p.lon] for p in train_points], dtype=np.float64)
        leaves: list[list[GeoPoint]] = []

        def split(indices: np.ndarray) -> _Node:
            pts = coords[indices]
            spread = pts.max(axis=0) - pts.min(axis=0)
            if indices.size <= bucket_size or spread.max() == 0.0:
                node = _Node(class_id=len(leaves))
                leaves.append([train_points[i] for i in indices])
                return node
            axis = 0 if spread[0] >= spread[1] else 1
            values = np.sort(pts[:, axis])
            cut = values[(indices.size - 1) // 2]
            if cut == values[-1]:
                cut = values[values < values[-1]][-1]
            mask = pts[:, axis] <= cut
            return _Node(
                axis=axis,
                split=float(cut),
                left=split(indices[mask]),
                right=split(indices[~mask]),
            )

        root = split(np.arange(len(train_points)))
        return cls(root, leaves, bucket_size)

    @property
    def num_classes(self) -> int:
        return len(self._members)

    @property
    def representatives(self) -> list[GeoPoint]:
        return list(self._representatives)

    def members(self, class_id: int) -> list[GeoPoint]:
        return list(self._members[class_id])

    def leaf_counts(self) -> list[int]:
        return [len(m) for m in self._members]

    def assign(self, p: GeoPoint) -> int:
        node = self._root
        while not node.is_leaf:
            coord = p.lat if node.axis == 0 else p.lon
            node = node.left if coord <= node.split else node.right
        return node.class_id

    def assign_many(self, points: list[GeoPoint]) -> np.ndarray:
        return np.array([self.assign(p) for p in points], dtype=np.intp)

    # --- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        def encode(node: _Node) -> dict:
            if node.is_leaf:
                return {"class_id": node.class_id}
            return {
                "axis": node.axis,
                "split": node.split,
                "left": encode(node.left),
                "right": encode(node.right),
            }

        return {
            "bucket_size": self.bucket_size,
            "root": encode(self._root),
            "leaves": [
                {"count": len(m), "rep": [r.lat, r.lon]}
                for m, r in zip(self._members, self._representatives)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionTree":
        def decode(spec: dict) -> _Node:
            if "class_id" in spec:
                return _Node(class_id=spec["class_id"])
            return _Node(
                axis=spec["axis"],
                split=spec["split"],
                left=decode(spec["left"]),
                right=decode(spec["right"]),
            )

        tree = cls.__new__(cls)
        tree._root = decode(d["root"])
        tree.bucket_size = d["bucket_size"]
        # Serialized trees keep only the representative point per leaf; the
        # member count is replicated so leaf_counts stays meaningful.
        tree._members = [
            [GeoPoint(leaf["rep"][0], leaf["rep"][1])] * leaf["count"] for leaf in d["leaves"]
        ]
        tree._representatives = [GeoPoint(leaf["rep"][0], leaf["rep"][1]) for leaf in d["leaves"]]
        return tree


@dataclass
class PerClassRow:
    class_id: int
    count: int
    median_km: float | None


@dataclass
class EvalReport:
    """Acc@161, mean and median error in km, and a per-predicted-class breakdown."""

    acc161: float
    mean_km: float
    median_km: float
    per_class: list[PerClassRow] = field(default_factory=list)


def evaluate(
    predicted_classes: np.ndarray, true_points: list[GeoPoint], tree: RegionTree
) -> EvalReport:
    """Score predictions: error is the distance from the predicted leaf's
    representative to the user's true point."""
    predicted_classes = np.asarray(predicted_classes, dtype=np.intp)
    if predicted_classes.shape[0] != len(true_points):
        raise ShapeError(
            f"{predicted_classes.shape[0]} predictions vs {len(true_points)} points"
        )
    if predicted_classes.size == 0:
        raise ArgumentError("evaluate needs at least one prediction")
    if predicted_classes.min() < 0 or predicted_classes.max() >= tree.num_classes:
        raise ArgumentError("predicted class id outside [0, num_classes)")

    reps = tree.representatives
    rep_lat = np.array([reps[c].lat for c in predicted_classes])
    rep_lon = np.array([reps[c].lon for c in predicted_classes])
    true_lat = np.array([p.lat for p in true_points])
    true_lon = np.array([p.lon for p in true_points])
    errors = haversine_km_arrays(rep_lat, rep_lon, true_lat, true_lon)

    per_class = []
    for cid in range(tree.num_classes):
        errs = errors[predicted_classes == cid]
        per_class.append(
            PerClassRow(
                class_id=cid,
                count=int(errs.size),
                median_km=float(np.median(errs)) if errs.size else None,
            )
        )
    return EvalReport(
        acc161=float(np.mean(errors <= ACC_THRESHOLD_KM)),
        mean_km=float(np.mean(errors)),
        median_km=float(np.median(errors)),
        per_class=per_class,
    )


def export_per_class_csv(report: EvalReport, tree: RegionTree, path) -> None:
    """One row per class: id, predicted count, representative point, median error."""
    reps = tree.representatives
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "count", "rep_lat", "rep_lon", "median_km"])
        for row in report.per_class:
            rep = reps[row.class_id]
            writer.writerow(
                [
                    row.class_id,
                    row.count,
                    repr(rep.lat),
                    repr(rep.lon),
                    "" if row.median_km is None else repr(row.median_km),
                ]
            )
