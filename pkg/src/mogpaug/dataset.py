"""UJIIndoorLoc-format fingerprint CSV ingestion, partitioning and statistics.

RSSI columns are ``WAP001``..``WAPnnn``; the value 100 means the AP was not
detected.  In memory a not-detected entry is NaN and detected entries are
floats holding integral dBm values.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import FilterError, PartitionError, SchemaError, ValidationError

log = logging.getLogger(__name__)

NOT_DETECTED = 100
RSSI_MIN, RSSI_MAX = -104, 0
FILL_DBM = -105.0
FLOOR_HEIGHT_M = 4.0

MANDATORY = ("LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID")
METADATA = ("SPACEID", "RELATIVEPOSITION", "USERID", "PHONEID", "TIMESTAMP")
SYNTHETIC_MARKER = {"SPACEID": "-1", "RELATIVEPOSITION": "-1", "USERID": "-1",
                    "PHONEID": "-1", "TIMESTAMP": "0"}
_WAP_RE = re.compile(r"^WAP\d+$")


@dataclass(frozen=True)
class SchemaOptions:
    clamp_rssi: bool = False
    floor_range: tuple = (0, 4)
    building_range: tuple = (0, 2)
    rssi_pattern: str = r"^WAP\d+$"


@dataclass(frozen=True)
class FingerprintRecord:
    rssi: np.ndarray
    longitude: float
    latitude: float
    floor: int
    building_id: int
    metadata: dict = field(default_factory=dict)
    synthetic: bool = False

    @property
    def detected(self):
        return np.flatnonzero(np.isfinite(self.rssi))


@dataclass(frozen=True, eq=False)
class FingerprintDataset:
    """Columnar, read-only collection of fingerprint records."""

    ap_ids: tuple
    rssi: np.ndarray          # (N, M) float, NaN = not detected
    longitude: np.ndarray
    latitude: np.ndarray
    floor: np.ndarray
    building: np.ndarray
    metadata: dict            # column name -> (N,) array of str
    synthetic: np.ndarray     # (N,) bool

    def __post_init__(self):
        for name in ("rssi", "longitude", "latitude", "floor", "building", "synthetic"):
            getattr(self, name).setflags(write=False)

    def __len__(self):
        return self.rssi.shape[0]

    @property
    def n_aps(self):
        return self.rssi.shape[1]

    @property
    def detected(self):
        return np.isfinite(self.rssi)

    def record(self, i) -> FingerprintRecord:
        return FingerprintRecord(
            rssi=self.rssi[i].copy(),
            longitude=float(self.longitude[i]),
            latitude=float(self.latitude[i]),
            floor=int(self.floor[i]),
            building_id=int(self.building[i]),
            metadata={k: v[i] for k, v in self.metadata.items()},
            synthetic=bool(self.synthetic[i]),
        )

    def records(self):
        return (self.record(i) for i in range(len(self)))

    def subset(self, index) -> "FingerprintDataset":
        index = np.asarray(index)
        return FingerprintDataset(
            ap_ids=self.ap_ids,
            rssi=self.rssi[index],
            longitude=self.longitude[index],
            latitude=self.latitude[index],
            floor=self.floor[index],
            building=self.building[index],
            metadata={k: v[index] for k, v in self.metadata.items()},
            synthetic=self.synthetic[index],
        )

    def filled(self, fill=FILL_DBM):
        """Dense RSSI matrix with not-detected entries replaced by ``fill``."""
        return np.where(self.detected, self.rssi, fill)

    def positions(self, floor_height=FLOOR_HEIGHT_M):
        return np.column_stack([self.longitude, self.latitude, self.floor * floor_height])

    def fingerprint_hash(self):
        """Content hash over the columns the models consume."""
        h = hashlib.sha256()
        for arr in (np.nan_to_num(self.rssi, nan=NOT_DETECTED), self.longitude,
                    self.latitude, self.floor.astype(np.int64),
                    self.building.astype(np.int64)):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def from_arrays(rssi, longitude, latitude, floor, building, ap_ids=None,
                metadata=None, synthetic=None) -> FingerprintDataset:
    rssi = np.array(rssi, dtype=float)
    if rssi.ndim != 2:
        raise ValidationError(f"rssi must be 2-D, got shape {rssi.shape}")
    n, m = rssi.shape
    ap_ids = tuple(ap_ids) if ap_ids is not None else tuple(f"WAP{i + 1:03d}" for i in range(m))
    meta = {}
    for col in METADATA:
        if metadata and col in metadata:
            meta[col] = np.asarray(metadata[col], dtype=object).astype(str)
        else:
            meta[col] = np.full(n, "0", dtype=object)
    return FingerprintDataset(
        ap_ids=ap_ids,
        rssi=rssi,
        longitude=np.array(longitude, dtype=float).reshape(n),
        latitude=np.array(latitude, dtype=float).reshape(n),
        floor=np.array(floor, dtype=np.int64).reshape(n),
        building=np.array(building, dtype=np.int64).reshape(n),
        metadata=meta,
        synthetic=np.zeros(n, dtype=bool) if synthetic is None else np.array(synthetic, dtype=bool),
    )


def concat(a: FingerprintDataset, b: FingerprintDataset) -> FingerprintDataset:
    if a.ap_ids != b.ap_ids:
        raise ValidationError("cannot concatenate datasets with different AP columns")
    return FingerprintDataset(
        ap_ids=a.ap_ids,
        rssi=np.vstack([a.rssi, b.rssi]),
        longitude=np.concatenate([a.longitude, b.longitude]),
        latitude=np.concatenate([a.latitude, b.latitude]),
        floor=np.concatenate([a.floor, b.floor]),
        building=np.concatenate([a.building, b.building]),
        metadata={k: np.concatenate([a.metadata[k], b.metadata[k]]) for k in a.metadata},
        synthetic=np.concatenate([a.synthetic, b.synthetic]),
    )


def _parse_numeric(frame, col, kind):
    values = pd.to_numeric(frame[col], errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            f"column {col}: cannot parse {frame[col].iloc[row]!r} as {kind}", line=row + 2
        )
    values = values.to_numpy(dtype=float)
    if kind == "integer" and not np.all(values == np.round(values)):
        row = int(np.flatnonzero(values != np.round(values))[0])
        raise ValidationError(f"column {col}: {values[row]!r} is not an integer", line=row + 2)
    return values


def load_csv(path, schema_opts: SchemaOptions | None = None) -> FingerprintDataset:
    """Read a UJIIndoorLoc-schema CSV.

    Raises :class:`SchemaError` for a missing mandatory column and
    :class:`ValidationError` (with the 1-based file line) for unparseable or
    out-of-range cells.  Out-of-range RSSI values are clamped to
    [-104, 0] instead when ``schema_opts.clamp_rssi`` is set.
    """
    opts = schema_opts or SchemaOptions()
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    frame.columns = [c.strip() for c in frame.columns]
    for col in MANDATORY:
        if col not in frame.columns:
            raise SchemaError(f"{path}: missing mandatory column {col}")
    pattern = re.compile(opts.rssi_pattern)
    wap_cols = [c for c in frame.columns if pattern.match(c)]
    if not wap_cols:
        raise SchemaError(f"{path}: no RSSI columns matching {opts.rssi_pattern}")

    n = len(frame)
    rssi = np.empty((n, len(wap_cols)))
    for j, col in enumerate(wap_cols):
        rssi[:, j] = _parse_numeric(frame, col, "integer") if n else []
    sentinel = rssi == NOT_DETECTED
    bad = ~sentinel & ((rssi < RSSI_MIN) | (rssi > RSSI_MAX))
    if bad.any():
        if opts.clamp_rssi:
            rssi[bad] = np.clip(rssi[bad], RSSI_MIN, RSSI_MAX)
        else:
            row, col = (int(v[0]) for v in np.nonzero(bad))
            raise ValidationError(
                f"{wap_cols[col]}={rssi[row, col]:g} outside [{RSSI_MIN}, {RSSI_MAX}] dBm",
                line=row + 2,
            )
    rssi[sentinel] = np.nan

    lon = _parse_numeric(frame, "LONGITUDE", "number") if n else np.empty(0)
    lat = _parse_numeric(frame, "LATITUDE", "number") if n else np.empty(0)
    floor = _parse_numeric(frame, "FLOOR", "integer").astype(np.int64) if n else np.empty(0, np.int64)
    bld = _parse_numeric(frame, "BUILDINGID", "integer").astype(np.int64) if n else np.empty(0, np.int64)
    for name, arr, (lo, hi) in (("FLOOR", floor, opts.floor_range),
                                ("BUILDINGID", bld, opts.building_range)):
        out = (arr < lo) | (arr > hi)
        if out.any():
            row = int(np.flatnonzero(out)[0])
            raise ValidationError(f"{name}={arr[row]} outside [{lo}, {hi}]", line=row + 2)

    meta = {}
    for col in METADATA:
        meta[col] = (frame[col].to_numpy(dtype=object) if col in frame.columns
                     else np.full(n, "0", dtype=object))
    synthetic = meta["USERID"] == SYNTHETIC_MARKER["USERID"]
    return FingerprintDataset(
        ap_ids=tuple(wap_cols), rssi=rssi, longitude=lon, latitude=lat,
        floor=floor, building=bld, metadata=meta, synthetic=np.asarray(synthetic, dtype=bool),
    )


def _format_float(v):
    return repr(float(v))


def write_csv(dataset: FingerprintDataset, path):
    """Write ``dataset`` in the UJIIndoorLoc column order."""
    n = len(dataset)
    cols = {}
    ints = np.where(dataset.detected, dataset.rssi, NOT_DETECTED)
    for j, ap in enumerate(dataset.ap_ids):
        cols[ap] = ints[:, j].astype(np.int64)
    cols["LONGITUDE"] = [_format_float(v) for v in dataset.longitude]
    cols["LATITUDE"] = [_format_float(v) for v in dataset.latitude]
    cols["FLOOR"] = dataset.floor
    cols["BUILDINGID"] = dataset.building
    for col in METADATA:
        values = np.asarray(dataset.metadata.get(col, np.full(n, "0")), dtype=object)
        cols[col] = np.where(dataset.synthetic, SYNTHETIC_MARKER[col], values)
    frame = pd.DataFrame(cols, columns=list(dataset.ap_ids) + list(MANDATORY) + list(METADATA))
    try:
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# -- statistics -----------------------------------------------------------------

COUNT_METHODS = ("unique_coordinates", "records", "unique_space_position", "unique_space")


@dataclass(frozen=True)
class FloorStats:
    building: int
    floor: int
    records: int
    reference_points: int
    detection_rate: np.ndarray
    alt_counts: dict

    def to_dict(self, ap_ids):
        return {
            "building": self.building,
            "floor": self.floor,
            "records": self.records,
            "reference_points": self.reference_points,
            "reference_point_counts": dict(self.alt_counts),
            "detection_rate": {ap: float(r) for ap, r in zip(ap_ids, self.detection_rate)},
        }


@dataclass(frozen=True)
class DatasetStats:
    ap_ids: tuple
    total_records: int
    floors: tuple

    def get(self, building, floor):
        for fs in self.floors:
            if fs.building == building and fs.floor == floor:
                return fs
        raise KeyError((building, floor))

    def to_dict(self):
        return {
            "total_records": self.total_records,
            "n_aps": len(self.ap_ids),
            "reference_point_method": "unique_coordinates",
            "floors": [fs.to_dict(self.ap_ids) for fs in self.floors],
        }


def reference_point_counts(dataset: FingerprintDataset, index) -> dict:
    """Reference-point counts for a record subset under each counting method."""
    index = np.asarray(index)
    coords = set(zip(dataset.longitude[index].tolist(), dataset.latitude[index].tolist()))
    space = dataset.metadata["SPACEID"][index]
    relpos = dataset.metadata["RELATIVEPOSITION"][index]
    return {
        "unique_coordinates": len(coords),
        "records": int(index.shape[0]),
        "unique_space_position": len(set(zip(space.tolist(), relpos.tolist()))),
        "unique_space": len(set(space.tolist())),
    }


def compute_stats(dataset: FingerprintDataset) -> DatasetStats:
    floors = []
    keys = sorted(set(zip(dataset.building.tolist(), dataset.floor.tolist())))
    det = dataset.detected
    for b, f in keys:
        idx = np.flatnonzero((dataset.building == b) & (dataset.floor == f))
        counts = reference_point_counts(dataset, idx)
        floors.append(FloorStats(
            building=b, floor=f, records=int(idx.shape[0]),
            reference_points=counts["unique_coordinates"],
            detection_rate=det[idx].mean(axis=0),
            alt_counts=counts,
        ))
    return DatasetStats(ap_ids=dataset.ap_ids, total_records=len(dataset), floors=tuple(floors))


def matching_count_methods(dataset: FingerprintDataset, anchors) -> list:
    """Counting methods reproducing every ``((building, floor), count)`` anchor."""
    stats = compute_stats(dataset)
    methods = []
    for method in COUNT_METHODS:
        try:
            if all(stats.get(b, f).alt_counts[method] == n for (b, f), n in anchors):
                methods.append(method)
        except KeyError:
            return []
    return methods


# -- partitions -------------------------------------------------------------------

STRATEGIES = ("single_floor", "neighboring_floors", "single_building")


@dataclass(frozen=True)
class Strategy:
    kind: str
    building: int
    floor: int | None = None

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.kind!r}; expected one of {STRATEGIES}")
        if self.kind != "single_building" and self.floor is None:
            raise ValidationError(f"strategy {self.kind} needs a floor")

    @classmethod
    def single_floor(cls, b, f):
        return cls("single_floor", b, f)

    @classmethod
    def neighboring_floors(cls, b, f):
        return cls("neighboring_floors", b, f)

    @classmethod
    def single_building(cls, b):
        return cls("single_building", b)


@dataclass(frozen=True)
class APFilter:
    min_detection_rate: float = 0.05
    min_detections: int = 20

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class Partition:
    strategy: Strategy
    floors: tuple
    index: np.ndarray          # record indices into the source dataset
    selected_aps: np.ndarray   # AP column indices
    inputs: np.ndarray         # (n, 2) or (n, 3) model inputs in metres
    floor_height: float
    record_floors: np.ndarray

    @property
    def input_dim(self):
        return self.inputs.shape[1]


def partition_floors(dataset, strategy: Strategy):
    in_building = dataset.building == strategy.building
    present = sorted(set(dataset.floor[in_building].tolist()))
    if strategy.kind == "single_floor":
        wanted = [strategy.floor]
    elif strategy.kind == "neighboring_floors":
        wanted = [strategy.floor - 1, strategy.floor, strategy.floor + 1]
    else:
        wanted = present
    return tuple(f for f in wanted if f in present)


def make_partition(dataset, strategy: Strategy, ap_filter: APFilter | None = None,
                   floor_height=FLOOR_HEIGHT_M) -> Partition:
    """Select records and APs for one model fit.

    Multi-floor strategies append ``z = floor * floor_height`` to each input.
    """
    ap_filter = ap_filter or APFilter()
    in_building = dataset.building == strategy.building
    if strategy.kind != "single_building" and not np.any(
        in_building & (dataset.floor == strategy.floor)
    ):
        raise PartitionError(f"no records for building {strategy.building}, floor {strategy.floor}")
    floors = partition_floors(dataset, strategy)
    index = np.flatnonzero(in_building & np.isin(dataset.floor, floors))
    if index.size == 0:
        raise PartitionError(f"no records for {strategy}")

    det = dataset.detected[index]
    counts = det.sum(axis=0)
    rates = counts / index.size
    ok = (rates >= ap_filter.min_detection_rate) & (counts >= ap_filter.min_detections)
    selected = np.flatnonzero(ok)
    if selected.size == 0:
        best = np.argsort(-counts, kind="stable")[:5]
        cands = [(dataset.ap_ids[j], int(counts[j]), float(rates[j])) for j in best]
        raise FilterError(
            f"no AP passes {ap_filter} in {strategy}; best candidates {cands}", cands
        )

    xy = np.column_stack([dataset.longitude[index], dataset.latitude[index]])
    if strategy.kind == "single_floor":
        inputs = xy
    else:
        inputs = np.column_stack([xy, dataset.floor[index] * float(floor_height)])
    return Partition(strategy, floors, index, selected, inputs, float(floor_height),
                     dataset.floor[index])


def split_halves(dataset, seed):
    """Seeded random split of a dataset into two halves (first gets the extra row)."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    half = (len(dataset) + 1) // 2
    return dataset.subset(np.sort(perm[:half])), dataset.subset(np.sort(perm[half:]))
