"""k-NN fingerprint localisation and the building/floor/3-D error metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _accel
from .dataset import FILL_DBM, FLOOR_HEIGHT_M
from .errors import InputError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Predictions:
    building: np.ndarray
    floor: np.ndarray
    longitude: np.ndarray
    latitude: np.ndarray

    def __len__(self):
        return self.building.shape[0]


@dataclass(frozen=True)
class LocalizationResult:
    building_hit_pct: float
    floor_hit_pct: float
    mean_3d_error_m: float
    n_queries: int

    def metrics(self):
        return {
            "building_hit_pct": self.building_hit_pct,
            "floor_hit_pct": self.floor_hit_pct,
            "mean_3d_error_m": self.mean_3d_error_m,
        }


def _vote(idx, dist, building, floor, lon, lat):
    labels = list(zip(building[idx].tolist(), floor[idx].tolist()))
    groups = {}
    for pos, lab in enumerate(labels):
        g = groups.setdefault(lab, [0, 0.0, idx[pos], []])
        g[0] += 1
        g[1] += dist[pos]
        g[2] = min(g[2], idx[pos])
        g[3].append(idx[pos])
    # most votes, then smaller distance sum, then lowest training index
    (b, f), (_, _, _, members) = min(groups.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[1][2]))
    members = np.asarray(members)
    return b, f, float(lon[members].mean()), float(lat[members].mean())


def knn_localize(train, queries, k=3, fill=FILL_DBM):
    """Locate query fingerprints against a training dataset.

    ``queries`` is a dataset (or an (Q, M) RSSI array with NaN for not
    detected).  Distances are Euclidean in RSSI space with not-detected
    entries filled at ``fill`` dBm.
    """
    if len(train) == 0:
        raise InputError("training set is empty")
    if k < 1:
        raise InputError("k must be >= 1")
    if k > len(train):
        log.warning("k=%d exceeds the %d training records; clamping", k, len(train))
        k = len(train)
    q_rssi = queries.rssi if hasattr(queries, "rssi") else np.atleast_2d(queries)
    if q_rssi.shape[1] != train.n_aps:
        raise InputError(f"query has {q_rssi.shape[1]} APs, training set {train.n_aps}")
    q = np.where(np.isfinite(q_rssi), q_rssi, fill)
    idx, dist = _accel.knn(train.filled(fill), q, k)
    out = [_vote(idx[i], dist[i], train.building, train.floor, train.longitude, train.latitude)
           for i in range(q.shape[0])]
    cols = list(zip(*out)) if out else [(), (), (), ()]
    return Predictions(
        building=np.array(cols[0], dtype=np.int64),
        floor=np.array(cols[1], dtype=np.int64),
        longitude=np.array(cols[2], dtype=float),
        latitude=np.array(cols[3], dtype=float),
    )


def score(results: Predictions, truth, floor_height=FLOOR_HEIGHT_M) -> LocalizationResult:
    """Hit rates (%) and mean 3-D error (m) with ``z = floor * floor_height``.

    A floor hit requires the building to be right as well.
    """
    n = len(results)
    if n != len(truth):
        raise InputError(f"{n} predictions for {len(truth)} ground-truth records")
    if n == 0:
        raise InputError("nothing to score")
    b_hit = results.building == truth.building
    f_hit = b_hit & (results.floor == truth.floor)
    dz = (results.floor - truth.floor) * float(floor_height)
    err = np.sqrt((results.longitude - truth.longitude) ** 2
                  + (results.latitude - truth.latitude) ** 2 + dz**2)
    return LocalizationResult(
        building_hit_pct=100.0 * float(b_hit.mean()),
        floor_hit_pct=100.0 * float(f_hit.mean()),
        mean_3d_error_m=float(err.mean()),
        n_queries=n,
    )


METRIC_ROWS = (
    ("building_hit_pct", "Building hit rate [%]"),
    ("floor_hit_pct", "Floor hit rate [%]"),
    ("mean_3d_error_m", "3D error [m]"),
)


def compare_runs(reports, labels=None):
    """Side-by-side comparison of evaluation reports against the first one.

    Each report is a dict carrying ``metrics`` and ``dataset_hashes.test``.
    Returns ``(json_dict, text_table)``.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise InputError("compare needs at least two reports")
    labels = list(labels) if labels else [r.get("label") or f"run{i}" for i, r in enumerate(reports)]
    if len(labels) != len(reports):
        raise InputError("one label per report is required")
    tests = {r.get("dataset_hashes", {}).get("test") for r in reports}
    if len(tests) != 1:
        raise InputError("reports were computed on different query sets")
    base = reports[0]["metrics"]
    columns = []
    for label, rep in zip(labels, reports):
        m = rep["metrics"]
        columns.append({
            "label": label,
            "metrics": {k: m[k] for k, _ in METRIC_ROWS},
            "delta": {k: m[k] - base[k] for k, _ in METRIC_ROWS},
        })
    doc = {"baseline": labels[0], "test_hash": tests.pop(), "columns": columns}

    head = ["Performance metric"] + labels
    rows = []
    for key, title in METRIC_ROWS:
        row = [title]
        for i, col in enumerate(columns):
            cell = f"{col['metrics'][key]:.2f}"
            if i:
                cell += f" ({col['delta'][key]:+.2f})"
            row.append(cell)
        rows.append(row)
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]

    def fmt(r):
        return " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))

    sep = "-+-".join("-" * w for w in widths)
    text = "\n".join([fmt(head), sep] + [fmt(r) for r in rows])
    return doc, text
