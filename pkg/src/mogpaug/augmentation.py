"""MOGP-based fingerprint augmentation: partition, fit, sample a grid, emit.

Three strategies decide which records feed each model fit:

``single_floor``
    one fit per (building, floor), planar inputs, samples on that floor;
``neighboring_floors``
    one fit per (building, floor) on floors f-1..f+1 with a height input,
    samples only on floor f;
``single_building``
    one fit per building on all its floors, samples on every target floor.

Sampling locations form a regular lattice over the axis-aligned box spanned
by the extreme coordinates of each floor's reference points.  That box can
cover ground outside an irregular building outline; see
:func:`floor_plan_filter`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    RSSI_MAX,
    RSSI_MIN,
    SYNTHETIC_MARKER,
    APFilter,
    FingerprintDataset,
    Strategy,
    STRATEGIES,
    concat,
    from_arrays,
    load_csv,
    make_partition,
    partition_floors,
    write_csv,
)
from .errors import MogpAugError, SchemaError, ValidationError
from .gp import FitOptions, Posterior, TrainingSet, fit, initial_model
from .kernels import kernel_from_dict

log = logging.getLogger(__name__)

PLAN_SCHEMA_VERSION = 1
OUTPUT_POLICIES = ("posterior_mean", "posterior_sample")
BBOX_POLICIES = ("extreme_coordinates", "explicit")


@dataclass(frozen=True)
class BBox:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @property
    def area(self):
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(points)
        return ((p[:, 0] >= self.min_x - tol) & (p[:, 0] <= self.max_x + tol)
                & (p[:, 1] >= self.min_y - tol) & (p[:, 1] <= self.max_y + tol))


def compute_bbox(partition) -> dict:
    """Per-floor bounding box of the partition's reference points."""
    boxes = {}
    for f in partition.floors:
        pts = partition.inputs[partition.record_floors == f, :2]
        if pts.shape[0] == 0:
            continue
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        boxes[f] = BBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
    return boxes


def sample_grid(bbox: BBox, spacing: float) -> np.ndarray:
    """Lattice from the min corner in steps of ``spacing``.

    Points are ordered by x, then y, both ascending.  The max corner is
    included when the extent is a multiple of the spacing.
    """
    if not spacing > 0:
        raise ValidationError(f"grid spacing must be > 0, got {spacing}")

    def axis(lo, hi):
        n = int(math.floor((hi - lo) / spacing + 1e-9)) + 1
        return np.minimum(lo + spacing * np.arange(n), hi)

    xs, ys = axis(bbox.min_x, bbox.max_x), axis(bbox.min_y, bbox.max_y)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def floor_plan_filter(points, building, floor):
    """Hook for dropping sample points outside the true floor outline.

    No floor-plan source is wired in yet, so every point is kept.
    """
    return np.ones(len(points), dtype=bool)


@dataclass(frozen=True)
class AugmentationPlan:
    strategy: str = "single_building"
    buildings: tuple | None = None
    target_floors: tuple | None = None
    grid_spacing: float = 5.0
    bbox_policy: str = "extreme_coordinates"
    bounds: tuple | None = None
    output_policy: str = "posterior_mean"
    seed: int = 0
    detection_threshold: float = -100.0
    floor_height: float = 4.0
    ap_filter: APFilter = field(default_factory=APFilter)
    kernel: dict = field(default_factory=lambda: {"type": "matern52", "h": 1.0})
    n_latent: int = 1
    budget: int = 20_000
    schema_version: int = PLAN_SCHEMA_VERSION

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if not self.grid_spacing > 0:
            raise ValidationError("grid_spacing must be > 0")
        if not -110 <= self.detection_threshold <= -60:
            raise ValidationError("detection_threshold must lie in [-110, -60] dBm")
        if self.output_policy not in OUTPUT_POLICIES:
            raise ValidationError(f"unknown output_policy {self.output_policy!r}")
        if self.bbox_policy not in BBOX_POLICIES:
            raise ValidationError(f"unknown bbox_policy {self.bbox_policy!r}")
        if self.bbox_policy == "explicit" and (self.bounds is None or len(self.bounds) != 4):
            raise ValidationError("explicit bbox_policy needs bounds [min_x, min_y, max_x, max_y]")
        if self.n_latent < 1 or self.budget < 1:
            raise ValidationError("n_latent and budget must be >= 1")
        if self.schema_version != PLAN_SCHEMA_VERSION:
            raise SchemaError(f"unsupported plan schema_version {self.schema_version}")
        kernel_from_dict(self.kernel)

    def to_dict(self):
        d = dataclasses.asdict(self)
        for key in ("buildings", "target_floors", "bounds"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d, strict=False):
        d = dict(d)
        if "schema_version" not in d:
            raise SchemaError("plan is missing the required schema_version field")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            if strict:
                raise SchemaError(f"unknown plan fields {unknown}")
            warnings.warn(f"ignoring unknown plan fields {unknown}")
            for key in unknown:
                del d[key]
        if isinstance(d.get("ap_filter"), dict):
            d["ap_filter"] = APFilter(**d["ap_filter"])
        for key in ("buildings", "target_floors", "bounds"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise SchemaError(f"malformed plan: {exc}") from None


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    dataset: FingerprintDataset
    n_original: int
    provenance: dict
    failures: tuple = ()

    @property
    def generated(self):
        return self.dataset.subset(np.arange(self.n_original, len(self.dataset)))


def work_units(dataset, plan):
    """Ordered (strategy, emit_floors) pairs implied by a plan."""
    buildings = sorted(set(dataset.building.tolist()))
    if plan.buildings is not None:
        buildings = [b for b in buildings if b in set(plan.buildings)]
    units = []
    for b in buildings:
        present = sorted(set(dataset.floor[dataset.building == b].tolist()))
        targets = [f for f in present if plan.target_floors is None or f in plan.target_floors]
        if plan.strategy == "single_building":
            if targets:
                units.append((Strategy.single_building(b), tuple(targets)))
        else:
            for f in targets:
                units.append((Strategy(plan.strategy, b, f), (f,)))
    return units


def _ap_chunks(selected, n_points, budget):
    per_chunk = max(1, budget // max(1, n_points))
    if per_chunk < len(selected):
        warnings.warn(
            f"{n_points} points x {len(selected)} APs exceeds the budget of {budget} "
            f"entries; fitting in chunks of {per_chunk} APs",
            RuntimeWarning,
        )
    return [selected[i:i + per_chunk] for i in range(0, len(selected), per_chunk)]


def _fit_report_dict(report):
    return {
        "log_marginal_likelihood": report.log_marginal_likelihood,
        "iterations": report.iterations,
        "restart_index": report.restart_index,
        "converged": report.converged,
        "jitter": report.jitter,
    }


def _to_dbm(values, threshold):
    out = np.clip(np.rint(values), RSSI_MIN, RSSI_MAX)
    out[out < threshold] = np.nan
    return out


def _augment_unit(dataset, plan, fit_opts, strategy, emit_floors, point_filter):
    part = make_partition(dataset, strategy, plan.ap_filter, plan.floor_height)
    if plan.bbox_policy == "explicit":
        box = BBox(*map(float, plan.bounds))
        boxes = {f: box for f in emit_floors}
    else:
        boxes = compute_bbox(part)
    grids = {}
    for f in emit_floors:
        pts = sample_grid(boxes[f], plan.grid_spacing)
        keep = np.asarray(point_filter(pts, strategy.building, f), dtype=bool)
        grids[f] = pts[keep]

    rssi = dataset.rssi[part.index]
    det = dataset.detected[part.index]
    generated = {f: np.full((len(grids[f]), dataset.n_aps), np.nan) for f in emit_floors}
    var_sum = {f: [] for f in emit_floors}
    chunks_info = []
    kernel = kernel_from_dict(plan.kernel)
    for chunk in _ap_chunks(part.selected_aps, len(part.index), plan.budget):
        rows = det[:, chunk].any(axis=1)
        ts = TrainingSet(part.inputs[rows], rssi[rows][:, chunk],
                         output_ids=tuple(dataset.ap_ids[j] for j in chunk),
                         mask=det[rows][:, chunk])
        template = initial_model(ts, kernel=kernel, n_latent=plan.n_latent,
                                 standardize=fit_opts.standardize,
                                 mean_policy=fit_opts.mean_policy)
        model, report = fit(template, ts, fit_opts)
        post = Posterior(model, ts)
        for f in emit_floors:
            pts = grids[f]
            if len(pts) == 0:
                continue
            Xq = pts if part.input_dim == 2 else np.column_stack(
                [pts, np.full(len(pts), f * plan.floor_height)])
            sampling = plan.output_policy == "posterior_sample"
            mean, cov = post.predict_many(Xq, full_cov=sampling)
            if sampling:
                rng = np.random.default_rng([plan.seed, strategy.building, f, int(chunk[0])])
                values = np.array([rng.multivariate_normal(mu, c, method="eigh")
                                   for mu, c in zip(mean, cov)])
                marg = np.diagonal(cov, axis1=1, axis2=2)
            else:
                values, marg = mean, cov
            generated[f][:, chunk] = _to_dbm(values, plan.detection_threshold)
            var_sum[f].append(marg)
        chunks_info.append({
            "aps": [dataset.ap_ids[j] for j in chunk],
            "fit": _fit_report_dict(report),
            "model": model.to_dict(),
        })

    summary = {}
    for f in emit_floors:
        v = np.concatenate([a.ravel() for a in var_sum[f]]) if var_sum[f] else np.empty(0)
        summary[str(f)] = {
            "points": int(len(grids[f])),
            "bbox": dataclasses.asdict(boxes[f]),
            "mean_variance": float(v.mean()) if v.size else None,
            "max_variance": float(v.max()) if v.size else None,
        }
    info = {
        "strategy": dataclasses.asdict(strategy),
        "train_floors": list(part.floors),
        "emit_floors": list(emit_floors),
        "n_records": int(len(part.index)),
        "selected_aps": [dataset.ap_ids[j] for j in part.selected_aps],
        "chunks": chunks_info,
        "floors": summary,
    }
    return info, [(f, grids[f], generated[f]) for f in emit_floors]


def augment(dataset, plan, fit_opts=None, jobs=1, point_filter=floor_plan_filter):
    """Generate synthetic fingerprints and merge them after the originals.

    A failing partition (empty, no usable APs, numerical trouble) is recorded
    in ``failures`` and the remaining partitions still run.
    """
    fit_opts = fit_opts or FitOptions(seed=plan.seed)
    units = work_units(dataset, plan)

    def run(unit):
        strategy, emit = unit
        try:
            return _augment_unit(dataset, plan, fit_opts, strategy, emit, point_filter), None
        except MogpAugError as exc:
            log.warning("partition %s failed: %s", strategy, exc)
            return None, {"strategy": dataclasses.asdict(strategy),
                          "error": type(exc).__name__, "message": str(exc)}

    if jobs > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, units))
    else:
        results = [run(u) for u in units]

    parts, failures = [], []
    rssi, lon, lat, floor, bld = [], [], [], [], []
    for (strategy, _), (res, failure) in zip(units, results):
        if failure is not None:
            failures.append(failure)
            continue
        info, emitted = res
        parts.append(info)
        for f, pts, values in emitted:
            rssi.append(values)
            lon.append(pts[:, 0])
            lat.append(pts[:, 1])
            floor.append(np.full(len(pts), f))
            bld.append(np.full(len(pts), strategy.building))

    if rssi:
        n = sum(len(x) for x in lon)
        gen = from_arrays(
            np.vstack(rssi), np.concatenate(lon), np.concatenate(lat),
            np.concatenate(floor), np.concatenate(bld), ap_ids=dataset.ap_ids,
            metadata={k: np.full(n, v) for k, v in SYNTHETIC_MARKER.items()},
            synthetic=np.ones(n, dtype=bool),
        )
        merged = concat(dataset, gen)
    else:
        merged = dataset

    provenance = {
        "tool": "mogpaug",
        "tool_version": __version__,
        "plan": plan.to_dict(),
        "fit_options": dataclasses.asdict(fit_opts),
        "seed": plan.seed,
        "input_hash": dataset.fingerprint_hash(),
        "n_original": len(dataset),
        "n_generated": len(merged) - len(dataset),
        "rounding": "round-half-even, then clamp to [-104, 0], then threshold",
        "partitions": parts,
        "failures": failures,
    }
    return AugmentedDataset(merged, len(dataset), provenance, tuple(failures))


def sidecar_path(path):
    return Path(str(path) + ".provenance.json")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_augmented(augmented, path, input_path=None):
    """Write the merged CSV and a ``<path>.provenance.json`` sidecar."""
    path = Path(path)
    write_csv(augmented.dataset, path)
    prov = dict(augmented.provenance)
    prov["input_path"] = None if input_path is None else str(Path(input_path).resolve())
    prov["input_file_sha256"] = None if input_path is None else file_sha256(input_path)
    prov["output_sha256"] = file_sha256(path)
    try:
        with open(sidecar_path(path), "w") as fh:
            json.dump(prov, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write provenance for {path}: {exc}") from exc
    return sidecar_path(path)


def replay(sidecar, out_path, input_path=None, jobs=1):
    """Re-run the augmentation described by a provenance sidecar.

    Returns ``(new_sha256, recorded_sha256)``.
    """
    with open(sidecar) as fh:
        prov = json.load(fh)
    src = input_path or prov.get("input_path")
    if src is None:
        raise SchemaError("sidecar does not record the input path; pass it explicitly")
    dataset = load_csv(src)
    if dataset.fingerprint_hash() != prov["input_hash"]:
        raise ValidationError(f"input {src} does not match the recorded hash")
    plan = AugmentationPlan.from_dict(prov["plan"], strict=True)
    fit_opts = FitOptions(**prov["fit_options"])
    aug = augment(dataset, plan, fit_opts, jobs=jobs)
    write_augmented(aug, out_path, input_path=src)
    return file_sha256(out_path), prov["output_sha256"]
