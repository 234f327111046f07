"""Six-stage workflow orchestration: ingest, retrieve, uncertainty,
segmentation, quantification, outputs.

Every stage after retrieval consumes the float32-quantized layers that are
written to disk, so all report numbers are recomputable from the emitted
rasters plus the config. Multi-configuration runs execute the same chain per
matched-filter config and report flux spreads over plumes matched by mask
overlap.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .background import clutter_sigma, match_background, total_sigma
from .config import RunConfig, config_echo
from .errors import ConfigError, DataError, DomainError
from .matched_filter import MfConfig, retrieve
from .quantification import PlumeRecord, quantify, quantify_plume
from .scene_io import (
    EnhancementField,
    RadianceCube,
    ingest_level2,
    read_cube,
    write_raster,
)
from .segmentation import (
    PlumeMask,
    plumes_to_geojson,
    robust_sigma,
    robust_threshold,
    segment_field,
)
from .signature import band_absorption, load_bundled_table, read_absorption_table

CLUTTER_INDEPENDENCE_NOTE = (
    "clutter treated as spatially uncorrelated when aggregating to sigma(IME)"
)


def _f32grid(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
    """Snap a layer to the float32 grid it will occupy on disk."""
    return None if a is None else a.astype(np.float32).astype(np.float64)


def _load_table(cfg: RunConfig):
    if cfg.absorption_table == "builtin":
        return load_bundled_table()
    return read_absorption_table(cfg.absorption_table)


def record_to_dict(record: PlumeRecord, label_id: Optional[int] = None) -> dict:
    plume = record.plume
    out = {
        "label_id": label_id if plume is None else plume.label_id,
        "pixel_count": None if plume is None else plume.pixel_count,
        "area_m2": None if plume is None else plume.area_m2,
        "touches_edge": None if plume is None else plume.touches_edge,
        "ime_kg": record.ime_kg,
        "sigma_ime_kg": record.sigma_ime_kg,
        "length_m": record.length_m,
        "u_eff_m_per_s": record.u_eff,
        "sigma_u_eff_m_per_s": record.sigma_u_eff,
        "flux_t_per_h": record.flux_t_per_h,
        "flux_kg_per_s": record.flux_kg_per_s,
        "sigma_flux_t_per_h": record.sigma_flux_t_per_h,
        "sigma_flux_wind_t_per_h": record.sigma_flux_wind_t_per_h,
        "sigma_flux_ime_t_per_h": record.sigma_flux_ime_t_per_h,
        "assumptions": list(record.assumptions),
    }
    return out


@dataclass
class StageResult:
    """Everything one matched-filter configuration produced."""

    report: dict
    field: EnhancementField
    plumes: list[PlumeMask]
    records: list[PlumeRecord]


def _write_outputs(out_dir: Path, field: EnhancementField, plumes: list[PlumeMask]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_raster(field.delta_x, out_dir / "enhancement", field.gsd, field.origin, field.nodata_mask)
    if field.sigma_noise is not None:
        write_raster(
            field.sigma_noise, out_dir / "sigma_noise", field.gsd, field.origin, field.nodata_mask
        )
    if field.sigma_total is not None:
        write_raster(
            field.sigma_total, out_dir / "sigma_total", field.gsd, field.origin, field.nodata_mask
        )
    labels = np.zeros(field.shape)
    for p in plumes:
        labels[p.mask] = p.label_id
    write_raster(labels, out_dir / "plume_mask", field.gsd, field.origin, field.nodata_mask)
    (out_dir / "plumes.geojson").write_text(
        json.dumps(plumes_to_geojson(plumes), indent=2, sort_keys=True), encoding="utf-8"
    )


def write_report(report: dict, path: Path) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")


def _ingest_field(cfg: RunConfig) -> EnhancementField:
    field = ingest_level2(cfg.input.enhancement, cfg.input.sigma, cfg.input.gsd)
    return field


def run_stage(
    cfg: RunConfig,
    mf: MfConfig,
    out_dir: Path,
    cube: Optional[RadianceCube],
    table,
) -> StageResult:
    """Run the full chain for one matched-filter configuration."""
    timings: dict[str, float] = {}
    flags: list[str] = [CLUTTER_INDEPENDENCE_NOTE]
    t0 = time.perf_counter()

    if cube is not None:
        absorption = band_absorption(table, cube.descriptor, mf.window)
        field64, _stats = retrieve(cube, absorption, mf, n_sigma=cfg.segmentation.n_sigma)
        field = EnhancementField(
            delta_x=_f32grid(field64.delta_x),
            gsd=field64.gsd,
            origin=field64.origin,
            sigma_noise=_f32grid(field64.sigma_noise),
            nodata_mask=field64.nodata_mask,
            provenance=field64.provenance,
        )
        input_mode = "level1"
    else:
        absorption = None
        field = _ingest_field(cfg)
        input_mode = "level2"
        if field.sigma_total is not None:
            flags.append("external uncertainty raster used verbatim as sigma_total")
        else:
            flags.append("no uncertainty raster ingested: sigma(IME) unavailable")
    timings["retrieve_s"] = time.perf_counter() - t0

    # background characterization: provisional detection, spectral matching,
    # clutter, total uncertainty (level-1 only; level-2 keeps external sigma)
    t0 = time.perf_counter()
    valid = ~field.nodata_mask
    if not np.any(valid):
        raise DataError("no valid pixels in the scene")
    bg_values: Optional[np.ndarray] = None
    background_summary: dict = {"source": "all_valid", "selected_count": 0}
    if cube is not None:
        tau0 = robust_threshold(field.delta_x[valid], cfg.segmentation.n_sigma)
        provisional = (field.delta_x > tau0) & valid
        selection = None
        if np.any(provisional):
            try:
                selection = match_background(
                    cube,
                    absorption,
                    provisional,
                    n_select=cfg.background.n_select,
                    buffer_m=cfg.background.buffer_m,
                    min_sample=cfg.background.min_sample,
                )
            except DomainError:
                flags.append("background matching failed (no candidates); using all valid pixels")
        else:
            flags.append("no provisional detection; clutter estimated from all valid pixels")
        if selection is not None:
            sigma_clutter = clutter_sigma(field, selection)
            bg_values = selection.values_from(field)
            background_summary = {
                "source": "matched",
                "selected_count": selection.count,
                "insufficient": selection.insufficient,
                "max_spectral_angle_rad": float(selection.similarity_scores.max())
                if selection.count
                else None,
            }
            if selection.insufficient:
                flags.append("background selection smaller than requested (insufficiency flag)")
        else:
            sigma_clutter = robust_sigma(field.delta_x[valid])
        background_summary["sigma_clutter_ppmm"] = sigma_clutter
        field = total_sigma(field.replace(sigma_clutter=sigma_clutter))
        field = field.replace(sigma_total=_f32grid(field.sigma_total))
    else:
        background_summary = {
            "source": "external",
            "selected_count": 0,
            "sigma_clutter_ppmm": None,
        }
    timings["background_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    plumes, tau, _final_mask = segment_field(field, cfg.segmentation, bg_values)
    timings["segmentation_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    records = []
    if plumes:
        if cfg.wind is None:
            raise ConfigError("wind: section is required to quantify plumes")
        records = [quantify_plume(field, p, cfg.wind, cfg.constants) for p in plumes]
    timings["quantification_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    _write_outputs(out_dir, field, plumes)
    timings["outputs_s"] = time.perf_counter() - t0

    report = {
        "schema": "plumeflux-report-1",
        "kernel_backend": kernels.backend_name(),
        "input_mode": input_mode,
        "mf_label": mf.label(),
        "provenance": field.provenance,
        "threshold_ppmm": tau,
        "background": background_summary,
        "plume_count": len(plumes),
        "plumes": [record_to_dict(r) for r in records],
        "assumption_flags": sorted(set(flags)),
        "timings_s": timings,
    }
    return StageResult(report=report, field=field, plumes=plumes, records=records)


def run_pipeline(cfg: RunConfig, output_dir: Optional[Path] = None) -> dict:
    """Single-configuration end-to-end run; writes rasters and report.json."""
    out_dir = Path(output_dir) if output_dir is not None else cfg.output_dir
    if out_dir is None:
        raise ConfigError("output_dir is required (config key or --output)")
    out_dir = Path(out_dir)
    cube = read_cube(cfg.input.cube) if cfg.input.mode() == "level1" and cfg.input.cube else None
    if cube is None and cfg.input.enhancement is None:
        raise ConfigError("input: set one of 'cube' or 'enhancement'")
    table = _load_table(cfg) if cube is not None else None
    stage = run_stage(cfg, cfg.mf[0], out_dir, cube, table)
    report = dict(stage.report)
    report["config"] = config_echo(cfg)
    write_report(report, out_dir / "report.json")
    return report


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = int(np.count_nonzero(a & b))
    if inter == 0:
        return 0.0
    union = int(np.count_nonzero(a | b))
    return inter / union


def match_plumes_across_runs(
    runs: list[StageResult], iou_threshold: float = 0.3
) -> tuple[list[dict], list[dict]]:
    """Greedy IoU matching of plumes against the first run's plumes.

    Returns (groups, unmatched): each group holds one member per run where a
    match of IoU >= threshold exists; plumes that match no group are listed
    as unmatched with their run index.
    """
    if not runs:
        return [], []
    groups = [
        {"anchor_label": p.label_id, "members": [(0, p.label_id)], "anchor_mask": p.mask}
        for p in runs[0].plumes
    ]
    unmatched = []
    for run_idx in range(1, len(runs)):
        plumes = runs[run_idx].plumes
        pairs = []
        for g_idx, group in enumerate(groups):
            for p in plumes:
                iou = _mask_iou(group["anchor_mask"], p.mask)
                if iou >= iou_threshold:
                    pairs.append((iou, g_idx, p.label_id))
        pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
        taken_groups: set[int] = set()
        taken_plumes: set[int] = set()
        for iou, g_idx, label in pairs:
            if g_idx in taken_groups or label in taken_plumes:
                continue
            groups[g_idx]["members"].append((run_idx, label))
            taken_groups.add(g_idx)
            taken_plumes.add(label)
        for p in plumes:
            if p.label_id not in taken_plumes:
                unmatched.append({"config_index": run_idx, "label_id": p.label_id})
    return groups, unmatched


def run_multi(cfg: RunConfig, output_dir: Optional[Path] = None) -> dict:
    """Run every configured matched filter and report flux spreads per plume."""
    if len(cfg.mf) < 2:
        raise ConfigError("multi-configuration runs need at least 2 entries under 'mf'")
    out_dir = Path(output_dir) if output_dir is not None else cfg.output_dir
    if out_dir is None:
        raise ConfigError("output_dir is required (config key or --output)")
    out_dir = Path(out_dir)
    cube = read_cube(cfg.input.cube) if cfg.input.cube else None
    if cube is None and cfg.input.enhancement is None:
        raise ConfigError("input: set one of 'cube' or 'enhancement'")
    table = _load_table(cfg) if cube is not None else None

    results: list[StageResult] = []
    sub_reports = []
    for i, mf in enumerate(cfg.mf):
        sub = out_dir / f"config_{i:02d}"
        stage = run_stage(cfg, mf, sub, cube, table)
        results.append(stage)
        entry = dict(stage.report)
        entry["output_subdir"] = sub.name
        sub_reports.append(entry)
        write_report(entry, sub / "report.json")

    flux_by_run_label = [
        {p.label_id: r.flux_t_per_h for p, r in zip(stage.plumes, stage.records)}
        for stage in results
    ]
    groups, unmatched = match_plumes_across_runs(results)
    spreads = []
    for group in groups:
        fluxes = [flux_by_run_label[run_idx][label] for run_idx, label in group["members"]]
        spreads.append(
            {
                "anchor_label": group["anchor_label"],
                "members": [
                    {
                        "config_index": run_idx,
                        "label_id": label,
                        "flux_t_per_h": flux_by_run_label[run_idx][label],
                    }
                    for run_idx, label in group["members"]
                ],
                "matched_runs": len(group["members"]),
                "flux_min_t_per_h": float(np.min(fluxes)),
                "flux_mean_t_per_h": float(np.mean(fluxes)),
                "flux_max_t_per_h": float(np.max(fluxes)),
                "flux_std_t_per_h": float(np.std(fluxes)),
            }
        )
    unmatched_entries = [
        {**u, "flux_t_per_h": flux_by_run_label[u["config_index"]][u["label_id"]]}
        for u in unmatched
    ]

    report = {
        "schema": "plumeflux-multi-report-1",
        "kernel_backend": kernels.backend_name(),
        "config": config_echo(cfg),
        "runs": sub_reports,
        "spreads": spreads,
        "unmatched_plumes": unmatched_entries,
    }
    write_report(report, out_dir / "report.json")
    return report


def quantify_only(
    ime_kg: float,
    sigma_ime_kg: Optional[float],
    area_m2: float,
    wind,
) -> dict:
    """Quantification without rasters: IME and area straight to a flux record."""
    if ime_kg <= 0 or area_m2 <= 0:
        raise DomainError("ime_kg and area_m2 must be positive")
    record = quantify(ime_kg, sigma_ime_kg, area_m2, wind)
    out = record_to_dict(record)
    out["area_m2"] = area_m2
    return out
