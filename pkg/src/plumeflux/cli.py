"""Command-line entry points for the processing chain.

Subcommands: simulate, retrieve, segment, quantify, pipeline, multi,
ingest-l2, config. Exit codes: 0 success (including zero plumes found),
2 config errors, 3 data/domain errors, 4 internal numerical errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .config import default_config_yaml, load_config
from .errors import ConfigError, PlumefluxError
from .pipeline import quantify_only, run_pipeline, run_multi, write_report
from .quantification import WindConfig
from .scene_io import ingest_level2, read_cube, write_cube, write_raster
from .segmentation import plumes_to_geojson, segment_field
from .signature import band_absorption, load_bundled_table, read_absorption_table
from .simulator import simulate_scene


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", type=Path, required=config_required, help="run configuration YAML")
    parser.add_argument("--output", type=Path, default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="seed override")


def _load(args) -> "RunConfig":
    return load_config(args.config, seed_override=args.seed)


def _apply_mf_override(cfg, variant: Optional[str]):
    if variant is None:
        return cfg
    mf = tuple(dataclasses.replace(m, variant=variant.lower()) for m in cfg.mf)
    return dataclasses.replace(cfg, mf=mf)


def _out_dir(cfg, args) -> Path:
    out = args.output if args.output is not None else cfg.output_dir
    if out is None:
        raise ConfigError("output_dir is required (config key or --output)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed, validate_inputs=False)
    if cfg.simulate is None:
        raise ConfigError("config has no 'simulate' section")
    out = _out_dir(cfg, args)
    cube, truth = simulate_scene(cfg.simulate)
    write_cube(cube, out / "cube")
    doc = {
        "seed": cfg.simulate.seed,
        "lines": cfg.simulate.lines,
        "samples": cfg.simulate.samples,
        "gsd_m": cfg.simulate.gsd_m,
        "plume": None,
    }
    if truth is not None:
        write_raster(truth.delta_x_true, out / "truth_delta_x", cube.gsd, cube.origin)
        write_raster(truth.mask.astype(float), out / "truth_mask", cube.gsd, cube.origin)
        doc["plume"] = {
            "center": list(truth.spec.center),
            "peak_delta_x_ppmm": truth.spec.peak_delta_x,
            "sigma_along_m": truth.spec.sigma_along_m,
            "sigma_across_m": truth.spec.sigma_across_m,
            "orientation_rad": truth.spec.orientation_rad,
            "truth_mask_fraction": truth.spec.truth_mask_fraction,
            "truth_mask_pixels": int(truth.mask.sum()),
            "ime_true_kg": truth.ime_true_kg,
        }
    write_report(doc, out / "truth.json")
    print(f"wrote synthetic scene to {out}")
    return 0


def cmd_retrieve(args) -> int:
    cfg = _apply_mf_override(_load(args), args.mf)
    if cfg.input.cube is None:
        raise ConfigError("retrieve requires input.cube (level-1 radiance)")
    out = _out_dir(cfg, args)
    cube = read_cube(cfg.input.cube)
    table = load_bundled_table() if cfg.absorption_table == "builtin" else read_absorption_table(cfg.absorption_table)
    from .matched_filter import retrieve as mf_retrieve

    mf = cfg.mf[0]
    absorption = band_absorption(table, cube.descriptor, mf.window)
    field, _ = mf_retrieve(cube, absorption, mf, n_sigma=cfg.segmentation.n_sigma)
    write_raster(field.delta_x, out / "enhancement", field.gsd, field.origin, field.nodata_mask)
    if field.sigma_noise is not None:
        write_raster(field.sigma_noise, out / "sigma_noise", field.gsd, field.origin, field.nodata_mask)
    print(f"wrote enhancement (provenance: {field.provenance}) to {out}")
    return 0


def cmd_segment(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg, args)
    enh = args.enhancement if args.enhancement is not None else cfg.input.enhancement
    if enh is None:
        raise ConfigError("segment requires input.enhancement or --enhancement")
    field = ingest_level2(enh, None, cfg.input.gsd)
    plumes, tau, _mask = segment_field(field, cfg.segmentation)
    labels = np.zeros(field.shape)
    for p in plumes:
        labels[p.mask] = p.label_id
    write_raster(labels, out / "plume_mask", field.gsd, field.origin, field.nodata_mask)
    (out / "plumes.geojson").write_text(
        json.dumps(plumes_to_geojson(plumes), indent=2, sort_keys=True), encoding="utf-8"
    )
    write_report(
        {
            "threshold_ppmm": tau,
            "plume_count": len(plumes),
            "plumes": [
                {"label_id": p.label_id, "pixel_count": p.pixel_count, "area_m2": p.area_m2}
                for p in plumes
            ],
        },
        out / "segmentation.json",
    )
    print(f"threshold {tau:.3f} ppm*m, {len(plumes)} plume(s); outputs in {out}")
    return 0


def cmd_quantify(args) -> int:
    wind = None
    if args.config is not None:
        cfg = load_config(args.config, seed_override=args.seed)
        wind = cfg.wind
    if args.u10 is not None:
        wind = WindConfig(
            u10=args.u10,
            sigma_u10=args.sigma_u10,
            beta0=args.beta0,
            beta1=args.beta1,
            sigma_method=args.sigma_method,
        )
    if wind is None:
        raise ConfigError("quantify needs a wind section in --config or --u10 on the command line")
    out = quantify_only(args.ime_kg, args.sigma_ime_kg, args.area_m2, wind)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_pipeline(args) -> int:
    cfg = _apply_mf_override(_load(args), args.mf)
    report = run_pipeline(cfg, args.output)
    print(
        f"pipeline complete: {report['plume_count']} plume(s); "
        f"report at {(args.output or cfg.output_dir)}/report.json"
    )
    return 0


def cmd_multi(args) -> int:
    cfg = _load(args)
    report = run_multi(cfg, args.output)
    print(
        f"multi-config run complete: {len(report['runs'])} configs, "
        f"{len(report['spreads'])} matched plume group(s)"
    )
    return 0


def cmd_ingest_l2(args) -> int:
    field = ingest_level2(args.enhancement, args.sigma, args.gsd)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_raster(field.delta_x, out / "enhancement", field.gsd, field.origin, field.nodata_mask)
    if field.sigma_total is not None:
        write_raster(field.sigma_total, out / "sigma_total", field.gsd, field.origin, field.nodata_mask)
    valid = int((~field.nodata_mask).sum())
    write_report(
        {
            "provenance": field.provenance,
            "gsd_m": field.gsd,
            "valid_pixels": valid,
            "sigma_total_present": field.sigma_total is not None,
        },
        out / "ingest.json",
    )
    print(f"ingested level-2 product ({valid} valid pixels) into {out}")
    return 0


def cmd_config(args) -> int:
    if args.dump_defaults:
        sys.stdout.write(default_config_yaml())
        return 0
    raise ConfigError("config: nothing to do (use --dump-defaults)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plumeflux",
        description="Gas plume retrieval, segmentation, and emission quantification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene with truth")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("retrieve", help="matched-filter enhancement retrieval only")
    _add_common(p)
    p.add_argument("--mf", type=str, default=None, help="variant override (cmf|ctmf|cwcmf)")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("segment", help="threshold and polygonize an enhancement raster")
    _add_common(p)
    p.add_argument("--enhancement", type=Path, default=None, help="enhancement raster override")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("quantify", help="IME and area straight to flux (no rasters)")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ime-kg", type=float, required=True, dest="ime_kg")
    p.add_argument("--sigma-ime-kg", type=float, default=None, dest="sigma_ime_kg")
    p.add_argument("--area-m2", type=float, required=True, dest="area_m2")
    p.add_argument("--u10", type=float, default=None)
    p.add_argument("--sigma-u10", type=float, default=1.0, dest="sigma_u10")
    p.add_argument("--beta0", type=float, default=0.6)
    p.add_argument("--beta1", type=float, default=1.1)
    p.add_argument(
        "--sigma-method",
        choices=("analytic", "forward_difference"),
        default="analytic",
        dest="sigma_method",
    )
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("pipeline", help="full chain: ingest to report")
    _add_common(p)
    p.add_argument("--mf", type=str, default=None, help="variant override (cmf|ctmf|cwcmf)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("multi", help="multi-configuration run with flux spreads")
    _add_common(p)
    p.set_defaults(func=cmd_multi)

    p = sub.add_parser("ingest-l2", help="validate and canonicalize an external product")
    p.add_argument("--enhancement", type=Path, required=True)
    p.add_argument("--sigma", type=Path, default=None)
    p.add_argument("--gsd", type=float, default=None)
    p.add_argument("--output", type=Path, required=True)
    p.set_defaults(func=cmd_ingest_l2)

    p = sub.add_parser("config", help="configuration utilities")
    p.add_argument("--dump-defaults", action="store_true", dest="dump_defaults")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlumefluxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
