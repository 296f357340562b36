"""Command line entry point: ``unsurf <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _accel
from .config import MEASURE_CHOICES, RunConfig, load_config
from .errors import FormatError, StageError, UnsurfError, ValidationError
from .geometry.pial import SurfacePair, place_pial
from .io import read_csv, read_mesh, read_volume, write_csv, write_mesh, write_volume
from .phantom import make_phantom, simulate_prediction, thickness
from .pipeline import fit_white, process_subject
from .runner import run_pipeline, write_effect_sizes
from .stats import filter_curve
from .study import simulate_group_study
from .uncertainty import EnsembleSDF

log = logging.getLogger("unsurf")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


def _common(p):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--measure", choices=MEASURE_CHOICES, help="uncertainty measure(s)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (speed only)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="unsurf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write phantom SDFs, meshes and ground-truth thickness")
    _common(p)

    p = sub.add_parser("simulate", help="degrade the phantom SDFs into a predicted ensemble")
    _common(p)

    p = sub.add_parser("surf", help="extract the white surface and place the pial surface")
    _common(p)
    p.add_argument("--white-sdf", type=Path, required=True)
    p.add_argument("--pial-sdf", type=Path, required=True)

    p = sub.add_parser("uncertainty", help="uncertainty maps and node/parcel/subject summaries")
    _common(p)
    p.add_argument("--ensemble", type=Path, required=True, help="directory written by 'simulate'")

    p = sub.add_parser("thickness", help="per-vertex thickness of a white/pial pair")
    _common(p)
    p.add_argument("--white", type=Path, required=True)
    p.add_argument("--pial", type=Path, required=True)
    p.add_argument("--no-correspondence", action="store_true",
                   help="use the symmetric closest-point definition")

    p = sub.add_parser("qc", help="uncertainty-ranked filtering curve of a table")
    _common(p)
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--error-column", default="error")
    p.add_argument("--uncertainty-column", default=None,
                   help="defaults to the --measure column, else 'unsurf'")

    p = sub.add_parser("study", help="simulated case/control effect-size curves")
    _common(p)

    p = sub.add_parser("run", help="full pipeline over the spacing x orientation grid")
    _common(p)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(args.seed, args.out, args.measure)


def _out(args, cfg, default):
    out = Path(args.out) if args.out else Path(cfg.out if args.config else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_phantom(args):
    cfg = _config(args)
    out = _out(args, cfg, "phantom")
    ph = make_phantom(cfg.phantom)
    write_volume(ph.white_sdf, out / "white_sdf.vgrid")
    write_volume(ph.pial_sdf, out / "pial_sdf.vgrid")
    chans = {"thickness": ph.thickness, "parcel": ph.labels.labels.astype(np.float64)}
    write_mesh(ph.white.with_channels(**chans), out / "white.ply")
    write_mesh(ph.pial, out / "pial.ply")
    (out / "phantom.json").write_text(json.dumps(cfg.phantom.to_dict(), indent=2, sort_keys=True) + "\n")
    return out


def cmd_simulate(args):
    cfg = _config(args)
    out = _out(args, cfg, "ensemble")
    ph = make_phantom(cfg.phantom)
    deg = replace(cfg.degradation, ensemble_size=cfg.ensemble_size, seed=cfg.seed)
    meta = {"n_models": cfg.n_models, "n_passes": cfg.n_passes, "degradation": deg.to_dict(),
            "phantom": cfg.phantom.to_dict(), "samples": {}}
    from .pipeline import _mix
    for stream, (name, sdf) in enumerate((("white", ph.white_sdf), ("pial", ph.pial_sdf))):
        ens = simulate_prediction(sdf, replace(deg, seed=_mix(deg.seed, stream)), cfg.phantom.tau,
                                  cfg.n_models, cfg.n_passes)
        (out / name).mkdir(exist_ok=True)
        files = []
        for m in range(ens.size):
            rel = f"{name}/sample_{m:03d}.vgrid"
            write_volume(ens.volume(m), out / rel)
            files.append(rel)
        meta["samples"][name] = files
    (out / "ensemble.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def _load_ensemble(path: Path):
    meta_path = path / "ensemble.json"
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: invalid JSON ({exc})", "ensemble") from exc
    ens = {}
    for name in ("white", "pial"):
        vols = [read_volume(path / rel) for rel in meta["samples"][name]]
        n, z = meta.get("n_models"), meta.get("n_passes")
        if n is None or z is None or n * z != len(vols):
            n = z = None
        ens[name] = EnsembleSDF.from_volumes(vols, n, z)
    return meta, ens


def cmd_surf(args):
    cfg = _config(args)
    out = _out(args, cfg, "surf")
    d_white = read_volume(args.white_sdf)
    d_pial = read_volume(args.pial_sdf)
    white = fit_white(d_white, cfg.geometry)
    pair = place_pial(white, d_pial, cfg.geometry)
    write_mesh(pair.white, out / "white.ply")
    write_mesh(pair.pial.with_channels(displacement=pair.displacement,
                                       frozen=pair.frozen.astype(np.float64)), out / "pial.ply")
    return out


def cmd_uncertainty(args):
    cfg = _config(args)
    out = _out(args, cfg, "uncertainty")
    meta, ens = _load_ensemble(args.ensemble)
    from .phantom import PhantomSpec
    ph = make_phantom(PhantomSpec(**{k: tuple(v) if isinstance(v, list) else v
                                     for k, v in meta["phantom"].items()}))
    res = process_subject(args.ensemble.name, ph, ens["white"], ens["pial"], cfg.geometry, cfg.measures)
    from .runner import write_subject
    write_subject(res, out, cfg.write_volumes)
    rows = [[m, r.subject, r.units] for m, r in sorted(res.reports.items())]
    write_csv(out / "subject.csv", ["measure", "subject_uncertainty", "units"], rows)
    return out


def cmd_thickness(args):
    cfg = _config(args)
    out = _out(args, cfg, "thickness")
    white = read_mesh(args.white)
    pial = read_mesh(args.pial)
    corr = not args.no_correspondence
    disp = None
    if corr:
        if white.n_vertices != pial.n_vertices:
            from .errors import InputError
            raise InputError("correspondence needs equal vertex counts; pass --no-correspondence")
        disp = np.linalg.norm(pial.vertices - white.vertices, axis=1)
    t = thickness(SurfacePair(white, pial, corr, disp))
    write_csv(out / "thickness.csv", ["node", "thickness"], [[i, v] for i, v in enumerate(t)])
    return out


def cmd_qc(args):
    cfg = _config(args)
    out = _out(args, cfg, "qc")
    header, rows = read_csv(args.table)
    ucol = args.uncertainty_column or (args.measure if args.measure in ("unsurf", "variance") else "unsurf")
    for col in (args.error_column, ucol):
        if col not in header:
            raise FormatError(f"{args.table}: no column '{col}' (have {header})", col)
    ie, iu = header.index(args.error_column), header.index(ucol)
    pairs = [(r[ie], r[iu]) for r in rows if r[ie] != "" and r[iu] != ""]
    try:
        errs = [float(e) for e, _ in pairs]
        unc = [float(u) for _, u in pairs]
    except ValueError as exc:
        raise FormatError(f"{args.table}: non-numeric cell ({exc})", ucol) from exc
    curve = filter_curve(errs, unc, cfg.fractions)
    path = out / "qc.csv"
    write_csv(path, ["keep_fraction", "mean_error"], curve.rows())
    return path


def cmd_study(args):
    cfg = _config(args)
    out = _out(args, cfg, "study")
    from .pipeline import _mix
    from .runner import STUDY_STREAM
    subjects = simulate_group_study(replace(cfg.study, seed=_mix(cfg.seed, STUDY_STREAM)))
    parcels = sorted(subjects[0].parcel_thickness)
    rows = [[s.subject_id, s.group, s.age, s.sex, s.subject_uncertainty]
            + [s.parcel_thickness[p] for p in parcels] for s in subjects]
    write_csv(out / "study_subjects.csv",
              ["subject", "group", "age", "sex", "subject_uncertainty"] + [f"thickness_{p}" for p in parcels],
              rows)
    write_effect_sizes(subjects, out / "effect_size.csv", cfg.fractions)
    return out


def cmd_run(args):
    cfg = _config(args)
    out = Path(args.out) if args.out else Path(cfg.out)

    def progress(idx, axis, sp, res):
        log.info("cell %d %s %gmm: error %.4f", idx, axis, sp, res.error.subject)

    return run_pipeline(cfg, out, progress)


COMMANDS = {
    "phantom": cmd_phantom, "simulate": cmd_simulate, "surf": cmd_surf,
    "uncertainty": cmd_uncertainty, "thickness": cmd_thickness, "qc": cmd_qc,
    "study": cmd_study, "run": cmd_run,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be >= 1")
        _accel.set_threads(args.threads)
    try:
        result = COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(exc.cause, ValidationError) else EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if result is not None:
        print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
