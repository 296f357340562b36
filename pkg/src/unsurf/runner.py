"""Full-pipeline runs over the slice-spacing x orientation grid."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import StageError, UnsurfError
from .io import write_csv, write_manifest, write_mesh, write_volume
from .phantom import Phantom, make_phantom
from .pipeline import SubjectResult, _mix, simulate_subject
from .stats import correlation_report, effect_size_curve, filter_curve, nested_filter_curve
from .study import simulate_group_study

log = logging.getLogger(__name__)

STUDY_STREAM = 1_000_003


def cell_name(axis, spacing):
    return f"{axis}_{spacing:g}mm"


def cell_seed(seed, index):
    return _mix(seed, index)


def write_subject(res: SubjectResult, cell_dir: Path, write_volumes=True):
    cell_dir.mkdir(parents=True, exist_ok=True)
    chans = {"thickness": res.thickness, "truth": res.truth, "error": res.error.node,
             "parcel": res.labels.labels.astype(np.float64)}
    for m, rep in res.reports.items():
        chans[m] = rep.node
    write_mesh(res.pair.white.with_channels(**chans), cell_dir / "white.ply")
    write_mesh(res.pair.pial.with_channels(**chans), cell_dir / "pial.ply")
    if write_volumes:
        for s, vol in res.d_hat.items():
            write_volume(vol, cell_dir / f"d_hat_{s}.vgrid")
        for s, vol in res.d_tilde.items():
            write_volume(vol, cell_dir / f"d_tilde_{s}.vgrid")
        for name, vol in res.maps.items():
            write_volume(vol, cell_dir / f"{name}.vgrid")

    measures = sorted(res.reports)
    rows = []
    for i in range(res.pair.white.n_vertices):
        rows.append([i, int(res.labels.labels[i]), res.thickness[i], res.truth[i], res.error.node[i]]
                    + [res.reports[m].node[i] for m in measures])
    write_csv(cell_dir / "nodes.csv", ["node", "parcel", "thickness", "truth", "error"] + measures, rows)
    rows = []
    for p in res.labels.ids:
        rows.append([p, res.labels.names[p], res.error.parcel[p]]
                    + [res.reports[m].parcel[p] for m in measures])
    write_csv(cell_dir / "parcels.csv", ["parcel", "name", "error"] + measures, rows)


def _curve_rows(curve):
    return [[f, v] for f, v in curve.rows()]


def run_cells(cfg: RunConfig, phantom: Phantom = None, progress=None):
    """Process every grid cell; returns ``[(cell, result)]`` in cell order."""
    phantom = phantom or make_phantom(cfg.phantom)
    out = []
    for idx, axis, sp in cfg.cells():
        deg = cfg.degradation_for(axis, sp, cell_seed(cfg.seed, idx))
        try:
            res, _, _ = simulate_subject(cell_name(axis, sp), phantom, deg, cfg.geometry, cfg.measures,
                                         cfg.n_models, cfg.n_passes)
        except UnsurfError as exc:
            stage = getattr(exc, "stage", None) or "simulate_prediction"
            raise StageError(stage, f"cell {idx} ({cell_name(axis, sp)})", exc) from exc
        if progress:
            progress(idx, axis, sp, res)
        out.append(((idx, axis, sp), res))
    return phantom, out


def run_pipeline(cfg: RunConfig, out_dir=None, progress=None):
    """Run, write every artifact plus ``manifest.json``; returns the output directory."""
    out_dir = Path(out_dir or cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    phantom, results = run_cells(cfg, progress=progress)
    measures = list(cfg.measures)

    subj_rows, corr_input = [], {m: [] for m in measures}
    parcel_items = {m: ([], []) for m in measures}
    for (idx, axis, sp), res in results:
        write_subject(res, out_dir / "cells" / cell_name(axis, sp), cfg.write_volumes)
        subj_rows.append([idx, axis, sp, res.error.subject]
                         + [res.reports[m].subject for m in measures]
                         + [res.l2["white"], res.l2["pial"], int(res.pair.frozen.sum())])
        for m in measures:
            rep = res.reports[m]
            corr_input[m].append({
                "subject_uncertainty": rep.subject, "subject_error": res.error.subject,
                "parcel_uncertainty": rep.parcel, "parcel_error": res.error.parcel,
                "slice_spacing": sp,
            })
            for p in res.labels.ids:
                if rep.parcel[p] is not None:
                    parcel_items[m][0].append(res.error.parcel[p])
                    parcel_items[m][1].append(rep.parcel[p])
    write_csv(out_dir / "subjects.csv",
              ["cell", "slice_axis", "slice_spacing", "error"] + measures
              + ["l2_white", "l2_pial", "frozen_vertices"], subj_rows)

    rows = []
    for m in measures:
        for c in correlation_report(corr_input[m]):
            rows.append([m, c.level, c.key, c.n, c.scc, c.pcc])
    write_csv(out_dir / "correlations.csv", ["measure", "level", "key", "n", "scc", "pcc"], rows)

    for m in measures:
        errs, unc = parcel_items[m]
        curve = filter_curve(errs, unc, cfg.fractions, level="parcel")
        write_csv(out_dir / f"qc_parcel_{m}.csv", ["keep_fraction", "mean_error"], _curve_rows(curve))
        node_err, node_unc, node_parcel, parcel_unc = [], [], [], {}
        for (idx, _, _), res in results:
            node_err.append(res.error.node)
            node_unc.append(res.reports[m].node)
            node_parcel.append(idx * 1000 + res.labels.labels)
            for p, v in res.reports[m].parcel.items():
                parcel_unc[idx * 1000 + p] = v
        nested = nested_filter_curve(np.concatenate(node_err), np.concatenate(node_unc),
                                     np.concatenate(node_parcel), parcel_unc,
                                     cfg.top_fraction, cfg.fractions)
        write_csv(out_dir / f"qc_nested_node_{m}.csv", ["keep_fraction", "mean_error"], _curve_rows(nested))

    from dataclasses import replace
    study_spec = replace(cfg.study, seed=_mix(cfg.seed, STUDY_STREAM))
    write_effect_sizes(simulate_group_study(study_spec), out_dir / "effect_size.csv", cfg.fractions)

    write_manifest(out_dir, cfg.to_dict(include_out=False), cfg.seed)
    return out_dir


def write_effect_sizes(subjects, path, fractions):
    parcels = sorted(subjects[0].parcel_thickness)
    rows = []
    for p in parcels:
        curve = effect_size_curve(subjects, p, fractions)
        for (f, v), k in zip(curve.rows(), curve.counts):
            rows.append([p, f, k, v])
    return write_csv(path, ["parcel", "keep_fraction", "n_kept", "abs_cohens_d"], rows)
