"""Trial CSV logs and the per-scenario JSON summary."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .runner import TrialRecord


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trial_filename(rec: TrialRecord) -> str:
    suffix = f"_{rec.variant}" if rec.variant else ""
    return f"trial_{rec.index:04d}{suffix}.csv"


def write_trial_csv(rec: TrialRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(rec.columns())
        for row in rec.rows:
            writer.writerow([_fmt(v) for v in row])


def read_trial_csv(path) -> tuple:
    """Header and rows of a trial log; numeric cells parsed, empty cells None."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[None if c == "" else float(c) for c in row] for row in reader]
    return header, rows


def summarize(records, scenario: str = "") -> dict:
    """Aggregate final errors, convergence and the mean VFE trajectory."""
    records = list(records)
    if not records:
        raise ValueError("no trial records to summarize")
    out = _aggregate(records, scenario)
    variants = sorted({r.variant for r in records if r.variant})
    if variants:
        out["variants"] = {v: _aggregate([r for r in records if r.variant == v], scenario) for v in variants}
    threshold = [r.summary["threshold"] for r in records if "threshold" in r.summary]
    if threshold:
        out["threshold"] = threshold[0]
        out["accuracy"] = out["converged"] / out["trials"]
    return out


def _aggregate(records, scenario):
    s = [r.summary for r in records]
    joint = np.array([x["final_joint_err_rad"] for x in s])
    ee = np.array([x["final_ee_err_m"] for x in s])
    converged = int(sum(bool(x["converged"]) for x in s))
    vfe_col = records[0].columns().index("vfe")
    length = min(len(r.rows) for r in records)
    traj = np.mean([[row[vfe_col] for row in r.rows[:length]] for r in records], axis=0)
    return {
        "scenario": scenario,
        "trials": len(records),
        "converged": converged,
        "convergence_rate": converged / len(records),
        "mean_final_joint_err_rad": float(joint.mean()),
        "std_final_joint_err_rad": float(joint.std()),
        "mean_final_ee_err_m": float(ee.mean()),
        "mean_vfe_final": float(np.mean([x["vfe_final"] for x in s])),
        "mean_tracking_err_rad": float(np.mean([x["mean_tracking_err_rad"] for x in s])),
        "mean_vfe_trajectory": traj.tolist(),
    }


def write_run(records, out_dir, scenario: str) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec in records:
        write_trial_csv(rec, out / trial_filename(rec))
    with open(out / "trials.json", "w") as fh:
        json.dump(
            [{"index": r.index, "variant": r.variant, **r.summary} for r in records],
            fh,
            indent=1,
        )
    summary = summarize(records, scenario)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary


def summarize_dir(out_dir) -> dict:
    """Rebuild the summary from the per-trial CSVs and ``trials.json`` in a run directory."""
    out = Path(out_dir)
    meta_path = out / "trials.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path} not found; is this a run directory?")
    meta = json.loads(meta_path.read_text())
    if not meta:
        raise ValueError("run directory holds no trials")
    records = []
    for m in meta:
        rec = TrialRecord(index=m["index"], n_joints=0, variant=m["variant"])
        header, rows = read_trial_csv(out / trial_filename(rec))
        rec.n_joints = sum(1 for h in header if h.startswith("z0_est_"))
        rec.rows = rows
        rec.summary = {k: v for k, v in m.items() if k not in ("index", "variant")}
        records.append(rec)
    scenario = ""
    old = out / "summary.json"
    if old.exists():
        scenario = json.loads(old.read_text()).get("scenario", "")
    return summarize(records, scenario)
