"""Report emission: CSV tables, JSON summaries, ladder files, figures.

A ladder is any group of ok rows sharing (kind, label) whose grid
spacings differ; every positive scalar quantity on such a group gets a
least-squares log-log fit (slope, R^2), a two-column plot-ready CSV of
(log h, log value), and a rendered figure.  Failed rows stay in the
flat table with their error tags but never enter a fit.

List-valued quantities paired with an index list (key and key_k) are
treated as self-contained ladders, e.g. a gradient sup-norm climb over
a dyadic time ladder.
"""

import csv
import json
import math
import os

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .ledger import RunLedger

_SKIP_FIT_KEYS = {"h", "dt", "seed", "status"}


def flatten_row(row: dict) -> dict:
    out = {}
    for key, val in row.items():
        if isinstance(val, dict):
            for sub, sval in flatten_row(val).items():
                out[f"{key}.{sub}"] = sval
        elif isinstance(val, (list, tuple)):
            out[key] = json.dumps(val)
        else:
            out[key] = val
    return out


def loglog_fit(hs, vals):
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(vals, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def _numeric(val) -> bool:
    return isinstance(val, (int, float)) and not isinstance(val, bool) and math.isfinite(val)


def _group_fits(rows: list) -> list:
    groups = {}
    for row in rows:
        if row.get("status") != "ok" or not _numeric(row.get("h")):
            continue
        groups.setdefault((row.get("kind"), row.get("label")), []).append(row)
    fits = []
    for (kind, label), members in sorted(groups.items()):
        hs = [row["h"] for row in members]
        if len(set(hs)) < 2:
            continue
        keys = set.intersection(*(set(row) for row in members))
        for key in sorted(keys):
            if key in _SKIP_FIT_KEYS or key.startswith(("params", "gate")):
                continue
            vals = [row[key] for row in members]
            if not all(_numeric(v) and v > 0.0 for v in vals):
                continue
            slope, r2 = loglog_fit(hs, vals)
            fits.append({
                "kind": kind,
                "label": label,
                "quantity": key,
                "n_points": len(members),
                "slope": slope,
                "r_squared": r2,
                "h": hs,
                "values": vals,
            })
    return fits


def _list_ladders(rows: list) -> list:
    out = []
    for row in rows:
        if row.get("status") != "ok":
            continue
        for key, val in row.items():
            if not key.endswith("_k") or not isinstance(val, list):
                continue
            base = key[:-2]
            ys = row.get(base)
            if isinstance(ys, list) and len(ys) == len(val) and ys:
                out.append({
                    "label": row.get("label"),
                    "quantity": base,
                    "x": val,
                    "values": ys,
                    "run_id": row.get("run_id"),
                })
    return out


def _safe_name(*parts) -> str:
    return "_".join(str(p).replace("/", "-").replace(" ", "-") for p in parts if p)


def _write_ladder_csv(path, xs, ys, headers):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for x, y in zip(xs, ys):
            writer.writerow([f"{x:.12g}", f"{y:.12g}"])


def _render_ladder(path, xs, ys, title, xlabel, ylabel, loglog: bool):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    if loglog:
        ax.loglog(xs, ys, "o-")
    else:
        ax.plot(xs, ys, "o-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(ledger: RunLedger, out_dir, formats=("csv", "json"),
                make_plots: bool = True) -> dict:
    """Write report files for every row in the ledger; returns the paths."""
    rows = ledger.require_rows()
    os.makedirs(out_dir, exist_ok=True)
    written = {"ladders": [], "figures": []}

    flat = [flatten_row(row) for row in rows]
    if "csv" in formats:
        keys = sorted(set().union(*(set(fr) for fr in flat)))
        table = os.path.join(out_dir, "report.csv")
        with open(table, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys, restval="")
            writer.writeheader()
            for fr in flat:
                writer.writerow(fr)
        written["csv"] = table

    fits = _group_fits(rows)
    ladders = _list_ladders(rows)

    if "json" in formats:
        n_ok = sum(1 for row in rows if row.get("status") == "ok")
        summary = {
            "n_rows": len(rows),
            "n_ok": n_ok,
            "n_failed": len(rows) - n_ok,
            "kinds": sorted({row.get("kind") for row in rows}),
            "errors": sorted({
                row.get("error") for row in rows if row.get("status") == "failed"
            }),
            "fits": [
                {k: v for k, v in fit.items() if k not in ("h", "values")}
                for fit in fits
            ],
        }
        spath = os.path.join(out_dir, "summary.json")
        with open(spath, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        written["json"] = spath

    for fit in fits:
        stem = _safe_name("ladder", fit["label"], fit["quantity"])
        order = np.argsort(fit["h"])
        hs = [fit["h"][i] for i in order]
        vs = [fit["values"][i] for i in order]
        cpath = os.path.join(out_dir, stem + ".csv")
        _write_ladder_csv(
            cpath, np.log(hs), np.log(vs), ["log_h", "log_" + fit["quantity"]]
        )
        written["ladders"].append(cpath)
        if make_plots:
            fpath = os.path.join(out_dir, stem + ".png")
            _render_ladder(
                fpath, hs, vs,
                f"{fit['label']}: {fit['quantity']} "
                f"(slope {fit['slope']:.3f}, R^2 {fit['r_squared']:.3f})",
                "h", fit["quantity"], loglog=True,
            )
            written["figures"].append(fpath)

    for lad in ladders:
        stem = _safe_name("ladder", lad["label"], lad["quantity"], lad["run_id"])
        cpath = os.path.join(out_dir, stem + ".csv")
        _write_ladder_csv(cpath, lad["x"], lad["values"], ["k", lad["quantity"]])
        written["ladders"].append(cpath)
        if make_plots:
            fpath = os.path.join(out_dir, stem + ".png")
            _render_ladder(
                fpath, lad["x"], lad["values"],
                f"{lad['label']}: {lad['quantity']}",
                "k", lad["quantity"], loglog=False,
            )
            written["figures"].append(fpath)

    return written
