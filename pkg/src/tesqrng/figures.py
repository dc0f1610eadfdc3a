"""Figure-ready data tables (CSV/JSON); rendering is out of scope.

Each builder returns a list of row dicts; ``write_csv`` persists them. The
``from_run`` helpers read a pipeline output directory and fail with the
name of the missing stage when a report is absent.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import nist, theory
from .calibrate import Calibration, error_rates

__all__ = [
    "write_csv",
    "bias_curve_table",
    "parity_decay_table",
    "components_table",
    "distribution_table",
    "proportions_table",
    "tables_from_run",
]


def write_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def bias_curve_table(d_values=(1, 2, 3, 4, 5), nbar_grid=None, n_max: int | None = 100) -> list[dict]:
    """Residual bias vs nbar for mod-2^d binning, truncated and unbounded."""
    if nbar_grid is None:
        nbar_grid = np.arange(1.0, 80.5, 1.0)
    rows = []
    for nbar in nbar_grid:
        row = {"nbar": float(nbar)}
        for d in d_values:
            spec = theory.CoherentSpec(float(nbar))
            trunc = theory.modq_probabilities(spec, theory.ModQSpec.power_of_two(d, n_max))
            unbounded = theory.modq_probabilities(spec, theory.ModQSpec.power_of_two(d, None))
            row[f"bias_truncated_d{d}"] = trunc.max_bias
            row[f"bias_unbounded_d{d}"] = unbounded.max_bias
        rows.append(row)
    return rows


def parity_decay_table(nbar_grid=None, measured: list[tuple] | None = None) -> list[dict]:
    """Theory parity exp(-2 nbar) with optional (nbar, parity, se) measurements."""
    if nbar_grid is None:
        nbar_grid = [0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0]
    meas = {round(m[0], 9): m for m in (measured or [])}
    rows = []
    for nbar in nbar_grid:
        row = {"nbar": float(nbar), "parity_theory": theory.coherent_parity(float(nbar))}
        m = meas.get(round(float(nbar), 9))
        row["parity_measured"] = m[1] if m else None
        row["parity_se"] = m[2] if m else None
        rows.append(row)
    return rows


def components_table(cal: Calibration) -> list[dict]:
    """Per-photon-number fit and confusion summary (error tables analogue)."""
    errs = error_rates(cal)
    errs_1 = error_rates(cal.with_window(1.0))
    errs_05 = error_rates(cal.with_window(0.5))
    return [
        {
            "n": c.n,
            "mu": c.mu,
            "sigma": c.sigma,
            "weight": c.weight,
            "error_all": errs[c.n],
            "error_window_1sig": errs_1[c.n],
            "error_window_halfsig": errs_05[c.n],
        }
        for c in cal.components
    ]


def distribution_table(pmf, errors, nbar: float) -> list[dict]:
    """Measured pmf with one-sigma errors against the Poisson curve."""
    pmf = np.asarray(pmf)
    theory_pmf = theory.poisson_pmf_vector(nbar, len(pmf) - 1)
    return [
        {"n": i, "pmf": float(pmf[i]), "error": float(errors[i]), "poisson": float(theory_pmf[i])}
        for i in range(len(pmf))
    ]


def proportions_table(outcomes: list[nist.TestOutcome]) -> list[dict]:
    return [oc.to_dict() for oc in outcomes]


def tables_from_run(outdir: str | Path, dest: str | Path | None = None) -> dict[str, list[dict]]:
    """Rebuild every figure table available from a pipeline output directory."""
    outdir = Path(outdir)
    dest = Path(dest) if dest else outdir
    dest.mkdir(parents=True, exist_ok=True)
    tables = {}

    dist_path = outdir / "distribution.json"
    if not dist_path.exists():
        raise FileNotFoundError("missing distribution.json: run the count stage first")
    report = json.loads(dist_path.read_text())
    summary_path = outdir / "summary.json"
    nbar = None
    if summary_path.exists():
        nbar = json.loads(summary_path.read_text())["config"]["source"]["nbar"]
    if nbar is not None:
        tables["distribution"] = distribution_table(report["pmf"], report["errors"], nbar)

    for ch in ("a", "b", "c"):
        cal_path = outdir / f"calibration_{ch}.json"
        if cal_path.exists():
            tables[f"components_{ch}"] = components_table(Calibration.load(cal_path))

    rand_path = outdir / "randomness.json"
    if rand_path.exists():
        rand = json.loads(rand_path.read_text())
        tables["proportions"] = [
            {k: v for k, v in oc.items() if k != "params"} for oc in rand["outcomes"]
        ]

    tables["bias_curves"] = bias_curve_table()
    for name, rows in tables.items():
        write_csv(dest / f"fig_{name}.csv", rows)
    return tables
