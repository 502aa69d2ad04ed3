"""Deterministic result files: CSV, summary, manifest and rate-fit figures.

Every run writes results.csv (header row, repr-formatted floats so reruns are
byte-identical), summary.txt, manifest.txt (config hash, seed, versions) and
one PNG per log-log rate fit.
"""

from __future__ import annotations

import csv
import io
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import ExperimentConfig, config_text, config_hash  # noqa: E402
from .experiments import ExperimentResult  # noqa: E402

__all__ = ["write_outputs"]


def _fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _write_csv(path, rows, fieldnames):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        writer.writerow([_fmt(row[name]) for name in fieldnames])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _write_manifest(path, cfg: ExperimentConfig):
    import numpy
    import scipy
    lines = [
        f"experiment={cfg.experiment}",
        f"master_seed={cfg.master_seed}",
        f"config_hash={config_hash(cfg)}",
        "versions=mixedfbm-0.1.0"
        f",numpy-{numpy.__version__},scipy-{scipy.__version__}",
        "",
        "# full configuration",
        config_text(cfg),
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines))


def _save_plot(path, spec):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    x = np.array([p[0] for p in spec["points"]])
    y = np.array([p[1] for p in spec["points"]])
    ax.loglog(x, y, "o", color="#1f77b4", label="measured")
    fit = spec["fit"]
    grid = np.linspace(np.log(x.min()), np.log(x.max()), 50)
    ax.loglog(np.exp(grid), np.exp(fit.predict(grid)), "-", color="#d62728",
              label=f"slope {fit.slope:.3f}")
    ax.set_xlabel(spec["xlabel"])
    ax.set_ylabel(spec["ylabel"])
    ax.set_title(spec["title"], fontsize=10)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": "mixedfbm"})
    plt.close(fig)


def write_outputs(cfg: ExperimentConfig, result: ExperimentResult, out_dir=None) -> dict:
    """Write all artifacts of one experiment run; returns the file map."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    files = {}

    csv_path = os.path.join(out_dir, "results.csv")
    _write_csv(csv_path, result.rows, result.fieldnames)
    files["results"] = csv_path

    verdict = {True: "PASS", False: "FAIL", None: "INFO"}[result.passed]
    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"experiment: {result.name}\nstatus: {verdict}\n\n{result.summary}\n")
    files["summary"] = summary_path

    manifest_path = os.path.join(out_dir, "manifest.txt")
    _write_manifest(manifest_path, cfg)
    files["manifest"] = manifest_path

    for spec in result.plots:
        plot_path = os.path.join(out_dir, f"{spec['name']}.png")
        _save_plot(plot_path, spec)
        files[spec["name"]] = plot_path
    return files
