"""Render sweep results as figures, written next to the CSV output.

Each sweep produces up to five PNG files: the reported bounds against the
clairvoyant floor, the simulated MSE, per-sensor rates, per-sensor powers,
and the effective bit budget of the decoupled algorithms.  Rendering is
headless (Agg backend) and purely a view of the sweep rows; the CSV stays
the canonical output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

AXIS_LABELS = {"p_tot_db": "total power budget (dB)",
               "b_tot": "total bit budget (bits)"}
MARKERS = ("o", "s", "^", "v", "d")


def _by_algorithm(rows):
    grouped = {}
    for row in rows:
        if row.get("status") != "ok":
            continue
        grouped.setdefault(row["algorithm"], []).append(row)
    for algo_rows in grouped.values():
        algo_rows.sort(key=lambda r: r["axis"])
    return grouped


def _reported_bound(algorithm: str, row) -> float:
    return row["d_b"] if algorithm.startswith("b_") else row["d_a"]


def _new_axes(axis_name: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.set_xlabel(AXIS_LABELS.get(axis_name, axis_name))
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.4)
    return fig, ax


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sweep_figures(rows, K: int, axis_name: str, out_dir,
                         stem: str = "sweep") -> list[Path]:
    """Write figures for one sweep; returns the created file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grouped = _by_algorithm(rows)
    if not grouped:
        return []
    written = []
    d0 = next(iter(grouped.values()))[0]["d0"]

    fig, ax = _new_axes(axis_name, "distortion bound")
    for marker, (algo, algo_rows) in zip(MARKERS, sorted(grouped.items())):
        x = [r["axis"] for r in algo_rows]
        y = [_reported_bound(algo, r) for r in algo_rows]
        ax.plot(x, y, marker=marker, label=algo)
    ax.axhline(d0, color="k", linestyle=":", label="clairvoyant floor")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    written.append(_save(fig, out_dir / f"{stem}_bounds.png"))

    fig, ax = _new_axes(axis_name, "simulated MSE")
    for marker, (algo, algo_rows) in zip(MARKERS, sorted(grouped.items())):
        x = [r["axis"] for r in algo_rows]
        y = [r["mse"] for r in algo_rows]
        err = [r["mse_half_width"] for r in algo_rows]
        ax.errorbar(x, y, yerr=err, marker=marker, capsize=2, label=algo)
    ax.axhline(d0, color="k", linestyle=":", label="clairvoyant floor")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    written.append(_save(fig, out_dir / f"{stem}_mse.png"))

    n_alg = len(grouped)
    fig, axes = plt.subplots(n_alg, 1, figsize=(6.4, 2.2 * n_alg),
                             sharex=True, squeeze=False)
    for ax, (algo, algo_rows) in zip(axes[:, 0], sorted(grouped.items())):
        x = [r["axis"] for r in algo_rows]
        for k in range(K):
            ax.plot(x, [r[f"L_{k + 1}"] for r in algo_rows],
                    marker=".", label=f"sensor {k + 1}")
        ax.set_ylabel(f"{algo}\nbits")
        ax.grid(True, alpha=0.4)
    axes[0, 0].legend(fontsize=7)
    axes[-1, 0].set_xlabel(AXIS_LABELS.get(axis_name, axis_name))
    written.append(_save(fig, out_dir / f"{stem}_rates.png"))

    fig, axes = plt.subplots(n_alg, 1, figsize=(6.4, 2.2 * n_alg),
                             sharex=True, squeeze=False)
    for ax, (algo, algo_rows) in zip(axes[:, 0], sorted(grouped.items())):
        x = [r["axis"] for r in algo_rows]
        for k in range(K):
            ax.plot(x, [r[f"P_db_{k + 1}"] for r in algo_rows],
                    marker=".", label=f"sensor {k + 1}")
        ax.set_ylabel(f"{algo}\npower (dB)")
        ax.grid(True, alpha=0.4)
    axes[0, 0].legend(fontsize=7)
    axes[-1, 0].set_xlabel(AXIS_LABELS.get(axis_name, axis_name))
    written.append(_save(fig, out_dir / f"{stem}_powers.png"))

    decoupled = {algo: algo_rows for algo, algo_rows in grouped.items()
                 if any(r.get("b_opt") is not None for r in algo_rows)}
    if decoupled:
        fig, ax = _new_axes(axis_name, "effective bit budget")
        for marker, (algo, algo_rows) in zip(MARKERS, sorted(decoupled.items())):
            pts = [(r["axis"], r["b_opt"]) for r in algo_rows
                   if r.get("b_opt") is not None]
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post",
                    marker=marker, label=algo)
        ax.legend(fontsize=8)
        written.append(_save(fig, out_dir / f"{stem}_bopt.png"))

    return written
