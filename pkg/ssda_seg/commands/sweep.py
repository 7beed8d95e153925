import csv
import itertools
import logging
from pathlib import Path

import numpy as np

from ssda_seg.errors import UsageError
from ssda_seg.settings import RunConfig

from .train import train_run

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("setting", "N_t", "seed", "miou", "variant")
SUMMARY_COLUMNS = ("setting", "variant", "N_t", "mean", "std")
GRID_AXES = {
    "cr": ("disable_cr", {"on": False, "off": True}),
    "pc": ("disable_pc", {"on": False, "off": True}),
    "cw": ("disable_class_weights", {"on": False, "off": True}),
    "mix": ("disable_batch_mix", {"on": False, "off": True}),
    "lab": ("styling", {"on": "lab", "off": "none"}),
}
ABLATION_AXES = ("cr", "pc", "cw", "mix")


def _check_axes(axes: list[str]) -> None:
    for axis in axes:
        if axis not in GRID_AXES:
            msg = f"unknown sweep axis {axis!r}, expected one of {', '.join(GRID_AXES)}"
            raise UsageError(msg)


def grid_variants(grid: list[str]) -> list[tuple[str, dict[str, object]]]:
    """Cartesian product of the requested on/off axes, e.g. ``cr-on_lab-off``."""
    _check_axes(grid)
    if not grid:
        return [("full", {})]
    variants = []
    for states in itertools.product(("on", "off"), repeat=len(grid)):
        name = "_".join(f"{axis}-{state}" for axis, state in zip(grid, states, strict=True))
        overrides = {
            GRID_AXES[axis][0]: GRID_AXES[axis][1][state]
            for axis, state in zip(grid, states, strict=True)
        }
        variants.append((name, overrides))
    return variants


def ablation_variants(axes: list[str]) -> list[tuple[str, dict[str, object]]]:
    """The full model plus one variant per axis with only that axis switched off."""
    _check_axes(axes)
    variants: list[tuple[str, dict[str, object]]] = [("full", {})]
    for axis in axes or ABLATION_AXES:
        key, states = GRID_AXES[axis]
        variants.append((f"no-{axis}", {key: states["off"]}))
    return variants


def summarize(rows: list[dict[str, object]]) -> list[dict[str, object]]:
    cells: dict[tuple[str, str, int], list[float]] = {}
    for row in rows:
        key = (str(row["setting"]), str(row["variant"]), int(row["N_t"]))  # type: ignore[call-overload]
        cells.setdefault(key, []).append(float(row["miou"]))  # type: ignore[arg-type]
    summary = []
    for (setting, variant, n_t), values in cells.items():
        arr = np.asarray(values)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        summary.append(
            {"setting": setting, "variant": variant, "N_t": n_t, "mean": float(arr.mean()), "std": std}
        )
    return summary


def ablation_drops(summary: list[dict[str, object]], n_t: int) -> dict[str, float]:
    """Mean mIoU lost by each ablation variant relative to ``full`` at one label budget."""
    means = {str(row["variant"]): float(row["mean"]) for row in summary if row["N_t"] == n_t}  # type: ignore[arg-type]
    if "full" not in means:
        msg = f"no full-model cells at N_t={n_t}"
        raise UsageError(msg)
    return {variant: means["full"] - mean for variant, mean in means.items() if variant != "full"}


def _write_csv(path: Path, columns: tuple[str, ...], rows: list[dict[str, object]]) -> None:
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: f"{v:.6f}" if isinstance(v, float) else v for k, v in row.items()}
            )


def sweep_command(
    config: RunConfig,
    labels: list[int],
    seeds: list[int],
    grid: list[str],
    ablate: bool = False,
) -> Path:
    """Train every (variant, N_t, seed) cell and tabulate validation mIoU.

    With ``ablate`` the variants switch off one axis at a time instead of
    crossing all of them.
    """
    if not labels:
        msg = "sweep needs at least one N_t value"
        raise UsageError(msg)
    if not seeds:
        msg = "sweep needs at least one seed"
        raise UsageError(msg)
    out_dir = config.run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict[str, object]] = []
    variants = ablation_variants(grid) if ablate else grid_variants(grid)
    for variant, overrides in variants:
        for n_t in labels:
            setting = "uda" if n_t == 0 and config.setting == "ssda" else config.setting
            for seed in seeds:
                cell = config.merged(
                    {
                        **overrides,
                        "setting": setting,
                        "n_target": n_t,
                        "seed": seed,
                        "runs_dir": out_dir,
                        "name": f"{variant}_{setting}_nt{n_t}_s{seed}",
                    }
                )
                log.info(f"sweep cell {cell.name}")
                report = train_run(cell)
                miou = report.miou if report is not None else float("nan")
                rows.append(
                    {"setting": setting, "N_t": n_t, "seed": seed, "miou": miou, "variant": variant}
                )

    _write_csv(out_dir / "sweep.csv", SWEEP_COLUMNS, rows)
    summary = summarize(rows)
    _write_csv(out_dir / "sweep_summary.csv", SUMMARY_COLUMNS, summary)
    for row in summary:
        print(
            f"{row['setting']:<5} {row['variant']:<16} N_t={row['N_t']:<4} "
            f"miou={row['mean']:.4f} +- {row['std']:.4f}"
        )
    if ablate:
        for n_t in labels:
            for variant, drop in ablation_drops(summary, n_t).items():
                print(f"N_t={n_t:<4} {variant:<16} drop={drop:+.4f}")
    return out_dir
