import csv
from pathlib import Path

import numpy as np
import pytest

from ssda_seg.commands.sweep import ablation_drops, sweep_command
from ssda_seg.commands.train import round_reports, train_run
from ssda_seg.settings import RunConfig

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2]


@pytest.fixture
def base(tmp_path: Path) -> RunConfig:
    return RunConfig(
        runs_dir=tmp_path,
        n_target=8,
        n_source=100,
        pool_target=100,
        n_validation=50,
        rounds=0,
        n_steps=400,
        n_drop=200,
        pc_warmup_steps=100,
        log_every=100,
    )


def test_consistency_ablation_costs_most(base: RunConfig) -> None:
    out = sweep_command(base.merged({"name": "ablation"}), [8], SEEDS, [], ablate=True)
    with (out / "sweep_summary.csv").open(newline="") as f:
        summary = [{**row, "N_t": int(row["N_t"]), "mean": float(row["mean"])} for row in csv.DictReader(f)]
    drops = ablation_drops(summary, 8)
    assert set(drops) == {"no-cr", "no-pc", "no-cw", "no-mix"}
    assert drops["no-cr"] > 0
    assert drops["no-cr"] == max(drops.values())


def test_self_training_rounds_do_not_regress(base: RunConfig) -> None:
    per_round, ensembles = [], []
    for seed in SEEDS:
        config = base.merged({"name": f"st{seed}", "seed": seed, "rounds": 2})
        train_run(config)
        rounds, ensemble = round_reports(config.run_dir)
        assert len(rounds) == 3
        assert ensemble is not None
        per_round.append(rounds)
        ensembles.append(ensemble)
    m0, m1, m2 = np.mean(per_round, axis=0)
    assert m1 >= m0 - 0.005
    assert np.mean(ensembles) >= max(m1, m2) - 0.01
