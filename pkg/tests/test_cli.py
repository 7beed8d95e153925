import csv
from pathlib import Path

import numpy as np
import pytest
from pytest_mock import MockerFixture

from ssda_seg import build_parser, main, parse_int_list, parse_overrides, resolve_config
from ssda_seg.commands.sweep import ablation_drops, ablation_variants, grid_variants, summarize, sweep_command
from ssda_seg.commands.train import round_reports, train_run
from ssda_seg.errors import ConfigurationError, StateError, UsageError
from ssda_seg.metrics import IoUReport, parse_report
from ssda_seg.settings import RunConfig

TINY = [
    "--set", "base_width=4",
    "--set", "embed_dim=8",
    "--rounds", "0",
    "--n-steps", "2",
    "--n-drop", "1",
    "--n-target", "2",
]  # fmt: skip

SMALL_DATA = [
    "--seed", "1",
    "--set", "n_source=3",
    "--set", "pool_target=4",
    "--set", "n_validation=2",
    "--set", "size=16",
]  # fmt: skip


def _exit_code(argv: list[str]) -> int | str | None:
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("SSDA_SEED", raising=False)


@pytest.fixture
def dataset_dir(tmp_path: Path) -> Path:
    out = tmp_path / "data"
    main(["generate", "--out", str(out), *SMALL_DATA])
    return out


def test_parse_overrides() -> None:
    assert parse_overrides(["rounds=1", " tau = 0.5"]) == {"rounds": 1, "tau": 0.5}
    with pytest.raises(UsageError):
        parse_overrides(["rounds"])


def test_parse_int_list() -> None:
    assert parse_int_list("0, 8,50") == [0, 8, 50]
    with pytest.raises(UsageError):
        parse_int_list("0,a")


def test_config_precedence(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text("rounds = 3\nn_target = 4\ntau = 0.8\n")
    args = build_parser().parse_args(
        ["train", "--config", str(path), "--set", "rounds=2", "--set", "n_target=6", "--n-target", "5"]
    )
    config = resolve_config(args)
    assert config.tau == 0.8
    assert config.rounds == 2
    assert config.n_target == 5
    assert config.disable_cr is False


def test_switch_flags() -> None:
    args = build_parser().parse_args(["train", "--disable-cr", "--warm-start", "--styling", "lab"])
    config = resolve_config(args)
    assert config.disable_cr
    assert config.warm_start
    assert config.styling == "lab"
    assert not config.disable_pc


def test_train_dispatch(mocker: MockerFixture) -> None:
    train = mocker.patch("ssda_seg.train_command")
    main(["train", "--seed", "3", "--name", "demo"])
    (config,), _ = train.call_args
    assert isinstance(config, RunConfig)
    assert (config.seed, config.name) == (3, "demo")


@pytest.mark.parametrize(
    ("error", "code"),
    [(StateError("no checkpoint"), 6), (UsageError("bad"), 2), (RuntimeError("boom"), 1)],
)
def test_exit_codes(mocker: MockerFixture, error: Exception, code: int) -> None:
    mocker.patch("ssda_seg.train_command", side_effect=error)
    assert _exit_code(["train"]) == code


def test_bad_arguments_exit_with_usage_code() -> None:
    assert _exit_code(["train", "--set", "rounds"]) == 2
    assert _exit_code(["train", "--set", "unknown_key=1"]) == 2
    assert _exit_code(["eval", "a.ckpt"]) == 2
    assert _exit_code([]) == 2


def test_generate_refuses_to_overwrite(capsys: pytest.CaptureFixture[str], dataset_dir: Path) -> None:
    assert (dataset_dir / "manifest.txt").exists()
    assert "source" in capsys.readouterr().out
    assert _exit_code(["generate", "--out", str(dataset_dir)]) == 2
    main(["generate", "--out", str(dataset_dir), "--force", *SMALL_DATA])


def test_train_eval_pseudolabel(dataset_dir: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    runs = tmp_path / "runs"
    for name in ("a", "b"):
        main(["train", "--data", str(dataset_dir), "--runs-dir", str(runs), "--name", name, *TINY])
    run_dir = runs / "a"
    for artifact in ("config.txt", "train.log", "metrics.csv", "round0.ckpt", "eval_round0.txt", "eval.txt"):
        assert (run_dir / artifact).exists()
    assert "miou=" in capsys.readouterr().out
    # same config and seed, same result
    assert (runs / "a" / "eval.txt").read_bytes() == (runs / "b" / "eval.txt").read_bytes()
    assert RunConfig.from_file(run_dir / "config.txt").size == 16

    out = tmp_path / "eval.txt"
    ckpt = str(run_dir / "round0.ckpt")
    main(["eval", ckpt, ckpt, "--data", str(dataset_dir), "--out", str(out)])
    single = parse_report(out.read_text())
    assert single["miou"] == pytest.approx(parse_report((run_dir / "eval.txt").read_text())["miou"])
    assert _exit_code(["eval", ckpt, "--data", str(dataset_dir), "--role", "nowhere"]) == 2

    pl_dir = tmp_path / "pl"
    main(["pseudolabel", "--checkpoint", ckpt, "--out", str(pl_dir), "--data", str(dataset_dir), *TINY])
    assert (pl_dir / "coverage.txt").exists()
    assert len(list(pl_dir.glob("*.pgm"))) == 2


def test_grid_variants() -> None:
    assert grid_variants([]) == [("full", {})]
    variants = dict(grid_variants(["cr", "lab"]))
    assert list(variants) == ["cr-on_lab-on", "cr-on_lab-off", "cr-off_lab-on", "cr-off_lab-off"]
    assert variants["cr-off_lab-on"] == {"disable_cr": True, "styling": "lab"}
    with pytest.raises(UsageError):
        grid_variants(["bn"])


def test_summarize_uses_sample_std() -> None:
    rows = [
        {"setting": "ssda", "variant": "full", "N_t": 8, "seed": s, "miou": m}
        for s, m in enumerate([0.2, 0.4, 0.6])
    ]
    (summary,) = summarize(rows)
    assert summary["mean"] == pytest.approx(0.4)
    assert summary["std"] == pytest.approx(0.2)
    (single,) = summarize(rows[:1])
    assert single["std"] == 0.0


def test_sweep_tabulates_cells(mocker: MockerFixture, tmp_path: Path) -> None:
    def fake_run(cell: RunConfig) -> IoUReport:
        miou = cell.n_target / 10 + (cell.seed or 0) / 100
        return IoUReport(np.array([miou]), miou)

    train = mocker.patch("ssda_seg.commands.sweep.train_run", side_effect=fake_run)
    out = sweep_command(RunConfig(runs_dir=tmp_path, name="sw"), [0, 2], [0, 1], [])
    assert out == tmp_path / "sw"
    assert train.call_count == 4
    cells = [call.args[0] for call in train.call_args_list]
    assert [c.setting for c in cells] == ["uda", "uda", "ssda", "ssda"]
    assert cells[0].name == "full_uda_nt0_s0"
    assert cells[0].run_dir == tmp_path / "sw" / "full_uda_nt0_s0"

    with (out / "sweep.csv").open(newline="") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == ["setting", "N_t", "seed", "miou", "variant"]
    assert [(r["setting"], r["N_t"], r["seed"], r["miou"]) for r in rows] == [
        ("uda", "0", "0", "0.000000"),
        ("uda", "0", "1", "0.010000"),
        ("ssda", "2", "0", "0.200000"),
        ("ssda", "2", "1", "0.210000"),
    ]
    with (out / "sweep_summary.csv").open(newline="") as f:
        summary = list(csv.DictReader(f))
    assert summary[1]["mean"] == "0.205000"
    assert float(summary[1]["std"]) == pytest.approx(np.std([0.2, 0.21], ddof=1), abs=1e-6)


def test_sweep_needs_cells(tmp_path: Path) -> None:
    with pytest.raises(UsageError):
        sweep_command(RunConfig(runs_dir=tmp_path), [], [0], [])
    with pytest.raises(UsageError):
        sweep_command(RunConfig(runs_dir=tmp_path), [8], [], [])


def _tiny_run(runs_dir: Path) -> RunConfig:
    return RunConfig(
        runs_dir=runs_dir,
        name="r",
        seed=1,
        n_source=3,
        pool_target=4,
        n_validation=2,
        size=16,
        base_width=4,
        embed_dim=8,
        rounds=0,
        n_steps=3,
        n_drop=1,
        n_target=2,
    )


def test_resume_refuses_a_changed_config(tmp_path: Path) -> None:
    base = _tiny_run(tmp_path)
    train_run(base)
    run_dir = base.run_dir
    artifacts = ("config.txt", "metrics.csv", "eval.txt")
    before = {name: (run_dir / name).read_bytes() for name in artifacts}

    with pytest.raises(StateError) as exc:
        train_run(base.merged({"disable_cr": True, "lr": 0.5}))
    assert "disable_cr" in str(exc.value)
    assert "lr" in str(exc.value)
    assert {name: (run_dir / name).read_bytes() for name in artifacts} == before

    # a new log interval is not a new experiment
    train_run(base.merged({"log_every": 1}))
    assert (run_dir / "eval.txt").read_bytes() == before["eval.txt"]


def test_invalid_config_fails_before_generation(mocker: MockerFixture, tmp_path: Path) -> None:
    load = mocker.patch("ssda_seg.commands.train.load_or_generate")
    with pytest.raises(ConfigurationError):
        train_run(RunConfig(runs_dir=tmp_path, setting="uda"))
    load.assert_not_called()
    assert not (tmp_path / "run").exists()


def test_round_reports(tmp_path: Path) -> None:
    for k, miou in enumerate([0.3, 0.4]):
        (tmp_path / f"eval_round{k}.txt").write_text(f"class00={miou:.6f}\nmiou={miou:.6f}\n")
    assert round_reports(tmp_path) == ([0.3, 0.4], None)
    (tmp_path / "eval.txt").write_text("miou=0.450000\n")
    assert round_reports(tmp_path) == ([0.3, 0.4], 0.45)


def test_ablation_variants() -> None:
    variants = dict(ablation_variants([]))
    assert list(variants) == ["full", "no-cr", "no-pc", "no-cw", "no-mix"]
    assert variants["full"] == {}
    assert variants["no-pc"] == {"disable_pc": True}
    assert variants["no-cw"] == {"disable_class_weights": True}
    assert variants["no-mix"] == {"disable_batch_mix": True}
    assert dict(ablation_variants(["cr"])) == {"full": {}, "no-cr": {"disable_cr": True}}
    with pytest.raises(UsageError):
        ablation_variants(["bn"])


def test_ablation_drops() -> None:
    summary: list[dict[str, object]] = [
        {"setting": "ssda", "variant": v, "N_t": 8, "mean": m, "std": 0.0}
        for v, m in [("full", 0.5), ("no-cr", 0.3), ("no-pc", 0.45)]
    ]
    assert ablation_drops(summary, 8) == pytest.approx({"no-cr": 0.2, "no-pc": 0.05})
    with pytest.raises(UsageError):
        ablation_drops(summary, 50)


def test_sweep_ablation_switches_one_axis(mocker: MockerFixture, tmp_path: Path) -> None:
    train = mocker.patch(
        "ssda_seg.commands.sweep.train_run", return_value=IoUReport(np.array([0.5]), 0.5)
    )
    sweep_command(RunConfig(runs_dir=tmp_path, name="ab"), [8], [0], [], ablate=True)
    cells = {call.args[0].name: call.args[0] for call in train.call_args_list}
    assert list(cells) == [f"{v}_ssda_nt8_s0" for v in ("full", "no-cr", "no-pc", "no-cw", "no-mix")]
    assert cells["no-mix_ssda_nt8_s0"].disable_batch_mix
    assert not cells["no-mix_ssda_nt8_s0"].disable_cr
    assert not cells["full_ssda_nt8_s0"].disable_pc
