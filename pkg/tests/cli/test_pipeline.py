# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""End-to-end tests of the stage commands: generate, corrupt, train-proxies, score, select, train-target."""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest
from typer.testing import CliRunner

from dris.cli.main import app
from dris.core.data import load_dataset
from dris.core.sampler import read_plan
from dris.core.scores import read_scores


runner = CliRunner()


def _invoke(config_file: Path, *args: str) -> dict:
    result = runner.invoke(app, ["--config", str(config_file), "--json", *args])
    assert result.exit_code == 0, result.output
    return json.loads(result.stdout)


@pytest.fixture
def workdir(tmp_path: Path, config_file: Path) -> Path:
    """Generated, corrupted and proxy-trained tiny dataset."""
    _invoke(config_file, "generate", "-o", str(tmp_path / "clean.npz"))
    _invoke(config_file, "--seed", "5", "generate", "-o", str(tmp_path / "test.npz"), "--n", "200")
    _invoke(
        config_file,
        "corrupt",
        "-d",
        str(tmp_path / "clean.npz"),
        "-o",
        str(tmp_path / "noisy.npz"),
        "--rate",
        "0.1",
        "--mask-out",
        str(tmp_path / "mask.csv"),
    )
    _invoke(config_file, "train-proxies", "-d", str(tmp_path / "noisy.npz"), "-o", str(tmp_path / "proxies"))
    return tmp_path


class TestDataCommands:
    """Tests for generate and corrupt."""

    def test_generate(self, config_file: Path, tmp_path: Path) -> None:
        """The configured mixture is written with its rare fraction."""
        summary = _invoke(config_file, "generate", "-o", str(tmp_path / "d.npz"))
        assert (summary["n"], summary["d"], summary["rare"]) == (120, 4, 12)
        assert load_dataset(tmp_path / "d.npz").n == 120

    def test_generate_overrides(self, config_file: Path, tmp_path: Path) -> None:
        """Command-line sizes replace the config's."""
        summary = _invoke(config_file, "generate", "-o", str(tmp_path / "d.npz"), "--n", "50", "--d", "2")
        assert (summary["n"], summary["d"]) == (50, 2)

    def test_corrupt(self, workdir: Path) -> None:
        """Uniform noise flips floor(rate * N) labels and exports the mask."""
        noisy = load_dataset(workdir / "noisy.npz")
        assert int(noisy.corrupt_mask.sum()) == 12
        assert int((noisy.labels != noisy.clean_labels).sum()) == 12
        assert (workdir / "mask.csv").exists()

    def test_corrupt_same_seed_same_mask(self, config_file: Path, workdir: Path) -> None:
        """The mask hash is a function of the seed."""
        args = ("corrupt", "-d", str(workdir / "clean.npz"), "--rate", "0.1")
        a = _invoke(config_file, *args, "-o", str(workdir / "a.npz"))
        b = _invoke(config_file, *args, "-o", str(workdir / "b.npz"))
        c = _invoke(config_file, "--seed", "3", *args, "-o", str(workdir / "c.npz"))
        assert a["mask_hash"] == b["mask_hash"]
        assert a["mask_hash"] != c["mask_hash"]

    def test_targeted(self, config_file: Path, workdir: Path) -> None:
        """Targeted noise trains its own attacker when none is given."""
        summary = _invoke(
            config_file,
            "corrupt",
            "-d",
            str(workdir / "clean.npz"),
            "-o",
            str(workdir / "targeted.npz"),
            "--kind",
            "targeted",
            "--rate",
            "0.2",
        )
        assert summary["flipped"] == 24

    def test_bad_rate(self, config_file: Path, workdir: Path) -> None:
        """A rate outside [0, 1) is a usage error."""
        result = runner.invoke(
            app,
            ["--config", str(config_file), "corrupt", "-d", str(workdir / "clean.npz"), "-o", "x.npz", "--rate", "1.5"],
        )
        assert result.exit_code == 2

    def test_missing_dataset(self, config_file: Path, tmp_path: Path) -> None:
        """Unreadable input files are ingestion errors."""
        result = runner.invoke(
            app, ["--config", str(config_file), "corrupt", "-d", str(tmp_path / "none.npz"), "-o", "x.npz", "--rate", "0.1"]
        )
        assert result.exit_code == 2


class TestProxyAndScore:
    """Tests for train-proxies and score."""

    def test_proxy_directory(self, workdir: Path) -> None:
        """Checkpoints, trajectories and the rank matrix are written."""
        proxies = workdir / "proxies"
        assert sorted(p.name for p in proxies.glob("proxy_*.json")) == ["proxy_0.json", "proxy_1.json", "proxy_2.json"]
        assert (proxies / "trajectories.npz").exists()
        ranks = pd.read_csv(proxies / "ranks.csv")
        assert len(ranks) == 120

    def test_score_rank_variance(self, config_file: Path, workdir: Path) -> None:
        """DR-IS scores stay within [0, 0.25] and the histogram is written."""
        summary = _invoke(
            config_file,
            "score",
            "-p",
            str(workdir / "proxies"),
            "-d",
            str(workdir / "noisy.npz"),
            "-o",
            str(workdir / "scores.csv"),
            "--histogram",
            str(workdir / "hist.csv"),
        )
        assert summary["kind"] == "rank-variance"
        assert 0.0 <= summary["min"] <= summary["max"] <= 0.25
        assert len(read_scores(workdir / "scores.csv")) == 120
        assert len(pd.read_csv(workdir / "hist.csv")) == 10

    @pytest.mark.parametrize("method", ["el2n", "aum", "forgetting", "grad-norm-is", "hybrid", "uniform-mix"])
    def test_score_methods(self, config_file: Path, workdir: Path, method: str) -> None:
        """Every scoring method reads the same ensemble."""
        out = workdir / f"{method}.csv"
        args = ("score", "-p", str(workdir / "proxies"), "-d", str(workdir / "noisy.npz"), "-o", str(out))
        summary = _invoke(config_file, *args, "-m", method)
        assert summary["n"] == 120

    def test_score_rejects_unscored_method(self, config_file: Path, workdir: Path) -> None:
        """random has no scores."""
        result = runner.invoke(
            app,
            [
                "--config",
                str(config_file),
                "score",
                "-p",
                str(workdir / "proxies"),
                "-d",
                str(workdir / "noisy.npz"),
                "-o",
                str(workdir / "s.csv"),
                "-m",
                "random",
            ],
        )
        assert result.exit_code == 2


class TestSelectAndTarget:
    """Tests for select and train-target."""

    @pytest.fixture
    def scores_path(self, config_file: Path, workdir: Path) -> Path:
        """Rank-variance scores of the tiny ensemble."""
        out = workdir / "scores.csv"
        _invoke(config_file, "score", "-p", str(workdir / "proxies"), "-d", str(workdir / "noisy.npz"), "-o", str(out))
        return out

    def test_top_alpha(self, config_file: Path, workdir: Path, scores_path: Path) -> None:
        """A static plan keeps floor(alpha * N) examples."""
        summary = _invoke(config_file, "select", "-s", str(scores_path), "-o", str(workdir / "plan.json"))
        assert summary["kept"] == 60
        assert read_plan(workdir / "plan.json").size == 60

    def test_online(self, config_file: Path, workdir: Path, scores_path: Path) -> None:
        """An online plan is a distribution over every example."""
        summary = _invoke(
            config_file, "select", "-s", str(scores_path), "-o", str(workdir / "plan.json"), "--mode", "online"
        )
        assert summary["xi"] == pytest.approx(0.1)
        plan = read_plan(workdir / "plan.json")
        assert plan.probs.sum() == pytest.approx(1.0)

    def test_random_needs_size(self, config_file: Path, workdir: Path) -> None:
        """random without scores needs --n."""
        result = runner.invoke(
            app, ["--config", str(config_file), "select", "-o", str(workdir / "p.json"), "--mode", "random"]
        )
        assert result.exit_code == 2
        summary = _invoke(config_file, "select", "-o", str(workdir / "p.json"), "--mode", "random", "--n", "40")
        assert summary["kept"] == 20
        assert summary["seed"] == 0

    def test_invalid_alpha(self, config_file: Path, workdir: Path, scores_path: Path) -> None:
        """alpha must be in (0, 1]."""
        result = runner.invoke(
            app,
            ["--config", str(config_file), "select", "-s", str(scores_path), "-o", "p.json", "--alpha", "0"],
        )
        assert result.exit_code == 2

    def test_train_target_static(self, config_file: Path, workdir: Path, scores_path: Path) -> None:
        """Static plans train for base_epochs / alpha passes and report test accuracy."""
        _invoke(config_file, "select", "-s", str(scores_path), "-o", str(workdir / "plan.json"))
        summary = _invoke(
            config_file,
            "train-target",
            "-d",
            str(workdir / "noisy.npz"),
            "-o",
            str(workdir / "target.json"),
            "--plan",
            str(workdir / "plan.json"),
            "--test",
            str(workdir / "test.npz"),
        )
        assert summary["epochs"] == 8
        assert 0.0 <= summary["test_accuracy"] <= 100.0
        assert 0.0 <= summary["frac_corrupt_in_subset"] <= 1.0
        assert (workdir / "target.json").exists()

    def test_train_target_uniform(self, config_file: Path, workdir: Path) -> None:
        """Without a plan the target sees every example with its configured epochs."""
        summary = _invoke(config_file, "train-target", "-d", str(workdir / "noisy.npz"), "-o", str(workdir / "t.json"))
        assert summary["plan"] == "uniform-sgd"
        assert summary["epochs"] == 4
        assert summary["frac_corrupt_in_subset"] == pytest.approx(0.1)
