import time

import numpy as np
import pytest

from orientnet import cli, data
from orientnet.checkpoint import load_params

ACCEPTANCE_LINES = []

TRAIN_SEED = 0
SYNTH_SEED = 7


def record_acceptance(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """100 synthetic photos, split 64/16/20 and rotation-augmented to 400 records."""
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--n", "100", "--seed", str(SYNTH_SEED), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="session")
def trained(synth_dir, tmp_path_factory):
    """tiny-orient trained for 15 epochs through the CLI; returns paths and loaded params."""
    out = tmp_path_factory.mktemp("trained")
    ckpt = out / "tiny.onck"
    log = out / "train.log"
    start = time.perf_counter()
    rc = cli.main(["train", "--manifest", str(synth_dir / "manifest.json"), "--model", "tiny-orient",
                   "--epochs", "15", "--seed", str(TRAIN_SEED), "--out-checkpoint", str(ckpt), "--log", str(log)])
    seconds = time.perf_counter() - start
    assert rc == 0
    config, params = load_params(ckpt)
    manifest = data.DatasetManifest.load(synth_dir / "manifest.json")
    return {"checkpoint": ckpt, "log": log, "config": config, "params": params, "manifest": manifest,
            "seconds": seconds}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
