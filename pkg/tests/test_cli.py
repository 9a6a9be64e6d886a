import csv
import json
from pathlib import Path

import pytest

from qrobust.cli import main

SMOKE = str(Path(__file__).resolve().parents[1] / "configs" / "smoke.json")
COMMANDS = [["train"], ["advtrain"], ["attack", "--model", "qvc"], ["transfer"], ["noise-sweep"], ["detect"],
            ["export"]]


def run(args, out):
    return main(args + ["--config", SMOKE, "--out", str(out)])


def csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).glob("*.csv"))}


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    outs = [tmp_path_factory.mktemp(f"run{i}") for i in range(2)]
    for out in outs:
        for cmd in COMMANDS:
            assert run(cmd, out) == 0, cmd
    return outs


def test_every_command_writes_manifest(two_runs):
    out = two_runs[0]
    for cmd in COMMANDS:
        m = json.loads((out / f"manifest_{cmd[0]}.json").read_text())
        assert m["command"] == cmd[0] and m["seed"] == 0 and len(m["config_hash"]) == 16
        assert "timestamp" not in json.dumps(m)
        assert m["outputs"]
        for name in m["outputs"]:
            assert list(out.rglob(name)), name


def test_reruns_are_bit_identical(two_runs):
    a, b = two_runs
    ca, cb = csv_bytes(a), csv_bytes(b)
    assert set(ca) >= {"transfer_mlp.csv", "transfer_qvc.csv", "detection.csv", "noise_sweep.csv",
                       "attack_qvc.csv", "mlp_adv0.1_eval.csv", "train_mlp.csv", "train_qvc.csv"}
    assert ca == cb
    for cmd in COMMANDS:
        name = f"manifest_{cmd[0]}.json"
        assert (a / name).read_text() == (b / name).read_text()


def test_transfer_csv_shape(tmp_path):
    assert main(["transfer", "--config", SMOKE, "--out", str(tmp_path), "--model", "mlp"]) == 0
    with open(tmp_path / "transfer_mlp.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == ("epsilon", "target_id", "accuracy", "n_examples", "seed", "config_hash")
    # 2 targets x 5 epsilons plus one clean row per target
    assert len(rows) == 2 * 5 + 2
    assert {r["target_id"] for r in rows} == {"mlp", "qvc"}
    assert sum(r["epsilon"] == "clean" for r in rows) == 2


def test_detect_emits_counts_and_rates(two_runs):
    with open(two_runs[0] / "detection.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    assert {"tp", "fp", "tn", "fn", "tp_rate", "fp_rate"} <= set(row)
    assert int(row["tp"]) + int(row["fn"]) == int(row["n_attacked"]) == 50


def test_seed_override_changes_hash(tmp_path):
    assert main(["noise-sweep", "--config", SMOKE, "--out", str(tmp_path / "a"), "--seed", "5"]) == 0
    m = json.loads((tmp_path / "a" / "manifest_noise-sweep.json").read_text())
    assert m["seed"] == 5


def test_unknown_flag_is_usage_error(tmp_path, capsys):
    assert main(["transfer", "--bogus"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "usage"


def test_malformed_config_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["transfer", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "usage"


@pytest.mark.parametrize("args,category,code", [
    (["attack", "--model", "nope"], "configuration", 3),
    (["transfer", "--epsilon-grid", "0.3,0.1"], "configuration", 3),
    (["noise-sweep", "--model", "mlp"], "configuration", 3),
])
def test_error_categories(tmp_path, capsys, args, category, code):
    assert main(args + ["--config", SMOKE, "--out", str(tmp_path)]) == code
    assert json.loads(capsys.readouterr().err)["error"] == category


def test_bad_epsilon_grid_text(tmp_path, capsys):
    assert main(["transfer", "--config", SMOKE, "--out", str(tmp_path), "--epsilon-grid", "a,b"]) == 2


def test_export_from_saved_attack_set(two_runs, tmp_path):
    src = two_runs[0] / "attacks" / "qvc" / "eps_0.1"
    assert main(["export", "--config", SMOKE, "--out", str(tmp_path), "--attack-set", str(src)]) == 0
    index = json.loads((tmp_path / "export" / "index.json").read_text())
    assert index["source_model"] == "qvc" and len(index["examples"]) == 2
