"""Command-line entry point: ``qrobust <command> --config FILE [overrides]``.

Every command writes its CSV output(s) plus ``manifest_<command>.json``
(config hash, seeds, resolved config, output digests) into ``--out``.
Failures print one JSON line ``{"error": category, "message": ...}`` to
stderr and exit with the category's code; usage errors exit 2.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from pathlib import Path

import click

from . import harness
from .attacks import AttackSet, attack_batch
from .errors import ConfigurationError, QRobustError

USAGE_EXIT = 2


def _parse_grid(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"not a comma-separated list of numbers: {text!r}") from None


def _parse_dataset(text):
    if text in ("mnist5k", "synth"):
        return {"source": text}
    if text.startswith("idx:") and text.count(",") == 1:
        img, lab = text[4:].split(",")
        return {"source": "idx", "image_file": img, "label_file": lab}
    raise click.BadParameter("expected mnist5k, synth or idx:IMAGES,LABELS")


def build_config(config_path, seed=None, epsilon_grid=None, dataset=None) -> harness.ExperimentConfig:
    override = {}
    if config_path is not None:
        try:
            override = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"malformed config {config_path}: {exc}") from None
        if not isinstance(override, dict):
            raise click.UsageError(f"config {config_path} must be a JSON object")
    if seed is not None:
        override["seed"] = seed
    if epsilon_grid is not None:
        override["epsilon_grid"] = _parse_grid(epsilon_grid)
    if dataset is not None:
        override["dataset"] = {**override.get("dataset", {}), **_parse_dataset(dataset)}
    try:
        return harness.ExperimentConfig.from_dict(override)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"invalid config: {exc!r}") from None


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, command, cfg: harness.ExperimentConfig, outputs, extra=None):
    manifest = {
        "command": command,
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "model_seeds": {m: s.get("seed", 0) for m, s in cfg.models.items()},
        "config": cfg.raw,
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    path = Path(out) / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


class Context:
    def __init__(self, cfg, out):
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self._splits = None
        self._store = None

    @property
    def splits(self):
        if self._splits is None:
            self._splits = harness.load_splits(self.cfg)
        return self._splits

    @property
    def store(self):
        if self._store is None:
            self._store = harness.ModelStore(self.cfg, self.splits, self.out)
        return self._store


def common(f):
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON experiment config; unspecified keys take defaults.")(f)
    f = click.option("--seed", type=int, help="Override the root seed.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default="runs/out", show_default=True)(f)
    f = click.option("--epsilon-grid", help="Comma-separated epsilon values, ascending.")(f)
    f = click.option("--dataset", help="mnist5k | synth | idx:IMAGES,LABELS")(f)
    return f


def _ctx(config_path, seed, out, epsilon_grid, dataset):
    return Context(build_config(config_path, seed, epsilon_grid, dataset), out)


@click.group()
@click.option("-v", "--verbose", count=True)
def cli(verbose):
    """Adversarial-robustness benchmark for quantum and classical classifiers."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@common
@click.option("--model", "model_ids", multiple=True, help="Model id(s); default all.")
def train(config_path, seed, out, epsilon_grid, dataset, model_ids):
    """Train models (cached as checkpoints) and write per-epoch histories."""
    c = _ctx(config_path, seed, out, epsilon_grid, dataset)
    outputs = []
    for mid in model_ids or list(c.cfg.models):
        c.store.get(mid, retrain=True)
        path = c.out / f"train_{mid}.csv"
        harness.write_history(path, c.store.histories[mid])
        outputs.append(path)
    write_manifest(c.out, "train", c.cfg, outputs)


@cli.command()
@common
@click.option("--model", "model_id", help="Model id to adversarially train.")
@click.option("--epsilon-train", type=float, help="Training perturbation budget.")
def advtrain(config_path, seed, out, epsilon_grid, dataset, model_id, epsilon_train):
    """Adversarial training (half of each batch replaced by 3-step PGD)."""
    c = _ctx(config_path, seed, out, epsilon_grid, dataset)
    model, _, _ = harness.run_adv_training(c.cfg, c.out, model_id, epsilon_train, c.store, c.splits)
    tag = model.name.replace("^", "_adv")
    write_manifest(c.out, "advtrain", c.cfg, [c.out / f"{tag}_eval.csv", c.out / f"{tag}_history.csv"])


@cli.command()
@common
@click.option("--model", "model_id", required=True, help="Source model id.")
def attack(config_path, seed, out, epsilon_grid, dataset, model_id):
    """White-box attack sets over the epsilon grid."""
    c = _ctx(config_path, seed, out, epsilon_grid, dataset)
    model = c.store.get(model_id)
    ev = harness.eval_set(c.cfg, c.splits)
    rows = []
    for e in c.cfg.epsilon_grid:
        s = attack_batch(model, ev, c.cfg.attack_config(e))
        s.save(c.out / "attacks" / model_id / f"eps_{e:g}")
        rows.append({"epsilon": e, "target_id": model_id, "accuracy": s.adversarial_accuracy,
                     "n_examples": len(ev), "seed": c.cfg.seed, "config_hash": c.cfg.hash})
    path = c.out / f"attack_{model_id}.csv"
    harness.write_csv(path, harness.CSV_COLUMNS, rows)
    write_manifest(c.out, "attack", c.cfg, [path])


@cli.command()
@common
@click.option("--model", "model_ids", multiple=True, help="Restrict sources to these ids.")
def transfer(config_path, seed, out, epsilon_grid, dataset, model_ids):
    """Replay each source's attack sets on every target model."""
    c = _ctx(config_path, seed, out, epsilon_grid, dataset)
    if model_ids:
        c.cfg.raw["transfer"]["sources"] = list(model_ids)
    reports, summary = harness.run_transfer(c.cfg, c.out, c.store, c.splits)
    outputs = [c.out / f"transfer_{r.source_id}.csv" for r in reports] + [c.out / "transfer_summary.json"]
    write_manifest(c.out, "transfer", c.cfg, outputs)
    click.echo(json.dumps(summary["per_epsilon"], sort_keys=True))


@cli.command("noise-sweep")
@common
@click.option("--model", "model_id", help="QVC model id.")
def noise_sweep(config_path, seed, out, epsilon_grid, dataset, model_id):
    """Noisy QVC accuracy over the configured channel/strength grid."""
    c = _ctx(config_path, seed, out, epsilon_grid, dataset)
    if model_id:
        c.cfg.raw["noise"]["model"] = model_id
    harness.run_noise_sweep(c.cfg, c.out, c.store, c.splits)
    write_manifest(c.out, "noise-sweep", c.cfg, [c.out / "noise_sweep.csv"])


@cli.command()
@common
@click.option("--model", "model_ids", multiple=True, help="Classical then quantum model id.")
def detect(config_path, seed, out, epsilon_grid, dataset, model_ids):
    """Disagreement-based detection of attacked images."""
    c = _ctx(config_path, seed, out, epsilon_grid, dataset)
    if model_ids:
        if len(model_ids) != 2:
            raise click.UsageError("detect takes --model twice: classical, then quantum")
        c.cfg.raw["detection"].update(classical=model_ids[0], quantum=model_ids[1])
    report = harness.run_detection_experiment(c.cfg, c.out, c.store, c.splits)
    write_manifest(c.out, "detect", c.cfg, [c.out / "detection.csv"])
    click.echo(json.dumps(report.as_dict(), sort_keys=True))


@cli.command()
@common
@click.option("--model", "model_id", help="Source model id.")
@click.option("--attack-set", type=click.Path(exists=True, file_okay=False), help="Existing attack-set directory.")
def export(config_path, seed, out, epsilon_grid, dataset, model_id, attack_set):
    """Write original / delta / perturbed images as PGM files."""
    c = _ctx(config_path, seed, out, epsilon_grid, dataset)
    ex = c.cfg.raw["export"]
    if attack_set:
        s = AttackSet.load(attack_set)
    else:
        src = model_id or ex["source"]
        s = attack_batch(c.store.get(src), harness.eval_set(c.cfg, c.splits, ex.get("count", 8)),
                         c.cfg.attack_config(ex["epsilon"]))
    dest = c.out / "export"
    entries = harness.export_perturbations(s, dest, ex.get("count"))
    files = [dest / f"{e['stem']}_{part}.pgm" for e in entries for part in ("original", "delta", "perturbed")]
    write_manifest(c.out, "export", c.cfg, files + [dest / "index.json"])


def _fail(category, message, code):
    click.echo(json.dumps({"error": category, "message": message}), err=True)
    return code


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="qrobust", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return _fail("aborted", "aborted", 1)
    except click.UsageError as exc:
        return _fail("usage", exc.format_message(), USAGE_EXIT)
    except click.ClickException as exc:
        return _fail("usage", exc.format_message(), USAGE_EXIT)
    except QRobustError as exc:
        return _fail(exc.category, str(exc), exc.exit_code)
    except OSError as exc:
        return _fail("io", str(exc), 10)
    return 0


if __name__ == "__main__":
    sys.exit(main())
