"""Experiment pipelines: training, transfer replay, adversarial training,
noise sweeps, disagreement detection and perturbation export.

Every pipeline is a pure function of the experiment config (including its
seeds); outputs carry the config hash so reruns can be diffed.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from .attacks import AttackConfig, AttackSet, attack_batch, predict_chunked, replay, run_attack
from .checkpoint import load_model
from .classical import ClassicalModel
from .encoding import qubits_for
from .errors import ConfigurationError
from .noise import NoiseModel, noisy_accuracy_sweep, write_sweep_csv
from .qvc import QvcModel
from .training import TrainConfig, accuracy, train

log = logging.getLogger(__name__)

CSV_COLUMNS = ("epsilon", "target_id", "accuracy", "n_examples", "seed", "config_hash")
DETECTION_COLUMNS = ("classical_id", "quantum_id", "tp", "fp", "tn", "fn", "n_clean", "n_attacked",
                     "tp_rate", "fp_rate", "seed", "config_hash")

DEFAULT_CONFIG = {
    "name": "desk",
    "seed": 0,
    "dataset": {"source": "mnist5k", "classes": [0, 1, 2, 3], "size": [8, 8], "n_train": 500, "n_test": 250},
    "models": {
        "convnet": {"family": "convnet", "conv_widths": [8, 16, 32], "hidden": [64], "seed": 0,
                    "train": {"epochs": 30, "batch_size": 25, "lr": 0.003}},
        "mlp": {"family": "mlp", "hidden": [64], "seed": 1,
                "train": {"epochs": 30, "batch_size": 25, "lr": 0.003}},
        "qvc10": {"family": "qvc", "num_qubits": 6, "layers": 10, "temperature": 0.5, "seed": 0,
                  "train": {"epochs": 30, "batch_size": 25, "lr": 0.01}},
        "qvc20": {"family": "qvc", "num_qubits": 6, "layers": 20, "temperature": 0.5, "seed": 0,
                  "train": {"epochs": 30, "batch_size": 25, "lr": 0.01}},
    },
    "attack": {"kind": "pgd", "steps": 20, "step_size": None, "random_start": False},
    "epsilon_grid": [0.0, 0.05, 0.1, 0.2, 0.3],
    "eval_size": 250,
    "transfer": {"sources": ["convnet", "mlp", "qvc10", "qvc20"], "targets": ["convnet", "mlp", "qvc10", "qvc20"]},
    "adv_training": {"model": "convnet", "epsilon_train": 0.1, "steps": 3},
    "noise": {"model": "qvc20", "trajectories": 32, "eval_size": 100,
              "grid": {"global_depolarizing": [0.0, 0.01, 0.05], "depolarizing": [0.0, 0.005, 0.01],
                       "amplitude_damping": [0.0, 0.005, 0.01, 0.02], "bit_flip": [0.0, 0.005]}},
    "detection": {"classical": "convnet", "quantum": "qvc20", "pool_size": 1000,
                  "kinds": ["fgsm", "pgd"], "epsilons": [0.05, 0.1, 0.2, 0.3]},
    "export": {"source": "qvc20", "epsilon": 0.1, "count": 8},
}


def _merge(base, override):
    # sections merge one level deep; nested values (grids, model tables) replace wholesale
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "models":
            out[k] = {**out[k], **copy.deepcopy(v)}
        else:
            out[k] = copy.deepcopy(v)
    return out


def canonical_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentConfig:
    raw: dict

    def __post_init__(self):
        grid = self.raw.get("epsilon_grid", [])
        if list(grid) != sorted(grid):
            raise ConfigurationError(f"epsilon grid must be sorted ascending: {grid}")
        if any(not 0.0 <= e <= 1.0 for e in grid):
            raise ConfigurationError(f"epsilon grid values must lie in [0, 1]: {grid}")
        if "seed" not in self.raw:
            raise ConfigurationError("config needs an explicit root seed")
        for mid, entry in self.models.items():
            if entry.get("family") not in ("qvc", "mlp", "convnet"):
                raise ConfigurationError(f"model {mid!r}: unknown family {entry.get('family')!r}")

    @classmethod
    def from_dict(cls, override=None) -> ExperimentConfig:
        return cls(_merge(DEFAULT_CONFIG, override or {}))

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def hash(self) -> str:
        return canonical_hash(self.raw)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def models(self) -> dict:
        return self.raw["models"]

    @property
    def epsilon_grid(self) -> list:
        return [float(e) for e in self.raw["epsilon_grid"]]

    def model_spec(self, model_id) -> dict:
        if model_id not in self.models:
            raise ConfigurationError(f"unknown model id {model_id!r} (have {sorted(self.models)})")
        return self.models[model_id]

    def attack_config(self, epsilon, **overrides) -> AttackConfig:
        a = dict(self.raw["attack"], epsilon=float(epsilon), seed=self.seed)
        a.update(overrides)
        return AttackConfig(**a)


@dataclass
class Splits:
    train: data_mod.Dataset
    test: data_mod.Dataset
    holdout: data_mod.Dataset  # everything not used for training


def load_splits(config: ExperimentConfig) -> Splits:
    entry = config.raw["dataset"]
    source = entry.get("source", "mnist5k")
    if source == "mnist5k":
        ds = data_mod.load_mnist5k(entry.get("cache_dir"))
    elif source == "idx":
        for key in ("image_file", "label_file"):
            if not entry.get(key) or not Path(entry[key]).exists():
                raise ConfigurationError(f"dataset.{key} missing or not found: {entry.get(key)!r}")
        ds = data_mod.load_idx(entry["image_file"], entry["label_file"], entry.get("class_count", 10))
    elif source == "synth":
        ds = data_mod.synth_blobs(entry.get("class_count", 4), entry.get("per_class", 300),
                                  entry.get("size", [8, 8])[0], entry.get("synth_seed", config.seed))
    else:
        raise ConfigurationError(f"unknown dataset source {source!r}")
    if entry.get("classes") is not None:
        ds = data_mod.select_classes(ds, entry["classes"])
    w, h = entry.get("size", list(ds.shape[::-1]))
    if (h, w) != ds.shape:
        ds = data_mod.downscale(ds, w, h)
    perm = np.random.default_rng(entry.get("split_seed", config.seed)).permutation(len(ds))
    n_train, n_test = entry["n_train"], entry["n_test"]
    if n_train + n_test > len(ds):
        raise ConfigurationError(f"dataset has {len(ds)} examples, need {n_train + n_test}")
    return Splits(ds.subset(perm[:n_train], "train"), ds.subset(perm[n_train:n_train + n_test], "test"),
                  ds.subset(perm[n_train:], "holdout"))


def build_model(model_id, entry, num_classes, input_shape):
    family = entry["family"]
    seed = entry.get("seed", 0)
    if family == "qvc":
        n = entry.get("num_qubits") or qubits_for(input_shape[0] * input_shape[1])
        return QvcModel.init(n, entry["layers"], num_classes, seed=seed,
                             temperature=entry.get("temperature", 1.0), name=model_id)
    return ClassicalModel(family, input_shape, num_classes, entry.get("conv_widths", ()), entry.get("hidden", (64,)),
                          seed=seed, name=model_id)


def train_config(entry) -> TrainConfig:
    t = dict(entry.get("train", {}))
    t.setdefault("seed", entry.get("seed", 0))
    return TrainConfig(**t)


class ModelStore:
    """Trains models on demand and caches them as checkpoints under ``out/checkpoints``."""

    def __init__(self, config: ExperimentConfig, splits: Splits, out_dir):
        self.config = config
        self.splits = splits
        self.dir = Path(out_dir) / "checkpoints"
        self.cache = {}
        self.histories = {}

    def _key(self, model_id):
        return canonical_hash({"dataset": self.config.raw["dataset"], "seed": self.config.seed,
                               "model": self.config.model_spec(model_id), "id": model_id})

    def path(self, model_id) -> Path:
        return self.dir / f"{model_id}-{self._key(model_id)}.ckpt"

    def get(self, model_id, retrain=False):
        if model_id in self.cache and not retrain:
            return self.cache[model_id]
        entry = self.config.model_spec(model_id)
        if entry.get("checkpoint"):
            if not Path(entry["checkpoint"]).exists():
                raise ConfigurationError(f"model {model_id!r}: checkpoint {entry['checkpoint']} not found")
            model = load_model(entry["checkpoint"])
            model.name = model_id
        elif self.path(model_id).exists() and not retrain:
            model = load_model(self.path(model_id))
        else:
            model = build_model(model_id, entry, self.splits.train.class_count, self.splits.train.shape)
            self.histories[model_id] = train(model, self.splits.train, train_config(entry), test=self.splits.test)
            self.dir.mkdir(parents=True, exist_ok=True)
            model.save(self.path(model_id))
        self.cache[model_id] = model
        return model


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def write_history(path, history) -> None:
    if history:
        write_csv(path, list(history[0].keys()), history)


def eval_set(config: ExperimentConfig, splits: Splits, n=None):
    return data_mod.eval_subset(splits.test, n or config.raw.get("eval_size", 250), config.seed)


# -- transfer ---------------------------------------------------------------

@dataclass
class TransferReport:
    source_id: str
    target_ids: list
    epsilons: list
    accuracy: np.ndarray  # [target, epsilon]
    clean_accuracy: dict
    n_examples: int
    seed: int
    config_hash: str
    source_accuracy: list = field(default_factory=list)  # recorded white-box accuracy per epsilon

    def rows(self):
        out = []
        for i, t in enumerate(self.target_ids):
            out.append({"epsilon": "clean", "target_id": t, "accuracy": self.clean_accuracy[t]})
            for j, e in enumerate(self.epsilons):
                out.append({"epsilon": e, "target_id": t, "accuracy": self.accuracy[i, j]})
        for r in out:
            r.update(n_examples=self.n_examples, seed=self.seed, config_hash=self.config_hash)
        return out

    def check_complete(self):
        if self.accuracy.shape != (len(self.target_ids), len(self.epsilons)) or not np.all(np.isfinite(self.accuracy)):
            raise ConfigurationError(f"transfer report for {self.source_id} is incomplete")


def run_transfer(config: ExperimentConfig, out_dir, store: ModelStore | None = None, splits=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = splits or load_splits(config)
    store = store or ModelStore(config, splits, out)
    ev = eval_set(config, splits)
    tcfg = config.raw["transfer"]
    targets = list(tcfg["targets"])
    eps = config.epsilon_grid
    models = {t: store.get(t) for t in set(targets) | set(tcfg["sources"])}
    reports = []
    for src in tcfg["sources"]:
        acc = np.full((len(targets), len(eps)), np.nan)
        recorded = []
        for j, e in enumerate(eps):
            aset = attack_batch(models[src], ev, config.attack_config(e))
            aset.save(out / "attacks" / src / f"eps_{e:g}")
            recorded.append(aset.adversarial_accuracy)
            for i, t in enumerate(targets):
                acc[i, j] = aset.adversarial_accuracy if t == src else replay(aset, models[t])
        clean = {t: accuracy(models[t], ev) for t in targets}
        report = TransferReport(src, targets, eps, acc, clean, len(ev), config.seed, config.hash, recorded)
        report.check_complete()
        write_csv(out / f"transfer_{src}.csv", CSV_COLUMNS, report.rows())
        reports.append(report)
    summary = transfer_asymmetry(reports, config)
    (out / "transfer_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return reports, summary


def transfer_asymmetry(reports, config: ExperimentConfig) -> dict:
    """Mean accuracy drop of quantum targets under classical-source attacks and vice versa."""
    fam = {m: config.model_spec(m)["family"] for m in config.models}

    def is_q(m):
        return fam[m] == "qvc"

    c2q, q2c = {}, {}
    for rep in reports:
        for i, t in enumerate(rep.target_ids):
            if t == rep.source_id or is_q(t) == is_q(rep.source_id):
                continue
            bucket = q2c if is_q(rep.source_id) else c2q
            for j, e in enumerate(rep.epsilons):
                bucket.setdefault(e, []).append(rep.clean_accuracy[t] - rep.accuracy[i, j])
    eps = sorted(set(c2q) | set(q2c))
    per_eps = {f"{e:g}": {"classical_to_quantum_drop": float(np.mean(c2q[e])) if e in c2q else None,
                          "quantum_to_classical_drop": float(np.mean(q2c[e])) if e in q2c else None} for e in eps}
    return {
        "config_hash": config.hash,
        "seed": config.seed,
        "model_seeds": {m: config.model_spec(m).get("seed", 0) for m in config.models},
        "per_epsilon": per_eps,
        "classical_to_quantum_smaller": {k: (v["classical_to_quantum_drop"] is not None
                                             and v["quantum_to_classical_drop"] is not None
                                             and v["classical_to_quantum_drop"] < v["quantum_to_classical_drop"])
                                         for k, v in per_eps.items()},
    }


# -- adversarial training ---------------------------------------------------

def pgd_adversary(epsilon, steps=3, seed=0):
    cfg = AttackConfig("pgd", epsilon, steps, seed=seed)

    def adversary(model, X, y):
        return run_attack(model, X, y, cfg)

    return adversary


def run_adv_training(config: ExperimentConfig, out_dir=None, model_id=None, epsilon_train=None,
                     store: ModelStore | None = None, splits=None):
    """Train ``model_id`` with half of every batch replaced by PGD examples.

    Returns ``(model, history, evaluation_rows)``; the evaluation compares
    the adversarially trained model with its standard twin under white-box
    PGD over the epsilon grid.
    """
    splits = splits or load_splits(config)
    adv = config.raw["adv_training"]
    model_id = model_id or adv["model"]
    eps_train = float(adv["epsilon_train"] if epsilon_train is None else epsilon_train)
    entry = config.model_spec(model_id)
    model = build_model(f"{model_id}^{eps_train:g}", entry, splits.train.class_count, splits.train.shape)
    history = train(model, splits.train, train_config(entry), test=splits.test,
                    adversary=pgd_adversary(eps_train, adv.get("steps", 3), config.seed))
    rows = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        store = store or ModelStore(config, splits, out)
        twin = store.get(model_id)
        ev = eval_set(config, splits)
        grid = sorted(set(config.epsilon_grid) | {eps_train})
        for m in (twin, model):
            for e in grid:
                s = attack_batch(m, ev, config.attack_config(e))
                rows.append({"epsilon": e, "target_id": m.name, "accuracy": s.adversarial_accuracy,
                             "n_examples": len(ev), "seed": config.seed, "config_hash": config.hash})
        tag = f"{model_id}_adv{eps_train:g}"
        model.save(out / f"{tag}.ckpt")
        write_history(out / f"{tag}_history.csv", history)
        write_csv(out / f"{tag}_eval.csv", CSV_COLUMNS, rows)
    return model, history, rows


# -- detection --------------------------------------------------------------

@dataclass
class DetectionReport:
    tp: int
    fp: int
    tn: int
    fn: int
    n_clean: int
    n_attacked: int

    def __post_init__(self):
        if self.tp + self.fn != self.n_attacked or self.fp + self.tn != self.n_clean:
            raise ConfigurationError("confusion counts do not sum to pool sizes")

    @property
    def tp_rate(self):
        return self.tp / self.n_attacked if self.n_attacked else float("nan")

    @property
    def fp_rate(self):
        return self.fp / self.n_clean if self.n_clean else float("nan")

    def as_dict(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn, "n_clean": self.n_clean,
                "n_attacked": self.n_attacked, "tp_rate": self.tp_rate, "fp_rate": self.fp_rate}


def run_detection(classical, quantum, clean_pool, attacked_pool) -> DetectionReport:
    """Flag an image as attacked when the two models' predicted labels differ."""
    if classical.num_classes != quantum.num_classes:
        raise ConfigurationError(f"label spaces differ: {classical.num_classes} vs {quantum.num_classes} classes")
    clean_pool = np.atleast_2d(clean_pool)
    attacked_pool = np.atleast_2d(attacked_pool)

    def flags(X):
        if len(X) == 0:
            return np.zeros(0, dtype=bool)
        return predict_chunked(classical, X) != predict_chunked(quantum, X)

    fc, fa = flags(clean_pool), flags(attacked_pool)
    return DetectionReport(tp=int(fa.sum()), fp=int(fc.sum()), tn=int((~fc).sum()), fn=int((~fa).sum()),
                           n_clean=len(clean_pool), n_attacked=len(attacked_pool))


def attacked_pool(model, dataset, kinds, epsilons, seed, steps=20):
    """Attack each image with a (kind, epsilon) drawn uniformly from the grid."""
    rng = np.random.default_rng(seed)
    combos = [(k, e) for k in kinds for e in epsilons]
    pick = rng.integers(0, len(combos), len(dataset))
    X = dataset.X.copy()
    for c, (kind, eps) in enumerate(combos):
        idx = np.flatnonzero(pick == c)
        if idx.size:
            X[idx] = run_attack(model, X[idx], dataset.labels[idx], AttackConfig(kind, eps, steps, seed=seed))
    return X, [combos[i] for i in pick]


def run_detection_experiment(config: ExperimentConfig, out_dir, store=None, splits=None) -> DetectionReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = splits or load_splits(config)
    store = store or ModelStore(config, splits, out)
    det = config.raw["detection"]
    classical, quantum = store.get(det["classical"]), store.get(det["quantum"])
    n = det.get("pool_size", 1000)
    pool = splits.holdout
    if n > len(pool):
        raise ConfigurationError(f"pool size {n} exceeds {len(pool)} held-out images")
    rng = np.random.default_rng(config.seed)
    clean = pool.subset(rng.permutation(len(pool))[:n])
    to_attack = pool.subset(rng.permutation(len(pool))[:n])
    steps = config.raw["attack"].get("steps", 20)
    X_adv, _ = attacked_pool(classical, to_attack, det["kinds"], det["epsilons"], config.seed, steps)
    report = run_detection(classical, quantum, clean.X, X_adv)
    row = dict(report.as_dict(), classical_id=det["classical"], quantum_id=det["quantum"], seed=config.seed,
               config_hash=config.hash)
    write_csv(out / "detection.csv", DETECTION_COLUMNS, [row])
    return report


# -- noise ------------------------------------------------------------------

def noise_grid(entry) -> list:
    return [NoiseModel(kind, float(s)) for kind, strengths in entry.items() for s in strengths]


def run_noise_sweep(config: ExperimentConfig, out_dir, store=None, splits=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = splits or load_splits(config)
    store = store or ModelStore(config, splits, out)
    ns = config.raw["noise"]
    model = store.get(ns["model"])
    if not isinstance(model, QvcModel):
        raise ConfigurationError(f"noise sweep needs a QVC model, {ns['model']!r} is {model.family}")
    ev = eval_set(config, splits, ns.get("eval_size"))
    rows = noisy_accuracy_sweep(model, ev, noise_grid(ns["grid"]), ns.get("trajectories", 32), config.seed)
    write_sweep_csv(rows, out / "noise_sweep.csv")
    return rows


# -- perturbation export ----------------------------------------------------

def write_pgm(path, image_u8) -> None:
    image_u8 = np.asarray(image_u8, dtype=np.uint8)
    h, w = image_u8.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + image_u8.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5" or len(parts) < 5:
        raise ConfigurationError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ConfigurationError(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def to_u8(values) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def delta_display(delta) -> tuple[np.ndarray, float]:
    """Map signed ``delta`` to [0, 255]: 0 -> mid-grey, +-max|delta| -> 255 / 0."""
    scale = float(np.max(np.abs(delta))) if np.size(delta) else 0.0
    if scale == 0.0:
        return np.full(np.shape(delta), 128, dtype=np.uint8), 0.0
    return np.rint(127.5 + 127.5 * np.asarray(delta) / scale).astype(np.uint8), scale


def export_perturbations(attack_set: AttackSet, output_path, count=None) -> list:
    """Write original / delta / perturbed PGM triples plus an ``index.json``."""
    if len(attack_set) == 0:
        raise ConfigurationError("empty attack set")
    out = Path(output_path)
    out.mkdir(parents=True, exist_ok=True)
    shape = attack_set.image_shape
    entries = []
    for i in range(len(attack_set) if count is None else min(count, len(attack_set))):
        d_img, scale = delta_display(attack_set.delta[i].reshape(shape))
        stem = f"ex{i:03d}"
        write_pgm(out / f"{stem}_original.pgm", to_u8(attack_set.original[i].reshape(shape)))
        write_pgm(out / f"{stem}_delta.pgm", d_img)
        write_pgm(out / f"{stem}_perturbed.pgm", to_u8(attack_set.perturbed[i].reshape(shape)))
        entries.append({"index": i, "stem": stem, "label": int(attack_set.labels[i]),
                        "clean_prediction": int(attack_set.clean_predictions[i]),
                        "adversarial_prediction": int(attack_set.adversarial_predictions[i]),
                        "delta_scale": scale})
    meta = {"source_model": attack_set.source_model, "config": attack_set.config.to_dict(),
            "delta_encoding": "u8 = rint(127.5 + 127.5 * delta / delta_scale); delta_scale 0 -> all 128",
            "examples": entries}
    (out / "index.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return entries
