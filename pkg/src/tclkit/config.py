"""Flat dotted key-value configuration files and run manifests.

The config format is one `section.key = value` assignment per line;
`#` starts a comment. A run manifest is the fully-resolved form: every
hyperparameter explicit, so re-running the written manifest reproduces
the run exactly (bit-for-bit at f64).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import data, presets
from .network import ConfigError, NetworkConfig, TrainConfig


DEFAULTS = {
    "run.seed": "0",
    "run.out": "tclkit-run",
    "network.preset": "synth-conv-tcl",
    "network.tcl_batchnorm": "true",
    "train.epochs": "30",
    "train.batch_size": "16",
    "train.lr": "0.01",
    "train.momentum": "0.9",
    "train.weight_decay": "0.0005",
    "train.precision": "f64",
    "train.lr_decay": "true",
    "train.wall_clock": "false",
    "train.shuffle": "true",
    "data.kind": "synth",
    "data.num_classes": "3",
    "data.shape": "3x8x8",
    "data.train_samples": "200",
    "data.test_samples": "60",
    "data.noise": "0.1",
    "data.seed": "0",
}

_IDX_KEYS = ("data.train_images", "data.train_labels",
             "data.test_images", "data.test_labels")

KNOWN_KEYS = frozenset(DEFAULTS) | frozenset(_IDX_KEYS) | {"run.version"}


def parse_kv_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def parse_kv_file(path) -> dict:
    return parse_kv_text(Path(path).read_text())


def format_kv(values: dict) -> str:
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


def write_kv(values: dict, path):
    Path(path).write_text(format_kv(values))


def _get_bool(values, key) -> bool:
    v = values[key].lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {values[key]!r}")


def _get_int(values, key) -> int:
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {values[key]!r}") from None


def _get_float(values, key) -> float:
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {values[key]!r}") from None


def _get_shape(values, key) -> tuple:
    try:
        shape = tuple(int(p) for p in values[key].split("x"))
    except ValueError:
        raise ConfigError(f"{key}: expected CxHxW, got {values[key]!r}") from None
    if len(shape) != 3 or any(d < 1 for d in shape):
        raise ConfigError(f"{key}: expected CxHxW, got {values[key]!r}")
    return shape


@dataclass
class RunManifest:
    """A fully-resolved run description."""

    values: dict

    @property
    def seed(self) -> int:
        return _get_int(self.values, "run.seed")

    @property
    def out_dir(self) -> Path:
        return Path(self.values["run.out"])

    @property
    def preset(self) -> str:
        return self.values["network.preset"]

    def network_config(self) -> NetworkConfig:
        cfg = presets.get_preset(self.preset)
        cfg.tcl_batchnorm = _get_bool(self.values, "network.tcl_batchnorm")
        return cfg

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            epochs=_get_int(v, "train.epochs"),
            batch_size=_get_int(v, "train.batch_size"),
            lr=_get_float(v, "train.lr"),
            momentum=_get_float(v, "train.momentum"),
            weight_decay=_get_float(v, "train.weight_decay"),
            seed=self.seed,
            precision=v["train.precision"],
            dataset=self.dataset_ref(),
            lr_decay=_get_bool(v, "train.lr_decay"),
            wall_clock=_get_bool(v, "train.wall_clock"),
            shuffle=_get_bool(v, "train.shuffle"),
        )

    def dataset_ref(self) -> str:
        v = self.values
        if v["data.kind"] == "synth":
            return (f"synth:{v['data.num_classes']}c:{v['data.shape']}"
                    f":noise={v['data.noise']}:seed={v['data.seed']}")
        return f"idx:{v['data.train_images']}"

    def load_datasets(self):
        """(train, test) datasets described by the data section."""
        v = self.values
        if v["data.kind"] == "synth":
            shape = _get_shape(v, "data.shape")
            common = dict(
                num_classes=_get_int(v, "data.num_classes"),
                shape=shape,
                noise=_get_float(v, "data.noise"),
                seed=_get_int(v, "data.seed"),
            )
            train = data.synthetic_dataset(
                samples=_get_int(v, "data.train_samples"), split="train", **common)
            test = data.synthetic_dataset(
                samples=_get_int(v, "data.test_samples"), split="test", **common)
            return train, test
        train = data.load_idx(v["data.train_images"], v["data.train_labels"],
                              split="train")
        test = data.load_idx(v["data.test_images"], v["data.test_labels"],
                             split="test", num_classes=train.num_classes)
        return train, test

    def save(self, path):
        write_kv(self.values, path)


def resolve_manifest(file_values: dict = None, overrides: dict = None) -> RunManifest:
    """Merge defaults, config-file values, and CLI overrides into a
    total manifest; every known key ends up explicit."""
    values = dict(DEFAULTS)
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = str(value)

    from . import __version__
    values["run.version"] = __version__

    presets.get_preset(values["network.preset"])  # validates the name
    kind = values["data.kind"]
    if kind == "synth":
        for key in _IDX_KEYS:
            values.pop(key, None)
    elif kind == "idx":
        missing = [k for k in _IDX_KEYS if not values.get(k)]
        if missing:
            raise ConfigError(f"data.kind=idx needs {', '.join(missing)}")
        for key in ("data.num_classes", "data.shape", "data.train_samples",
                    "data.test_samples", "data.noise"):
            values.pop(key, None)
    else:
        raise ConfigError(f"data.kind must be synth or idx, got {kind!r}")

    manifest = RunManifest(values)
    manifest.train_config().validate()  # typed parse of every train key
    return manifest


def manifest_from_file(path, overrides: dict = None) -> RunManifest:
    return resolve_manifest(parse_kv_file(path), overrides)
