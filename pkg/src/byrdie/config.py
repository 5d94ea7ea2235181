"""Typed INI experiment configuration.

Every key has a declared type and default in ``SCHEMA``; unknown sections or
keys are rejected. :meth:`ExperimentConfig.dumps` writes every resolved value,
so the echo of a run reproduces it without consulting defaults.
"""
from __future__ import annotations

import configparser
import copy
from pathlib import Path

from .errors import ConfigError


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return [int(v) for v in str(text).replace(",", " ").split()]


def _strs(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _opt_int(text):
    text = str(text).strip()
    return None if text in ("", "none") else int(text)


def _opt_float(text):
    text = str(text).strip()
    return None if text in ("", "none") else float(text)


def _opt_str(text):
    text = str(text).strip()
    return None if text in ("", "none") else text


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    return str(value)


SCHEMA = {
    "experiment": {
        "name": (str, "experiment"),
        "trials": (int, 1),
        "seed": (int, 0),
        "algorithms": (_strs, ["byrdie"]),
        "sweep": (_opt_str, None),  # "section.key: v1, v2, ..."
        "metric_cadence": (str, "rk"),
        "metric_every": (int, 1),
        "checkpoint_every": (int, 0),
        "accuracy_on": (str, "test"),
        "oracle": (_bool, False),
        "oracle_tolerance": (float, 1e-12),
        "record_wall_time": (_bool, False),
    },
    "topology": {
        "generator": (str, "erdos_renyi"),
        "M": (int, 20),
        "p": (float, 0.5),
        "symmetric": (_bool, False),
        "edge_list": (_opt_str, None),
        "resample": (_bool, True),
        "max_attempts": (int, 1000),
        "certify": (str, "none"),
        "certify_trials": (int, 1000),
    },
    "byzantine": {
        "count": (str, "b"),  # integer, or "b" to follow protocol.b
        "ids": (_ints, []),
        "attack": (str, "uniform"),
        "lo": (float, 0.0),
        "hi": (float, 1.0),
        "value": (float, 0.0),
        "scale": (float, 1.0),
    },
    "data": {
        "source": (str, "synthetic"),
        "P": (int, 10),
        "margin": (float, 1.0),
        "noise": (float, 1.0),
        "count": (_opt_int, None),
        "path": (_opt_str, None),
        "label_col": (int, -1),
        "normalize": (_bool, False),
        "standardize": (_bool, False),
        "binary_positive": (_opt_float, None),
        "N": (int, 10),
        "class_balanced": (_bool, True),
        "test_per_class": (int, 1000),
    },
    "model": {
        "kind": (str, "square_hinge"),
        "lam": (float, 0.01),
        "bias": (_bool, True),
        "layers": (_ints, [4, 3, 3]),
    },
    "protocol": {
        "b": (int, 1),
        "T": (int, 1),
        "r_bar": (int, 100),
        "rho0": (float, 1.0),
        "tau0": (float, 0.0),
        "power": (float, 1.0),
        "order": (str, "natural"),
        "init": (str, "zero"),
        "init_scale": (float, 0.1),
    },
    "baselines": {
        "dgd_iterations": (_opt_int, None),
        "local_iterations": (_opt_int, None),
        "centralized_sweeps": (_opt_int, None),
    },
}


class ExperimentConfig:
    """Resolved configuration: ``cfg["section"]["key"]`` gives a typed value."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, section):
        return self.values[section]

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({s: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def loads(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        cfg = cls.defaults()
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{source}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{source}: unknown key {section}.{key}")
                conv = SCHEMA[section][key][0]
                try:
                    cfg.values[section][key] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}: bad value for {section}.{key}: {exc}") from None
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.loads(path.read_text(), source=str(path))

    def dumps(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def replace(self, dotted: str, value) -> "ExperimentConfig":
        section, key = self.split_key(dotted)
        values = copy.deepcopy(self.values)
        conv = SCHEMA[section][key][0]
        values[section][key] = conv(value) if isinstance(value, str) else value
        return ExperimentConfig(values)

    @staticmethod
    def split_key(dotted: str):
        section, _, key = dotted.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        return section, key

    def sweep(self):
        """``(dotted key, [values])`` or ``(None, [None])`` when nothing is swept."""
        spec = self["experiment"]["sweep"]
        if not spec:
            return None, [None]
        key, sep, rest = spec.partition(":")
        if not sep:
            raise ConfigError(f"sweep must look like 'section.key: v1, v2', got {spec!r}")
        key = key.strip()
        section, name = self.split_key(key)
        conv = SCHEMA[section][name][0]
        try:
            values = [conv(v) for v in _strs(rest)]
        except ValueError as exc:
            raise ConfigError(f"bad sweep value: {exc}") from None
        if not values:
            raise ConfigError("sweep lists no values")
        return key, values

    def check(self):
        e, t, p = self["experiment"], self["topology"], self["protocol"]
        if e["trials"] < 1:
            raise ConfigError("experiment.trials must be >= 1")
        if e["metric_cadence"] not in ("t", "rk", "r"):
            raise ConfigError("experiment.metric_cadence must be t, rk or r")
        for algo in e["algorithms"]:
            if algo not in ("byrdie", "dgd", "local-cd", "centralized-cd"):
                raise ConfigError(f"unknown algorithm {algo!r}")
        if t["generator"] not in ("erdos_renyi", "complete", "ring", "edge_list"):
            raise ConfigError(f"unknown topology.generator {t['generator']!r}")
        if t["generator"] == "edge_list" and not t["edge_list"]:
            raise ConfigError("topology.edge_list path is required for generator=edge_list")
        if t["certify"] not in ("none", "exact", "sampled"):
            raise ConfigError("topology.certify must be none, exact or sampled")
        if self["data"]["source"] not in ("synthetic", "csv", "iris"):
            raise ConfigError(f"unknown data.source {self['data']['source']!r}")
        if p["init"] not in ("zero", "random"):
            raise ConfigError("protocol.init must be zero or random")
        count = self["byzantine"]["count"]
        if count != "b":
            try:
                int(count)
            except ValueError:
                raise ConfigError("byzantine.count must be an integer or 'b'") from None
        self.sweep()
