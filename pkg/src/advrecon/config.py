"""Experiment configuration files.

Configs are INI files with the sections below; every key is optional unless
noted and falls back to the library defaults.

``[experiment]``
    ``name``, ``seed`` (default 0).
``[operator]``
    ``kind`` (gaussian | dct), ``m``, ``n`` (required), ``p`` (dct only),
    ``seed``, ``replace`` (comma-separated ``index:value`` pairs, indices in
    increasing singular-value order), or ``path`` to load a saved operator.
``[dataset]``
    ``source`` (synthetic_gaussian | mnist_bundled | mnist_idx), ``train_count``,
    ``test_count``, ``seed``, ``downsample``, ``noise_sigma``, and for
    mnist_idx the ``images`` / ``labels`` paths.
``[trainer]``
    ``kind`` (linear | adv | baseline) plus the hyperparameters of
    :class:`~advrecon.linear.LinearTrainConfig`,
    :class:`~advrecon.neural.AdvTrainConfig` or
    :class:`~advrecon.neural.OptimizerSettings`; ``variants``, ``mu``, ``beta``
    for baselines; ``reconstructor_hidden``, ``generator_hidden``, ``init_seed``
    for networks.
``[attack]``
    ``epsilons`` (comma-separated), ``steps``, ``step_size``, ``momentum``,
    ``restarts``, ``seed``, ``test_samples``.
``[output]``
    ``dir``: output directory, relative to ``$ADVRECON_OUTPUT_ROOT`` if set.
"""

import configparser
import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import data as data_mod
from .attack import AttackConfig
from .linear import LinearTrainConfig
from .measurement import gen_dct_operator, gen_gaussian_operator, load_operator, modify_spectrum
from .neural import AdvTrainConfig, BaselineConfig, BaselineVariant, OptimizerSettings
from .reporting import config_hash

SECTIONS = ("experiment", "operator", "dataset", "trainer", "attack", "output")
OUTPUT_ROOT_ENV = "ADVRECON_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


def preset_names():
    return sorted(p.name[:-4] for p in resources.files("advrecon.presets").iterdir() if p.name.endswith(".ini"))


def preset_text(name):
    path = resources.files("advrecon.presets").joinpath(name + ".ini")
    if not path.is_file():
        raise ConfigError("unknown preset %r (available: %s)" % (name, ", ".join(preset_names())))
    return path.read_text()


def _parse_list(text, cast):
    return [cast(tok) for tok in text.replace(" ", "").split(",") if tok]


def _parse_replacements(text):
    out = []
    for tok in _parse_list(text, str):
        idx, sep, val = tok.partition(":")
        if not sep:
            raise ConfigError("replacement %r is not index:value" % tok)
        out.append((int(idx), float(val)))
    return out


def _section_kwargs(section, cls, rename=None):
    """Typed keyword arguments for dataclass ``cls`` from an INI section."""
    rename = rename or {}
    kwargs = {}
    for f in fields(cls):
        key = rename.get(f.name, f.name)
        if key not in section:
            continue
        raw = section[key]
        try:
            kwargs[f.name] = f.type(raw) if f.type in (int, float) else raw
        except ValueError:
            raise ConfigError("[%s] %s=%r is not a valid %s" % (section.name, key, raw, f.type.__name__)) from None
    return kwargs


@dataclass
class ExperimentConfig:
    parser: configparser.ConfigParser
    text: str
    base_dir: Path

    @classmethod
    def from_text(cls, text, base_dir="."):
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        unknown = set(parser.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError("unknown config sections: %s" % ", ".join(sorted(unknown)))
        for name in SECTIONS:
            if not parser.has_section(name):
                parser.add_section(name)
        return cls(parser, text, Path(base_dir))

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError("config file %s does not exist" % path)
        return cls.from_text(path.read_text(), path.parent)

    @classmethod
    def from_preset(cls, name):
        return cls.from_text(preset_text(name))

    def __getitem__(self, section):
        return self.parser[section]

    @property
    def name(self):
        return self["experiment"].get("name", "experiment")

    @property
    def seed(self):
        return self["experiment"].getint("seed", 0)

    @property
    def hash(self):
        return config_hash(self.text)

    def provenance(self, **extra):
        prov = {"experiment": self.name, "config_hash": self.hash, "seed": self.seed}
        prov.update(extra)
        return prov

    def _path(self, raw):
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self, override=None):
        raw = override or self["output"].get("dir", self.name)
        p = Path(raw)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not p.is_absolute():
            p = Path(root) / p
        return p

    def operator(self):
        sec = self["operator"]
        if "path" in sec:
            path = self._path(sec["path"])
            if not path.is_file():
                raise ConfigError("operator file %s does not exist" % path)
            A = load_operator(path)
        else:
            kind = sec.get("kind", "gaussian")
            try:
                m, n = sec.getint("m"), sec.getint("n")
            except ValueError as exc:
                raise ConfigError("operator m and n must be integers: %s" % exc) from None
            if m is None or n is None:
                raise ConfigError("[operator] needs m and n")
            seed = sec.getint("seed", self.seed)
            if kind == "gaussian":
                A = gen_gaussian_operator(m, n, seed)
            elif kind == "dct":
                p = sec.getint("p") if "p" in sec else None
                A = gen_dct_operator(m, n, p, seed)
            else:
                raise ConfigError("unknown operator kind %r" % kind)
        if "replace" in sec:
            A = modify_spectrum(A, _parse_replacements(sec["replace"]))
        return A

    def datasets(self, n=None):
        """``(train, test)`` datasets; ``test`` may be None."""
        sec = self["dataset"]
        source = sec.get("source", "synthetic_gaussian")
        seed = sec.getint("seed", self.seed)
        train_count = sec.getint("train_count", 1000)
        test_count = sec.getint("test_count", 0)
        if source == "synthetic_gaussian":
            if n is None:
                raise ConfigError("synthetic signals need the operator width")
            sigma = sec.getfloat("noise_sigma", 0.0)
            full = data_mod.sample_gaussian_signals(train_count + test_count, n, seed, sigma)
            if test_count == 0:
                return full, None
            return full.subset(np.arange(train_count)), full.subset(np.arange(train_count, train_count + test_count))
        if source == "mnist_bundled":
            images, labels = data_mod.bundled_mnist_subset()
            ds = data_mod.Dataset(
                data_mod.pixels_to_unit_range(images.reshape(len(images), -1)), data_mod.DataSource.MNIST,
                (1.0 / 127.5, -1.0), images.shape[1:], labels)
        elif source == "mnist_idx":
            if "images" not in sec:
                raise ConfigError("mnist_idx needs an images path")
            images = self._path(sec["images"])
            labels = self._path(sec["labels"]) if "labels" in sec else None
            for p in (images, labels):
                if p is not None and not p.is_file():
                    raise ConfigError("data file %s does not exist" % p)
            ds = data_mod.load_mnist_idx(images, labels)
        else:
            raise ConfigError("unknown dataset source %r" % source)
        ds = data_mod.downsample(ds, sec.getint("downsample", 1))
        if n is not None and ds.n != n:
            raise ConfigError("dataset signals have length %d but the operator expects %d" % (ds.n, n))
        if test_count == 0:
            return ds.subset(np.arange(min(train_count, len(ds)))), None
        if train_count + test_count > len(ds):
            raise ConfigError("asked for %d samples, dataset has %d" % (train_count + test_count, len(ds)))
        train, rest = data_mod.train_test_split(ds, train_count, seed)
        return train, rest.subset(np.arange(test_count))

    def _seeded(self, kwargs):
        kwargs.setdefault("seed", self.seed)
        return kwargs

    @property
    def trainer_kind(self):
        return self["trainer"].get("kind", "linear")

    def linear_config(self):
        return LinearTrainConfig(**self._seeded(_section_kwargs(self["trainer"], LinearTrainConfig, {"lam": "lambda"})))

    def adv_config(self):
        return AdvTrainConfig(**self._seeded(_section_kwargs(self["trainer"], AdvTrainConfig)))

    def optimizer_settings(self):
        return OptimizerSettings(**self._seeded(_section_kwargs(self["trainer"], OptimizerSettings)))

    def baseline_configs(self):
        sec = self["trainer"]
        out = []
        for name in _parse_list(sec.get("variants", "plain"), str):
            variant = BaselineVariant(name)
            cfg = BaselineConfig.with_default_strength(variant)
            if variant == BaselineVariant.WEIGHT_DECAY and "mu" in sec:
                cfg = BaselineConfig(variant, mu=sec.getfloat("mu"))
            if variant == BaselineVariant.PARSEVAL and "beta" in sec:
                cfg = BaselineConfig(variant, beta=sec.getfloat("beta"))
            out.append(cfg)
        return out

    def network_layout(self, n, m):
        sec = self["trainer"]
        f_hidden = _parse_list(sec.get("reconstructor_hidden", "256,256"), int)
        g_hidden = _parse_list(sec.get("generator_hidden", "64,64,64,64"), int)
        return [n, *f_hidden, n], [m, *g_hidden, m], sec.getint("init_seed", self.seed)

    def epsilons(self):
        return _parse_list(self["attack"].get("epsilons", "0"), float)

    def attack_config(self):
        kw = self._seeded(_section_kwargs(self["attack"], AttackConfig))
        kw.pop("epsilon", None)
        return AttackConfig(**kw)

    def test_samples(self):
        return self["attack"].getint("test_samples", 0)
