"""Pipeline configuration.

The config file is INI-style: ``[section]`` headers followed by ``key = value`` lines,
``#`` or ``;`` comments. Relative paths under ``[paths]`` and ``run.output`` resolve
against the config file's directory. Any value can be overridden on the command line
with ``--set section.key=value``. A stage manifest (JSON) can stand in for the config
file; its recorded configuration is then reused verbatim.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import ConfigError

CACHE_ENV = "THREATCAST_CACHE_DIR"

DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"seed": "13", "output": "out"},
    "paths": {
        "corpus": "", "votes": "", "expert": "", "unlabeled": "", "forecast_corpus": "",
        "nvd": "", "exploits": "", "page_cache": "", "lexicon": "", "embeddings": "",
    },
    "corpus": {
        "jaccard_threshold": "0.7", "lcs_ratio": "0.5", "dedup": "jaccard",
        "existence_counts": "", "existence_fractions": "0.6667,0.1667,0.1666",
        "severity_counts": "", "severity_fractions": "0.6104,0.1526,0.237",
    },
    "annotate": {"strict": "true", "min_agreement": "0.5"},
    "featurize": {"orders": "2,3,4", "min_count": "2", "max_len": "64"},
    "linmodel": {"learning_rate": "0.5", "epochs": "300", "l2": "1e-4", "backtrack": "true"},
    "glove": {"dim": "50", "window": "10", "x_max": "100", "alpha": "0.75",
              "learning_rate": "0.05", "epochs": "15", "min_count": "1"},
    "convnet": {"widths": "3,4,5", "filters": "100", "learning_rate": "0.001", "epochs": "5"},
    "linker": {"min_lead_days": "5", "max_lead_days": "365", "min_tweets": "3", "workers": "1",
               "timeout": "10", "per_host": "2"},
    "forecast": {"model": "cnn", "trials": "10", "ks": "10,50,100"},
    "insights": {"adjective_source": "nvd", "smoothing": "0.5", "top_k": "30", "min_lead": "1",
                 "account_min_tweets": "6", "score_floor": "0.5", "account_truth": "cvss"},
}


@dataclass
class PipelineConfig:
    values: dict[str, dict[str, str]]
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: str | os.PathLike | None, overrides: Iterable[str] = ()) -> "PipelineConfig":
        values = {s: dict(kv) for s, kv in DEFAULTS.items()}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} does not exist")
            base = path.resolve().parent
            if path.suffix == ".json":
                try:
                    recorded = json.loads(path.read_text(encoding="utf-8"))["config"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ConfigError(f"{path}: not a stage manifest ({exc})") from None
                for section, kv in recorded.items():
                    values.setdefault(section, {}).update({k: str(v) for k, v in kv.items()})
            else:
                parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
                try:
                    parser.read(path, encoding="utf-8")
                except configparser.Error as exc:
                    raise ConfigError(f"{path}: {exc}") from None
                for section in parser.sections():
                    if section not in values:
                        raise ConfigError(f"{path}: unknown section [{section}]")
                    for key, val in parser.items(section):
                        if key not in values[section]:
                            raise ConfigError(f"{path}: unknown key {section}.{key}")
                        values[section][key] = val
        cfg = cls(values, base)
        for item in overrides:
            cfg.set_override(item)
        cache = os.environ.get(CACHE_ENV)
        if cache:
            cfg.values["paths"]["page_cache"] = cache
        cfg._absolutize()
        return cfg

    def set_override(self, item: str) -> None:
        key, sep, val = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in self.values or name not in self.values[section]:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[section][name] = val.strip()

    def _absolutize(self) -> None:
        def fix(p: str) -> str:
            return str((self.base_dir / p).resolve()) if p and not os.path.isabs(p) else p

        for key, val in self.values["paths"].items():
            if key == "exploits":
                self.values["paths"][key] = ",".join(fix(v.strip()) for v in val.split(",") if v.strip())
            else:
                self.values["paths"][key] = fix(val)
        self.values["run"]["output"] = fix(self.values["run"]["output"])

    # typed accessors
    def get(self, section: str, key: str) -> str:
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError(f"unknown config key {section}.{key}") from None

    def get_int(self, section: str, key: str) -> int:
        try:
            return int(self.get(section, key))
        except ValueError:
            raise ConfigError(f"{section}.{key} must be an integer") from None

    def get_float(self, section: str, key: str) -> float:
        try:
            return float(self.get(section, key))
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a number") from None

    def get_bool(self, section: str, key: str) -> bool:
        val = self.get(section, key).lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key} must be a boolean")

    def get_list(self, section: str, key: str, cast=str) -> list:
        raw = self.get(section, key)
        try:
            return [cast(v.strip()) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"{section}.{key} has a malformed list") from None

    def path(self, key: str) -> Path | None:
        val = self.values["paths"][key]
        return Path(val) if val else None

    def require(self, *keys: str) -> dict[str, Path]:
        """Resolve required input paths, failing fast when any is unset or missing."""
        out = {}
        for key in keys:
            if key == "exploits":
                files = self.get_list("paths", "exploits")
                if not files:
                    raise ConfigError("paths.exploits is not set")
                for f in files:
                    if not Path(f).exists():
                        raise ConfigError(f"paths.exploits entry {f} does not exist")
                continue
            p = self.path(key)
            if p is None:
                raise ConfigError(f"paths.{key} is not set")
            if not p.exists():
                raise ConfigError(f"paths.{key} = {p} does not exist")
            out[key] = p
        return out

    @property
    def seed(self) -> int:
        return self.get_int("run", "seed")

    @property
    def output(self) -> Path:
        return Path(self.get("run", "output"))

    def canonical(self) -> dict[str, dict[str, str]]:
        return {s: dict(sorted(kv.items())) for s, kv in sorted(self.values.items())}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()
