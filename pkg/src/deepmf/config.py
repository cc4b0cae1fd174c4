"""Flat key-value run configuration with documented defaults.

Defaults equal the published protocol wherever it states a value: epochs
10/15, batch size 10, 2 s windows with a 0.4 s hop, 40 ms match
tolerance, operating thresholds 0.11 (deep-mf) and 0.90 (mf). Unknown
keys fail fast with the offending name.
"""

from __future__ import annotations

import hashlib
import json

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "config_version": CONFIG_VERSION,
    "seed": 0,
    # synthetic cohort
    "n_subjects": 36,
    "duration_s": 300.0,
    "fs": 500.0,
    "mean_hr_bpm": 60.0,
    "hr_variability": 8.0,
    "ear_attenuation": 0.1,
    "pink_sigma": 0.05,
    "drift_amp": 0.15,
    "mains_amp": 0.03,
    "impulse_rate": 0.25,
    # training
    "enc_dec_epochs": 10,
    "classifier_epochs": 15,
    "batch_size": 10,
    "lr": 1e-3,
    "template_init": True,
    "dropout_p": 0.5,
    # evaluation
    "tol_ms": 40.0,
    "deepmf_threshold": 0.11,
    "mf_threshold": 0.90,
    "threshold_start": 0.01,
    "threshold_stop": 0.99,
    "threshold_step": 0.01,
    # MF-HT acceptance rule
    "mfht_corr_weight": 1.0,
    "mfht_rr_weight": 0.5,
    "mfht_accept_threshold": 0.25,
    "mfht_smoothing_width": 5,
    "mfht_rr_window": 8,
}


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        raise ConfigError(f"config key {key!r} expects a boolean, got {value!r}")
    if isinstance(default, int):
        try:
            iv = int(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} expects an integer, got {value!r}") from exc
        return iv
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} expects a number, got {value!r}") from exc
    return value


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Merge defaults, an optional config/manifest file and overrides.

    The file may be either a flat config or a manifest written by a
    previous run (its "config" section is used), so any manifest can be
    replayed directly.
    """
    cfg = dict(DEFAULTS)
    if path is not None:
        with open(path) as f:
            raw = json.load(f)
        if "config" in raw and isinstance(raw["config"], dict):
            raw = raw["config"]
        version = raw.get("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {version}")
        for key, value in raw.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, value)
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_manifest(path, command: str, cfg: dict, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config_version": CONFIG_VERSION,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "outputs": sorted(outputs),
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def thresholds_from(cfg: dict) -> list[float]:
    import numpy as np

    start, stop, step = cfg["threshold_start"], cfg["threshold_stop"], cfg["threshold_step"]
    if step <= 0 or stop < start:
        raise ConfigError("threshold grid must have step > 0 and stop >= start")
    n = int(round((stop - start) / step)) + 1
    return [float(v) for v in np.round(np.linspace(start, stop, n), 10)]
