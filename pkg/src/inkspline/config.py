"""Flat INI job configuration with sections per module.

The key set is fixed and validated; unknown sections or keys are rejected
with the line number where they appear, so experiment configs stay
diff-friendly and typo-safe.  Every key has a default, and a minimal config
(just a target) runs with the documented defaults.
"""

from __future__ import annotations

import configparser
from pathlib import Path


class ConfigError(ValueError):
    """Bad config file content; message carries the offending line."""


# section -> key -> (type, default)
SCHEMA = {
    "job": {
        "target": (str, None),
        "saliency": (str, None),
        "style": (str, None),
        "steps": (int, 300),
        "seed": (int, 0),
        "target_opacity": (float, 1.0),
        "keypoints": (int, 48),
        "areas": (int, 8),
        "multiplicity": (int, 1),
        "closed": (bool, False),
        "width_init": (float, 1.5),
    },
    "spline": {
        "degree": (int, 5),
        "samples_per_span": (int, 8),
    },
    "smoothing": {
        "order": (int, 3),
        "mode": (str, "exact"),
    },
    "losses": {
        "smooth": (float, 1.0),
        "box": (float, 1.0),
        "repul": (float, 1.0),
        "coverage": (float, 1.0),
        "overlap": (float, 1.0),
        "align": (float, 1.0),
        "balance": (float, 1.0),
        "ext": (float, 1.0),
    },
    "engine": {
        "lr_positions": (float, 1.0),
        "lr_widths": (float, 0.1),
        "lr_colors": (float, 0.02),
        "lr_logits": (float, 0.02),
        "lr_min": (float, 0.0),
        "width_min": (float, 0.0),
        "width_max": (float, 16.0),
        "pyramid_levels": (int, 4),
    },
    "palette": {
        "colors": (str, None),
        "k": (int, 4),
        "gumbel_beta": (float, 0.15),
        "tau_start": (float, 1.0),
        "tau_end": (float, 0.05),
    },
    "raster": {
        "aa_band": (float, 1.0),
        "smin_tau": (float, 0.25),
    },
}


def default_config() -> dict:
    return {
        section: {key: spec[1] for key, spec in keys.items()}
        for section, keys in SCHEMA.items()
    }


def _find_line(path: Path, token: str) -> int:
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(token):
            return lineno
    return 0


def _convert(section, key, raw, typ, path):
    try:
        if typ is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        line = _find_line(path, key)
        raise ConfigError(
            f"{path}:{line}: value {raw!r} for [{section}] {key} is not {typ.__name__}"
        ) from None


def load_config(path) -> dict:
    """Parse and validate a job config; returns {section: {key: value}}."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = default_config()
    for section in parser.sections():
        if section not in SCHEMA:
            line = _find_line(path, f"[{section}]")
            raise ConfigError(f"{path}:{line}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                line = _find_line(path, key)
                raise ConfigError(
                    f"{path}:{line}: unknown key {key!r} in section [{section}]"
                )
            typ = SCHEMA[section][key][0]
            values[section][key] = _convert(section, key, raw, typ, path)
    validate_config(values, path)
    return values


def validate_config(values: dict, path="config") -> None:
    degree = values["spline"]["degree"]
    order = values["smoothing"]["order"]
    if degree < 1:
        raise ConfigError(f"{path}: degree must be >= 1")
    if values["losses"]["smooth"] > 0 and not 1 <= order <= degree - 1:
        raise ConfigError(
            f"{path}: smoothing order {order} invalid for degree {degree} "
            f"(need 1 <= order <= degree - 1)"
        )
    if values["smoothing"]["mode"] not in ("exact", "pspline"):
        raise ConfigError(f"{path}: smoothing mode must be exact or pspline")
    for key, val in values["losses"].items():
        if val < 0:
            raise ConfigError(f"{path}: loss weight {key} must be >= 0")
    if values["job"]["steps"] < 1:
        raise ConfigError(f"{path}: steps must be >= 1")
    if values["engine"]["width_min"] < 0:
        raise ConfigError(f"{path}: width_min must be >= 0")
    if values["engine"]["width_max"] < values["engine"]["width_min"]:
        raise ConfigError(f"{path}: width_max must be >= width_min")
    if not values["palette"]["tau_start"] >= values["palette"]["tau_end"] > 0:
        raise ConfigError(f"{path}: need tau_start >= tau_end > 0")
