"""key=value config files that pin engine defaults.

Precedence is: built-in defaults < config file < explicit flags.  Lines
starting with `#` are comments; unknown keys are rejected so typos do not
silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class EngineConfig:
    rho: float = 0.05
    rho_text: float = 0.15
    spectrum_floor: float = 1e-4
    fov_deg: float = 80.0
    pixel_pitch_m: float = 0.000254
    pupil_diameter_m: float = 0.004
    eye_depth_m: float = 0.017
    wavelength_m: float = 550e-9
    cache_seconds: float = 3.0
    tile_px: int = 256
    pad_px: int = 16

    def apply_file(self, path) -> "EngineConfig":
        names = {f.name: f.type for f in fields(self)}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in names:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                cast = int if names[key] == "int" or names[key] is int else float
                setattr(self, key, cast(value))
        return self
