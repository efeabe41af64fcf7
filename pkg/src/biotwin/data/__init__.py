"""Packaged configuration data: example kinematic chains and marker sets."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

BUILTIN_CHAINS = ("planar_arm_2link", "lower_limb")


def chain_path(name: str) -> Path:
    """Filesystem path of a packaged chain JSON by short name."""
    if name not in BUILTIN_CHAINS:
        raise KeyError(f"unknown builtin chain {name!r}, have {BUILTIN_CHAINS}")
    return Path(str(resources.files(__package__) / "chains" / f"{name}.json"))


def markerset_path(name: str) -> Path:
    """Filesystem path of a packaged marker-set JSON by short name."""
    return Path(str(resources.files(__package__) / "markersets" / f"{name}.json"))
