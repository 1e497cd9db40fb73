"""Bundled MATPOWER cases plus scenario, direction and sweep documents."""

from importlib import resources
from pathlib import Path


def bundled(name):
    """Filesystem path of a bundled file, e.g. ``bundled("case14_scenario.json")``."""
    return Path(str(resources.files(__name__).joinpath(name)))


def names():
    return sorted(p.name for p in resources.files(__name__).iterdir() if p.name.endswith((".m", ".json")))
