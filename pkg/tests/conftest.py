import copy
from pathlib import Path
from typing import Any, Callable, Dict

import pytest
import yaml

BASE_CONFIG: Dict[str, Any] = {
    "seed": 7,
    "model": {
        "bounds": {"L": 1.0, "U": 2.0},
        "grid": {"horizon": 1.0, "n_steps": 8},
        "eta": {"kind": "constant", "value": 1.5},
        "intensity": {"kind": "constant", "value": 1.0},
        "jumps": {"atoms": [1.0], "probs": [1.0]},
    },
    "solver": {
        "mode": "counting",
        "tol": 1.0e-6,
        "max_iter": 20,
        "mc_paths": 1000,
        "max_jumps": 10,
    },
    "verify": {
        "n_paths": 500,
        "probe_times": [1.0],
        "tests": ["projection", "consistency"],
        "tv_limit": 0.1,
        "demo_paths": 200,
        "demo_steps": 8,
        "demo_mc_paths": 1000,
    },
    "output": {"directory": "outputs", "formats": ["csv", "jsonl"]},
    "runtime": {"threads": 1},
}


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        tagged = isinstance(value, dict) and "kind" in value
        if isinstance(value, dict) and not tagged and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@pytest.fixture
def config_factory(tmp_path: Path) -> Callable[..., Path]:
    """
    Writes a small experiment file into tmp_path. Keyword arguments are merged
    section by section into the base config; a value of None drops the key and
    a mapping with a `kind` replaces the one it overrides.
    """

    def write(name: str = "experiment.yaml", **overrides: Any) -> Path:
        data = _merge(BASE_CONFIG, overrides)
        data["output"]["directory"] = str(tmp_path / "outputs")
        for section in list(data.values()):
            if isinstance(section, dict):
                for key in [k for k, v in section.items() if v is None]:
                    del section[key]
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False))
        return path

    return write
