# File: settings.py
# Version: 1.2 (config.json + env overrides)

import json
import os
from typing import Any, Dict

_HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG_PATH = os.getenv("AM_PLANNER_CONFIG", os.path.join(_HERE, "config.json"))
PRESETS_DIR = os.getenv("AM_PLANNER_PRESETS", os.path.join(_HERE, "presets"))


def load_config(path: str = None) -> Dict[str, Any]:
    """Loads config.json; a missing or broken file means built-in defaults."""
    try:
        with open(path or CONFIG_PATH, "r", encoding="utf-8") as f:
            return json.load(f)
    except (FileNotFoundError, json.JSONDecodeError):
        print("⚠️ [CONFIG] config.json not found or invalid, using built-in defaults.")
        return {}


config = load_config()

QUIET = os.getenv("AM_PLANNER_QUIET", str(config.get("QUIET", "0"))) == "1"
THREADS = int(os.getenv("AM_PLANNER_THREADS", config.get("THREADS", os.cpu_count() or 1)))


def section(name: str) -> Dict[str, Any]:
    """Returns one block of config.json ({} if absent)."""
    block = config.get(name, {})
    return block if isinstance(block, dict) else {}


def log(tag: str, message: str):
    if not QUIET:
        print(f"[{tag}] {message}", flush=True)
