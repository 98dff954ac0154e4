#!/usr/bin/env python3
"""
Baseline Cache
Remembers the classical-selector gap per (instance, budget) so every
rollout on the same instance compares against the same number
"""

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

from .bnb_engine import Budget
from .lp_solver import LinearProgram, program_to_dict
from .performance_logger import log_info, log_warn, update_stats


@dataclass(frozen=True)
class BaselineEntry:
    gap: float
    nodes: int


def fingerprint(program: LinearProgram) -> str:
    """SHA-256 of the canonical instance JSON"""
    payload = json.dumps(program_to_dict(program), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def cache_key(program: LinearProgram, budget: Budget) -> str:
    return f"{fingerprint(program)}:{budget.max_nodes}:{budget.max_seconds}"


class BaselineCache:
    """
    Thread-safe store of baseline solves

    Reads are lock-free dict lookups; insertion is serialized so concurrent
    rollouts on one instance compute the baseline once.
    """

    def __init__(self, cache_file: Optional[str] = None):
        """
        Initialize baseline cache

        Args:
            cache_file: Optional JSON file for persistence across runs
        """
        self.cache_file = cache_file
        self.entries: Dict[str, BaselineEntry] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if cache_file:
            self._load_cache()

    def _load_cache(self) -> None:
        """Load existing entries from file"""
        if not os.path.exists(self.cache_file):
            log_info("BaselineCache", "No existing baseline cache found, starting fresh", "📋")
            return
        try:
            with open(self.cache_file, 'r', encoding='utf-8') as f:
                data = json.load(f)
            for key, entry in data.get("entries", {}).items():
                gap = math.inf if entry["gap"] is None else float(entry["gap"])
                self.entries[key] = BaselineEntry(gap=gap, nodes=int(entry["nodes"]))
            log_info("BaselineCache", f"Loaded {len(self.entries)} baselines from {self.cache_file}", "📋")
        except (json.JSONDecodeError, OSError, KeyError, TypeError, ValueError) as e:
            log_warn("BaselineCache", f"Could not load baseline cache: {e}")
            self.entries = {}

    def save(self) -> None:
        """Write entries to the cache file, if one is configured"""
        if not self.cache_file:
            return
        with self._lock:
            data = {
                "saved_at": time.time(),
                "entries": {
                    key: {"gap": e.gap if math.isfinite(e.gap) else None, "nodes": e.nodes}
                    for key, e in self.entries.items()
                },
            }
        tmp_path = f"{self.cache_file}.tmp"
        try:
            with open(tmp_path, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=2)
            os.replace(tmp_path, self.cache_file)
            log_info("BaselineCache", f"Saved {len(data['entries'])} baselines to {self.cache_file}", "💾")
        except OSError as e:
            log_warn("BaselineCache", f"Could not save baseline cache: {e}")

    def get(self, program: LinearProgram, budget: Budget) -> Optional[BaselineEntry]:
        return self.entries.get(cache_key(program, budget))

    def get_or_compute(self, program: LinearProgram, budget: Budget,
                       compute: Callable[[], BaselineEntry]) -> BaselineEntry:
        key = cache_key(program, budget)
        entry = self.entries.get(key)
        if entry is not None:
            with self._lock:
                self.hits += 1
            update_stats('baseline', cache_hits=1)
            return entry
        with self._lock:
            entry = self.entries.get(key)
            if entry is None:
                entry = compute()
                self.entries[key] = entry
                self.misses += 1
                update_stats('baseline', cache_misses=1)
            else:
                self.hits += 1
                update_stats('baseline', cache_hits=1)
            return entry

    def clear(self) -> None:
        """Forget every entry and remove the cache file"""
        with self._lock:
            self.entries = {}
            self.hits = self.misses = 0
        if self.cache_file and os.path.exists(self.cache_file):
            try:
                os.remove(self.cache_file)
                log_info("BaselineCache", "Cleared baseline cache", "🗑️")
            except OSError as e:
                log_warn("BaselineCache", f"Could not remove cache file: {e}")

    def stats(self) -> Dict[str, Any]:
        return {
            "entries": len(self.entries),
            "hits": self.hits,
            "misses": self.misses,
            "cache_file": self.cache_file,
            "cache_file_exists": bool(self.cache_file) and os.path.exists(self.cache_file),
        }
