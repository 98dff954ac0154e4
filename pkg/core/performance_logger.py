#!/usr/bin/env python3
"""
Performance Logging Module
Console logging with per-operation timing totals and solver counters,
shared by the engine, the trainer and the benchmark harness
"""

import sys
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, fields
from datetime import datetime
from enum import IntEnum
from typing import Any, Dict, Iterator, Optional, TextIO

import psutil


class Level(IntEnum):
    DEBUG = 10
    INFO = 20
    WARN = 30
    ERROR = 40


@dataclass
class OperationTimes:
    """Running totals for one named operation; individual calls are not kept"""
    count: int = 0
    total_time: float = 0.0
    min_time: float = float("inf")
    max_time: float = 0.0

    def add(self, duration: float) -> None:
        self.count += 1
        self.total_time += duration
        self.min_time = min(self.min_time, duration)
        self.max_time = max(self.max_time, duration)

    @property
    def avg_time(self) -> float:
        return self.total_time / self.count if self.count else 0.0


@dataclass
class RunStats:
    """Per-category counters; the ones in ACCUMULATED add up, the rest are gauges"""
    nodes_processed: int = 0
    lp_solves: int = 0
    lp_iterations: int = 0
    numerical_failures: int = 0
    episodes: int = 0
    episodes_dropped: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    parallel_workers: int = 0

    ACCUMULATED = (
        'nodes_processed', 'lp_solves', 'lp_iterations', 'numerical_failures',
        'episodes', 'episodes_dropped', 'cache_hits', 'cache_misses',
    )

    @property
    def cache_hit_rate(self) -> float:
        """Cache hit rate in percent"""
        lookups = self.cache_hits + self.cache_misses
        return 100.0 * self.cache_hits / lookups if lookups else 0.0


_STAT_NAMES = {f.name for f in fields(RunStats)}


def _format_value(value: Any) -> str:
    return f"{value:.4g}" if isinstance(value, float) else str(value)


def _format_duration(seconds: float) -> str:
    return f"({seconds * 1000:.1f}ms)" if seconds < 1.0 else f"({seconds:.2f}s)"


class PerformanceLogger:
    """Thread-safe logger, timer and counter store for one process"""

    def __init__(self, level: str = "INFO", stream: Optional[TextIO] = None):
        self._times: Dict[str, OperationTimes] = defaultdict(OperationTimes)
        self._stats: Dict[str, RunStats] = defaultdict(RunStats)
        self._running: Dict[str, tuple] = {}
        self._next_timer = 0
        self._lock = threading.RLock()
        self._started = time.perf_counter()
        self._peak_memory_mb = 0.0
        self.level = level
        self.stream = stream

    def set_level(self, level: str):
        """Change the minimum level that gets printed"""
        name = level.upper()
        if name not in Level.__members__:
            raise ValueError(f"Unknown log level: {level}")
        self.level = name

    def is_enabled(self, level: str) -> bool:
        return Level[level] >= Level[self.level]

    # -------------------------------------------------------------------------
    # Timing
    # -------------------------------------------------------------------------

    def start_timing(self, operation: str) -> str:
        """
        Start timing an operation

        Returns:
            Timer id for stop_timing
        """
        with self._lock:
            self._next_timer += 1
            timer_id = f"{operation}#{self._next_timer}"
            self._running[timer_id] = (operation, time.perf_counter())
            return timer_id

    def stop_timing(self, timer_id: str) -> Optional[float]:
        """Duration in seconds, or None for an unknown timer"""
        end = time.perf_counter()
        with self._lock:
            started = self._running.pop(timer_id, None)
            if started is None:
                return None
            operation, start = started
            duration = end - start
            self._times[operation].add(duration)
            return duration

    @contextmanager
    def time_operation(self, operation: str, metadata: Optional[Dict[str, Any]] = None) -> Iterator[None]:
        """Time the body under `operation`; metadata shows up in DEBUG output"""
        timer_id = self.start_timing(operation)
        try:
            yield
        finally:
            duration = self.stop_timing(timer_id)
            if metadata and duration is not None and self.is_enabled("DEBUG"):
                self.log_debug("Timer", operation, "⏱️", duration=duration, stats=metadata)

    def update_stats(self, category: str, **kwargs):
        """
        Update counters for a category ('bnb', 'training', 'baseline', ...)

        Unknown counter names are ignored.
        """
        with self._lock:
            stats = self._stats[category]
            for key, value in kwargs.items():
                if key not in _STAT_NAMES:
                    continue
                if key in RunStats.ACCUMULATED:
                    value += getattr(stats, key)
                setattr(stats, key, value)

    # -------------------------------------------------------------------------
    # Messages
    # -------------------------------------------------------------------------

    def log_structured(self, level: str, component: str, message: str,
                       emoji: str = "", duration: Optional[float] = None,
                       stats: Optional[Dict[str, Any]] = None):
        """
        Print one line: time, emoji, [component] message, duration, [key: value, ...]
        """
        if not self.is_enabled(level):
            return

        parts = [datetime.now().strftime("%H:%M:%S.%f")[:-3]]
        if emoji:
            parts.append(emoji)
        parts.append(f"[{component}] {message}")
        if duration is not None:
            parts.append(_format_duration(duration))
        if stats:
            joined = ", ".join(f"{k.replace('_', ' ')}: {_format_value(v)}" for k, v in stats.items())
            parts.append(f"[{joined}]")

        with self._lock:
            print(" ".join(parts), file=self.stream or sys.stderr)

    def log_info(self, component: str, message: str, emoji: str = "ℹ️", **kwargs):
        self.log_structured("INFO", component, message, emoji, **kwargs)

    def log_debug(self, component: str, message: str, emoji: str = "🔍", **kwargs):
        self.log_structured("DEBUG", component, message, emoji, **kwargs)

    def log_warn(self, component: str, message: str, emoji: str = "⚠️", **kwargs):
        self.log_structured("WARN", component, message, emoji, **kwargs)

    def log_error(self, component: str, message: str, emoji: str = "❌", **kwargs):
        self.log_structured("ERROR", component, message, emoji, **kwargs)

    def log_success(self, component: str, message: str, emoji: str = "✅", **kwargs):
        self.log_structured("INFO", component, message, emoji, **kwargs)

    def log_phase_start(self, component: str, phase: str, emoji: str = "🚀"):
        self.log_info(component, f"Starting {phase}...", emoji)

    def log_phase_complete(self, component: str, phase: str, duration: float, emoji: str = "✅", **stats):
        self.log_success(component, f"{phase} completed", emoji, duration=duration, stats=stats)

    # -------------------------------------------------------------------------
    # Summaries
    # -------------------------------------------------------------------------

    def get_memory_usage(self) -> float:
        """Resident set size in MB; also tracks the peak seen so far"""
        try:
            rss = psutil.Process().memory_info().rss / (1024 * 1024)
        except psutil.Error:
            return 0.0
        self._peak_memory_mb = max(self._peak_memory_mb, rss)
        return rss

    def get_timing_summary(self) -> Dict[str, Dict[str, float]]:
        with self._lock:
            return {
                name: {
                    'count': t.count,
                    'total_time': t.total_time,
                    'avg_time': t.avg_time,
                    'min_time': t.min_time,
                    'max_time': t.max_time,
                }
                for name, t in self._times.items() if t.count
            }

    def get_stats_summary(self) -> Dict[str, RunStats]:
        with self._lock:
            return dict(self._stats)

    def reset(self):
        """Forget all timings and counters"""
        with self._lock:
            self._times.clear()
            self._stats.clear()
            self._running.clear()
            self._started = time.perf_counter()
            self._peak_memory_mb = 0.0

    def print_run_summary(self):
        """Print wall time, memory, the slowest operations and every counter category"""
        out = self.stream or sys.stderr
        rule = "=" * 60
        with self._lock:
            elapsed = time.perf_counter() - self._started
            lines = ["", rule, "🎯 RUN PERFORMANCE SUMMARY", rule]

            if elapsed < 60:
                lines.append(f"⏱️  Total Time: {elapsed:.2f}s")
            else:
                lines.append(f"⏱️  Total Time: {int(elapsed // 60)}m {elapsed % 60:.1f}s")

            memory = self.get_memory_usage()
            if memory > 0:
                lines.append(f"💾 Memory Usage: {memory:.1f}MB (peak {self._peak_memory_mb:.1f}MB)")

            timings = sorted(self.get_timing_summary().items(), key=lambda kv: kv[1]['total_time'], reverse=True)
            if timings:
                lines.append("\n📊 TIME BREAKDOWN BY OPERATION:")
                for name, t in timings:
                    share = 100.0 * t['total_time'] / elapsed if elapsed > 0 else 0.0
                    lines.append(f"  • {name}: {t['total_time']:.2f}s ({share:.1f}%) - "
                                 f"{t['count']} ops, {t['avg_time'] * 1000:.1f}ms avg")

            if self._stats:
                lines.append("\n📈 COUNTERS:")
                for category, s in self._stats.items():
                    lines.append(f"  • {category}:")
                    if s.nodes_processed or s.lp_solves:
                        lines.append(f"    - Nodes: {s.nodes_processed}, LP solves: {s.lp_solves}, "
                                     f"LP iterations: {s.lp_iterations}, "
                                     f"numerical failures: {s.numerical_failures}")
                    if s.episodes or s.episodes_dropped:
                        lines.append(f"    - Episodes: {s.episodes} ({s.episodes_dropped} dropped)")
                    if s.cache_hits + s.cache_misses:
                        lines.append(f"    - Cache: {s.cache_hit_rate:.1f}% hit rate "
                                     f"({s.cache_hits} hits, {s.cache_misses} misses)")
                    if s.parallel_workers:
                        lines.append(f"    - Workers: {s.parallel_workers} parallel threads")

            lines.append(rule)
            print("\n".join(lines) + "\n", file=out)


# Process-wide instance; the helpers below log through it
logger = PerformanceLogger()

time_operation = logger.time_operation
update_stats = logger.update_stats
log_info = logger.log_info
log_debug = logger.log_debug
log_warn = logger.log_warn
log_error = logger.log_error
log_success = logger.log_success
log_phase_start = logger.log_phase_start
log_phase_complete = logger.log_phase_complete
print_run_summary = logger.print_run_summary
