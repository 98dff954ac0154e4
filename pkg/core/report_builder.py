#!/usr/bin/env python3
"""
Report building module
Renders benchmark rows and their summary into a standalone HTML page
"""

import math
import os
from typing import Any, Dict, Optional, Sequence

from jinja2 import Environment, FileSystemLoader, select_autoescape

from .metrics import BenchRow, BenchSummary
from .performance_logger import log_success, time_operation
from .profile_loader import abs_path


def _number(value: Any, digits: int = 3) -> str:
    if value is None:
        return "–"
    if isinstance(value, float):
        if math.isnan(value):
            return "–"
        if math.isinf(value):
            return "∞" if value > 0 else "-∞"
        return f"{value:.{digits}f}"
    return str(value)


def _reward_class(value: float) -> str:
    if value > 0:
        return "win"
    if value < 0:
        return "loss"
    return "tie"


def create_environment(template_dir: Optional[str] = None) -> Environment:
    env = Environment(
        loader=FileSystemLoader(template_dir or abs_path("templates")),
        autoescape=select_autoescape(['html', 'xml'])
    )
    env.filters['number'] = _number
    env.filters['reward_class'] = _reward_class
    return env


class ReportBuilder:
    """Handles report generation and template rendering"""

    def __init__(self, env: Optional[Environment] = None, output_dir: str = "."):
        self.env = env or create_environment()
        self.output_dir = output_dir

    def render(self, rows: Sequence[BenchRow], summary: Optional[BenchSummary],
               context: Optional[Dict[str, Any]] = None,
               template_name: str = "bench_report.html") -> str:
        template = self.env.get_template(template_name)
        return template.render(rows=list(rows), summary=summary, **(context or {}))

    def write_report(self, rows: Sequence[BenchRow], summary: Optional[BenchSummary],
                     output_path: str, context: Optional[Dict[str, Any]] = None) -> str:
        """
        Render and write a report.

        Args:
            rows: Benchmark rows in table order
            summary: Aggregate over the filtered rows, or None when nothing survived
            output_path: File name relative to output_dir, or an absolute path
            context: Extra template variables (title, selector, budget, seed)

        Returns:
            Path of the written file
        """
        with time_operation("report_generation", {"report": output_path}):
            html_content = self.render(rows, summary, context)

            full_path = os.path.join(self.output_dir, output_path)
            os.makedirs(os.path.dirname(os.path.abspath(full_path)), exist_ok=True)

            # Write with atomic operation
            temp_file = f"{full_path}.tmp"
            with open(temp_file, 'w', encoding='utf-8') as f:
                f.write(html_content)
            os.replace(temp_file, full_path)

        log_success("ReportBuilder", f"Generated report: {full_path}", "📄")
        return full_path
