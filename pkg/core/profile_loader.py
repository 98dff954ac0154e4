#!/usr/bin/env python3
"""
Profile-specific settings loader
Profiles live in profiles/<name>/settings.py and override core/settings.py
"""

import os
import re
import importlib.util
from pathlib import Path
from types import ModuleType
from typing import Optional

from .performance_logger import log_info, log_warn


def get_project_root() -> Path:
    """Get the project root directory (cross-platform)"""
    return Path(__file__).parent.parent.resolve()


def abs_path(*parts) -> Path:
    """Create absolute path from project root (cross-platform)"""
    return (get_project_root() / Path(*parts)).resolve()


def validate_profile_name(profile: str) -> bool:
    """Validate profile name contains only safe characters and prevent path traversal"""
    if not profile:
        return False

    if not re.match(r'^[a-z0-9_-]+$', profile.lower()):
        return False

    if profile.startswith(('-', '_')) or profile.endswith(('-', '_')) or '--' in profile:
        return False

    try:
        profiles_dir = abs_path("profiles").resolve()
        profile_path = (profiles_dir / profile).resolve()
        common = Path(os.path.commonpath([str(profiles_dir), str(profile_path)]))
        if common != profiles_dir:
            return False
    except (ValueError, OSError):
        return False

    return True


def load_profile_settings(profile: Optional[str] = None) -> ModuleType:
    """
    Load profile-specific settings with fallback to core/settings.py

    Args:
        profile: Profile name (e.g., 'desk') or None for the core defaults

    Returns:
        Settings module object
    """
    if profile and not validate_profile_name(profile):
        raise ValueError(f"Invalid profile name: {profile}. Only alphanumeric, '-' and '_' allowed.")

    if profile:
        settings_path = abs_path("profiles", profile, "settings.py")

        if settings_path.exists():
            try:
                spec = importlib.util.spec_from_file_location(
                    f"profile_settings_{profile.replace('-', '_')}",
                    str(settings_path)
                )
                if spec and spec.loader:
                    profile_settings = importlib.util.module_from_spec(spec)
                    spec.loader.exec_module(profile_settings)
                    log_info("ProfileLoader", f"Loaded profile settings for {profile}", "✅")
                    return profile_settings
            except Exception as e:
                log_warn("ProfileLoader", f"Could not load profile {profile}: {e}; "
                         "falling back to core/settings.py")
        else:
            log_warn("ProfileLoader", f"No settings.py for profile {profile}; using core/settings.py")

    from . import settings as core_settings
    return core_settings


def list_available_profiles() -> list:
    """
    List all available profiles in the profiles/ directory

    Returns:
        List of profile names
    """
    profiles_dir = abs_path("profiles")

    if not profiles_dir.exists():
        return []

    return sorted(
        item.name for item in profiles_dir.iterdir()
        if item.is_dir() and validate_profile_name(item.name) and (item / "settings.py").exists()
    )
