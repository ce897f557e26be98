# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""CLI commands for dris."""

from .certify import register_certify_commands
from .config import register_config_commands
from .data import register_data_commands
from .experiment import register_experiment_commands
from .proxies import register_proxy_commands
from .report import register_report_commands
from .score import register_score_commands
from .target import register_target_commands


__all__ = [
    "register_certify_commands",
    "register_config_commands",
    "register_data_commands",
    "register_experiment_commands",
    "register_proxy_commands",
    "register_report_commands",
    "register_score_commands",
    "register_target_commands",
]
