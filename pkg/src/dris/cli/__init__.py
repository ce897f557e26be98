# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""CLI module for dris."""
