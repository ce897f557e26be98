# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""UI components for the dris CLI."""
