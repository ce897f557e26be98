# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Entry point for `python -m dris`."""

from dris.cli.main import run


if __name__ == "__main__":
    run()
