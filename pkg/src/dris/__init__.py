# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""dris - disagreement-regularized importance sampling."""

from importlib.metadata import version


__version__ = version("dris")
VERSION = __version__
