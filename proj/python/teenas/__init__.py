# SPDX-License-Identifier: Apache-2.0
"""TEE sub-network search, latency modelling and self-poisoning evaluation."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import __version__, load_experiment as _load_experiment


def load_experiment(path):
    """Validated experiment spec as a dict."""
    return _json.loads(_load_experiment(str(path)))
