# Copyright 2026 The commgbdt Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the commgbdt C++ library."""

import json

from commgbdt._core import (
    InvalidArgument,
    ProtocolResult,
    QuantileSummary,
    RandomSource,
    allreduce_sum,
    build_summary,
    build_summary_with_offset,
    coalesce,
    fit_boost,
    flat_protocol,
    flat_step,
    goss_error_bound,
    rank_exact,
    tree_base_step,
    tree_protocol,
    tree_protocol_file,
    variance_gain_exact,
    variance_gain_goss,
    variance_gain_ws,
    weighted_sample,
    ws_error_bound,
)
from commgbdt import _core


def run_quantile_trials(protocol, eps, delta, trials, seed, **kwargs):
    """Repeated protocol runs on one generated dataset; returns the report as a dict."""
    return json.loads(_core.run_quantile_trials(protocol, eps, delta, trials, seed, **kwargs))


def run_gain_trials(a, b, delta, trials, seed, **kwargs):
    """Weighted sampling vs GOSS over a split grid; returns the report as a dict."""
    return json.loads(_core.run_gain_trials(a, b, delta, trials, seed, **kwargs))


__all__ = [
    "InvalidArgument",
    "ProtocolResult",
    "QuantileSummary",
    "RandomSource",
    "allreduce_sum",
    "build_summary",
    "build_summary_with_offset",
    "coalesce",
    "fit_boost",
    "flat_protocol",
    "flat_step",
    "goss_error_bound",
    "rank_exact",
    "run_gain_trials",
    "run_quantile_trials",
    "tree_base_step",
    "tree_protocol",
    "tree_protocol_file",
    "variance_gain_exact",
    "variance_gain_goss",
    "variance_gain_ws",
    "weighted_sample",
    "ws_error_bound",
]
