# Copyright 2026 The PCNN Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Desk-scale PCNN facial expression recognition."""

import sys

from ._core import (
    CLASS_NAMES,
    Error,
    InvalidConfig,
    InvalidLabel,
    InvalidShape,
    Model,
    face_regions,
    grid_sample,
    gradcheck,
    main,
    region_index_map,
    resolve_config,
    synthetic_faces,
)

__all__ = [
    "CLASS_NAMES",
    "Error",
    "InvalidConfig",
    "InvalidLabel",
    "InvalidShape",
    "Model",
    "cli",
    "face_regions",
    "grid_sample",
    "gradcheck",
    "main",
    "region_index_map",
    "resolve_config",
    "synthetic_faces",
]


def cli() -> int:
    """Console entry point."""
    return main(sys.argv[1:])
