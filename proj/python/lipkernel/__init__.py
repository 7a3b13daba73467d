# Copyright 2026 The lipkernel authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Convolutional networks with built-in Lipschitz bounds from dissipative state-space layers."""

from _lipkernel import (
    Model,
    bench,
    canonical_arch,
    cosine_dataset,
    load_model,
    synthetic_mnist,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Model",
    "bench",
    "canonical_arch",
    "cosine_dataset",
    "load_model",
    "synthetic_mnist",
    "train",
]
