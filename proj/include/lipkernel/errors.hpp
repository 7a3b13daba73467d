/*
 * Copyright 2026 The lipkernel authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace lipkernel {

struct NotPositiveDefinite : std::runtime_error {
    explicit NotPositiveDefinite(const std::string &msg) : std::runtime_error(msg) {}
};

struct NoConvergence : std::runtime_error {
    explicit NoConvergence(const std::string &msg) : std::runtime_error(msg) {}
};

struct NonPowerOfTwo : std::runtime_error {
    explicit NonPowerOfTwo(const std::string &msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string &msg) : std::runtime_error(msg) {}
};

struct NotScalarLoss : std::runtime_error {
    explicit NotScalarLoss(const std::string &msg) : std::runtime_error(msg) {}
};

struct StridedInput : std::runtime_error {
    explicit StridedInput(const std::string &msg) : std::runtime_error(msg) {}
};

struct StructureViolation : std::runtime_error {
    explicit StructureViolation(const std::string &msg) : std::runtime_error(msg) {}
};

struct ChannelMismatch : std::runtime_error {
    explicit ChannelMismatch(const std::string &msg) : std::runtime_error(msg) {}
};

struct NotDivisible : std::runtime_error {
    explicit NotDivisible(const std::string &msg) : std::runtime_error(msg) {}
};

struct TooFewRows : std::runtime_error {
    explicit TooFewRows(const std::string &msg) : std::runtime_error(msg) {}
};

struct ChainMismatch : std::runtime_error {
    explicit ChainMismatch(const std::string &msg) : std::runtime_error(msg) {}
};

struct InvalidGeometry : std::runtime_error {
    explicit InvalidGeometry(const std::string &msg) : std::runtime_error(msg) {}
};

struct InvalidParameter : std::runtime_error {
    explicit InvalidParameter(const std::string &msg) : std::runtime_error(msg) {}
};

struct BadMagic : std::runtime_error {
    explicit BadMagic(const std::string &msg) : std::runtime_error(msg) {}
};

struct CountMismatch : std::runtime_error {
    explicit CountMismatch(const std::string &msg) : std::runtime_error(msg) {}
};

struct TruncatedFile : std::runtime_error {
    explicit TruncatedFile(const std::string &msg) : std::runtime_error(msg) {}
};

struct DivergedLoss : std::runtime_error {
    explicit DivergedLoss(const std::string &msg) : std::runtime_error(msg) {}
};

struct ArchSyntaxError : std::runtime_error {
    size_t position;
    ArchSyntaxError(const std::string &msg, size_t pos)
        : std::runtime_error(msg + " (at position " + std::to_string(pos) + ")"), position(pos) {}
};

struct ArchShapeError : std::runtime_error {
    explicit ArchShapeError(const std::string &msg) : std::runtime_error(msg) {}
};

struct VersionMismatch : std::runtime_error {
    explicit VersionMismatch(const std::string &msg) : std::runtime_error(msg) {}
};

struct ChecksumMismatch : std::runtime_error {
    explicit ChecksumMismatch(const std::string &msg) : std::runtime_error(msg) {}
};

struct InvalidSpec : std::runtime_error {
    explicit InvalidSpec(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace lipkernel
