// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>

#include "asymfuse/tensor.hpp"

namespace asymfuse {

// ATSR layout: "ATSR", u8 version (1), u8 rank, rank x u32 LE dims, then the
// payload as f64 LE in row-major order.
inline constexpr char kTensorMagic[4] = {'A', 'T', 'S', 'R'};
inline constexpr std::uint8_t kTensorVersion = 1;

void write_tensor(std::ostream& out, const Tensor& tensor);
/// Throws Error with kFormat, kVersion or kTruncated on malformed input.
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace asymfuse
