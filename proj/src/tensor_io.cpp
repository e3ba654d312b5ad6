// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "asymfuse/error.hpp"

namespace asymfuse {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written in host order; big-endian hosts are unsupported");

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  require(in.gcount() == static_cast<std::streamsize>(n), ErrorCode::kTruncated,
          std::string("tensor stream truncated while reading ") + what);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& tensor) {
  const Shape& shape = tensor.shape();
  require(shape.size() <= std::numeric_limits<std::uint8_t>::max(), ErrorCode::kInvalidArgument,
          "tensor rank too large for ATSR");
  out.write(kTensorMagic, 4);
  const std::uint8_t header[2] = {kTensorVersion, static_cast<std::uint8_t>(shape.size())};
  out.write(reinterpret_cast<const char*>(header), 2);
  for (std::size_t d : shape) {
    require(d <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::kInvalidArgument,
            "dimension too large for ATSR");
    const auto d32 = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&d32), sizeof d32);
  }
  auto v = tensor.values();
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  require(out.good(), ErrorCode::kIo, "failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4, "magic");
  require(std::memcmp(magic, kTensorMagic, 4) == 0, ErrorCode::kFormat, "bad tensor magic");
  std::uint8_t header[2];
  read_exact(in, header, 2, "header");
  require(header[0] == kTensorVersion, ErrorCode::kVersion,
          "unsupported tensor version " + std::to_string(header[0]));
  Shape shape(header[1]);
  for (std::size_t& d : shape) {
    std::uint32_t d32 = 0;
    read_exact(in, &d32, sizeof d32, "dims");
    require(d32 > 0, ErrorCode::kFormat, "zero tensor dimension");
    d = d32;
  }
  if (shape.empty()) shape = {1};
  std::vector<double> values(numel(shape));
  read_exact(in, values.data(), values.size() * sizeof(double), "payload");
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  require(out.is_open(), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::kIo, "cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace asymfuse
