#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmnet/params.hpp"
#include "fdmnet/tensor.hpp"

namespace fdmnet {

/// Malformed input file; `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& path, std::size_t offset, const std::string& what);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// 8-bit quantization used by every raster writer: round-half-up of 255 * clamp(v, 0, 1).
unsigned char quantize(double value);

// [H,W,1] -> PGM (P5), [H,W,3] -> PPM (P6). Values in [0,1].
void write_pnm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pnm(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor& image);
Tensor read_png(const std::filesystem::path& path);
// Dispatches on the extension (.pgm, .ppm, .pnm, .png).
void write_image(const std::filesystem::path& path, const Tensor& image);
Tensor read_image(const std::filesystem::path& path);

void write_fdmt(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_fdmt(const std::filesystem::path& path);

// Directory holding one FDMT file per tensor plus manifest.tsv (name, file, shape).
void save_tensors(const std::filesystem::path& dir, const NamedTensors& tensors);
// Overwrites the data of each tensor in place; names and shapes must match.
void load_tensors(const std::filesystem::path& dir, const NamedTensors& tensors);

}  // namespace fdmnet
