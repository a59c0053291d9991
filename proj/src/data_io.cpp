#include "fdmnet/data_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace fdmnet {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "FDMT I/O assumes a little-endian host");

FormatError::FormatError(const std::string& path, std::size_t offset, const std::string& what)
    : std::runtime_error(path + ": byte " + std::to_string(offset) + ": " + what), offset_(offset) {}

unsigned char quantize(double value) {
  double v = std::clamp(value, 0.0, 1.0) * 255.0;
  return static_cast<unsigned char>(std::floor(v + 0.5));
}

namespace {

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void require_raster(const Tensor& image, const char* who) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3) || image.numel() == 0) {
    throw std::invalid_argument(std::string(who) + ": expected [H,W,1] or [H,W,3], got " +
                                shape_string(image.shape()));
  }
}

std::string lower_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

void write_pnm(const fs::path& path, const Tensor& image) {
  require_raster(image, "write_pnm");
  std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  std::string header = (C == 1 ? "P5\n" : "P6\n") + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (double v : image.data()) bytes.push_back(quantize(v));
  write_bytes(path, bytes.data(), bytes.size());
}

Tensor read_pnm(const fs::path& path) {
  auto bytes = read_bytes(path);
  std::string name = path.string();
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* field) {
    skip_space();
    std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw FormatError(name, start, std::string("expected ") + field);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError(name, 0, "not a binary PGM/PPM (expected P5 or P6)");
  }
  std::size_t C = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  std::size_t W = read_uint("width"), H = read_uint("height"), maxval = read_uint("maxval");
  if (maxval != 255) throw FormatError(name, pos, "only maxval 255 is supported");
  if (W == 0 || H == 0) throw FormatError(name, pos, "empty raster");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError(name, pos, "missing whitespace before pixel data");
  }
  ++pos;
  std::size_t need = H * W * C;
  if (bytes.size() - pos < need) {
    throw FormatError(name, bytes.size(), "pixel data truncated: expected " + std::to_string(need) +
                                              " bytes, found " + std::to_string(bytes.size() - pos));
  }
  std::vector<double> v(need);
  for (std::size_t i = 0; i < need; ++i) v[i] = bytes[pos + i] / 255.0;
  return Tensor::from({H, W, C}, std::move(v));
}

void write_png(const fs::path& path, const Tensor& image) {
  require_raster(image, "write_png");
  std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = C == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> px(image.numel());
  auto x = image.data();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(x[i]);
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, px.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write " + path.string() + ": " + img.message);
  }
}

Tensor read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw FormatError(path.string(), 0, std::string("not a readable PNG: ") + img.message);
  }
  bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::size_t H = img.height, W = img.width, C = gray ? 1 : 3;
  std::vector<unsigned char> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError(path.string(), 0, "PNG decode failed: " + msg);
  }
  std::vector<double> v(H * W * C);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = px[i] / 255.0;
  return Tensor::from({H, W, C}, std::move(v));
}

void write_image(const fs::path& path, const Tensor& image) {
  auto ext = lower_extension(path);
  if (ext == ".png") return write_png(path, image);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return write_pnm(path, image);
  throw std::invalid_argument("unsupported image extension: " + path.string());
}

Tensor read_image(const fs::path& path) {
  auto ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  throw std::invalid_argument("unsupported image extension: " + path.string());
}

void write_fdmt(const fs::path& path, const Tensor& tensor) {
  std::vector<unsigned char> out{'F', 'D', 'M', 'T'};
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  put_u32(static_cast<std::uint32_t>(tensor.rank()));
  for (auto d : tensor.shape()) put_u32(static_cast<std::uint32_t>(d));
  auto x = tensor.data();
  std::size_t base = out.size();
  out.resize(base + x.size() * sizeof(double));
  if (!x.empty()) std::memcpy(out.data() + base, x.data(), x.size() * sizeof(double));
  write_bytes(path, out.data(), out.size());
}

Tensor read_fdmt(const fs::path& path) {
  auto bytes = read_bytes(path);
  std::string name = path.string();
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "FDMT", 4) != 0) {
    throw FormatError(name, 0, "missing FDMT magic");
  }
  std::size_t pos = 4;
  auto get_u32 = [&](const char* field) {
    if (bytes.size() - pos < 4) throw FormatError(name, pos, std::string("truncated ") + field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  std::uint32_t rank = get_u32("rank");
  if (rank > 16) throw FormatError(name, 4, "implausible rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_u32("dimension"));
  std::size_t expected = numel(shape) * sizeof(double);
  std::size_t actual = bytes.size() - pos;
  if (actual != expected) {
    throw FormatError(name, pos, "payload length mismatch: expected " + std::to_string(expected) +
                                     " bytes, found " + std::to_string(actual));
  }
  std::vector<double> v(numel(shape));
  if (!v.empty()) std::memcpy(v.data(), bytes.data() + pos, expected);
  return Tensor::from(std::move(shape), std::move(v));
}

namespace {

std::string file_name_for(const std::string& name) {
  std::string out = name;
  for (auto& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '-') c = '_';
  return out + ".fdmt";
}

}  // namespace

void save_tensors(const fs::path& dir, const NamedTensors& tensors) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "name\tfile\tshape\n";
  for (const auto& t : tensors) {
    auto file = file_name_for(t.name);
    write_fdmt(dir / file, t.tensor);
    manifest << t.name << '\t' << file << '\t' << shape_string(t.tensor.shape()) << '\n';
  }
  auto text = manifest.str();
  write_bytes(dir / "manifest.tsv", text.data(), text.size());
}

void load_tensors(const fs::path& dir, const NamedTensors& tensors) {
  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw std::runtime_error("checkpoint manifest missing: " + (dir / "manifest.tsv").string());
  std::map<std::string, std::string> files;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    auto tab2 = line.find('\t', tab + 1);
    if (tab == std::string::npos || tab2 == std::string::npos) {
      throw std::runtime_error("malformed manifest line: " + line);
    }
    files[line.substr(0, tab)] = line.substr(tab + 1, tab2 - tab - 1);
  }
  for (const auto& t : tensors) {
    auto it = files.find(t.name);
    if (it == files.end()) throw std::runtime_error("checkpoint lacks tensor " + t.name);
    auto loaded = read_fdmt(dir / it->second);
    if (loaded.shape() != t.tensor.shape()) {
      throw std::runtime_error("tensor " + t.name + ": checkpoint shape " +
                               shape_string(loaded.shape()) + " != model shape " +
                               shape_string(t.tensor.shape()));
    }
    Tensor target = t.tensor;
    auto dst = target.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
  }
  if (files.size() != tensors.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(files.size()) +
                             " tensors, model expects " + std::to_string(tensors.size()));
  }
}

}  // namespace fdmnet
