#include <fstream>
#include <iterator>

#include "axlab/data.hpp"

namespace axlab {

CifarBatch parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("cifar10: size " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  CifarBatch batch;
  batch.labels.reserve(n);
  batch.images.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto record = bytes.subspan(r * kCifarRecordBytes, kCifarRecordBytes);
    if (record[0] > 9) {
      throw FormatError("cifar10: record " + std::to_string(r) + " has label " + std::to_string(record[0]));
    }
    batch.labels.push_back(record[0]);
    std::vector<double> image(kCifarImageBytes);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) image[i] = record[1 + i] / 255.0;
    batch.images.push_back(std::move(image));
  }
  return batch;
}

CifarBatch load_cifar10_batch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cifar10: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_cifar10(bytes);
}

void write_cifar10_batch(const std::filesystem::path& path, std::span<const CifarRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cifar10: cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    out.put(static_cast<char>(r.label));
    out.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  }
  if (!out) throw IoError("cifar10: write failed for " + path.string());
}

Tensor image_to_patches(std::span<const double> image, std::size_t patch) {
  constexpr std::size_t side = 32;
  if (image.size() != kCifarImageBytes) throw DimensionError("image_to_patches: expected 3072 values");
  if (patch == 0 || side % patch != 0) throw PreconditionError("image_to_patches: patch must divide 32");
  const std::size_t per_side = side / patch;
  const std::size_t width = patch * patch * 3;
  Tensor out(per_side * per_side, width);
  auto v = out.mutable_values();
  for (std::size_t py = 0; py < per_side; ++py)
    for (std::size_t px = 0; px < per_side; ++px) {
      const std::size_t row = py * per_side + px;
      std::size_t col = 0;
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < patch; ++y)
          for (std::size_t x = 0; x < patch; ++x)
            v[row * width + col++] = image[ch * side * side + (py * patch + y) * side + (px * patch + x)];
    }
  return out;
}

}  // namespace axlab
