#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "axlab/transformer.hpp"

namespace axlab {

namespace {

constexpr std::array<char, 4> kMagic{'A', 'X', 'L', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw FormatError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void put_u32(std::ostream& out, std::size_t v) { put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v)); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  const ModelConfig& c = model.config();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::size_t>(c.task));
  put_u32(out, c.n_layers);
  put_u32(out, c.d_model);
  put_u32(out, c.heads);
  put_u32(out, c.d_ff);
  put_u32(out, c.vocab_size);
  put_u32(out, c.patch_dim);
  put_u32(out, c.n_classes);
  put_u32(out, c.max_seq_len);
  put_u32(out, static_cast<std::size_t>(c.variant));
  put_u32(out, static_cast<std::size_t>(c.mask));
  put_le<std::uint64_t>(out, c.seed);
  put_le<double>(out, c.gamma);
  put_le<std::uint64_t>(out, model.parameter_count());
  for (const auto& p : model.parameters())
    for (double v : p.values()) put_le<double>(out, v);
  if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("checkpoint: bad magic");
  ModelConfig c;
  const auto task = get_le<std::uint32_t>(in);
  if (task > 1) throw FormatError("checkpoint: unknown task " + std::to_string(task));
  c.task = static_cast<Task>(task);
  c.n_layers = get_le<std::uint32_t>(in);
  c.d_model = get_le<std::uint32_t>(in);
  c.heads = get_le<std::uint32_t>(in);
  c.d_ff = get_le<std::uint32_t>(in);
  c.vocab_size = get_le<std::uint32_t>(in);
  c.patch_dim = get_le<std::uint32_t>(in);
  c.n_classes = get_le<std::uint32_t>(in);
  c.max_seq_len = get_le<std::uint32_t>(in);
  const auto variant = get_le<std::uint32_t>(in);
  const auto mask = get_le<std::uint32_t>(in);
  if (variant > 1 || mask > 3) throw FormatError("checkpoint: unknown variant or mask code");
  c.variant = static_cast<Variant>(variant);
  c.mask = static_cast<MaskMode>(mask);
  c.seed = get_le<std::uint64_t>(in);
  c.gamma = get_le<double>(in);
  const auto count = get_le<std::uint64_t>(in);

  Model model(c);
  if (count != model.parameter_count()) {
    throw FormatError("checkpoint: parameter count " + std::to_string(count) + " does not match configuration (" +
                      std::to_string(model.parameter_count()) + ")");
  }
  for (auto p : model.parameters())
    for (double& v : p.mutable_values()) v = get_le<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return model;
}

}  // namespace axlab
