#pragma once

// Synthetic training data and the CIFAR-10 binary reader.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "axlab/config.hpp"
#include "axlab/tensor.hpp"
#include "axlab/transformer.hpp"

namespace axlab {

struct CorpusOptions {
  std::size_t vocab = 16;
  std::size_t period = 8;  // copy-task only
};

/// Deterministic token sequence with values in [0, vocab).
///
/// copy-task: a random pattern of `period` tokens (distinct when period <= vocab)
/// repeated, so tokens[t] == tokens[t + period] for every t.
/// markov-chars: a first-order Markov chain drawn from markov_transitions(seed, vocab).
std::vector<int> generate_synthetic_corpus(CorpusKind kind, std::uint64_t seed, std::size_t length,
                                           const CorpusOptions& options = {});

/// Row-stochastic vocab x vocab matrix; each row has three successors.
std::vector<std::vector<double>> markov_transitions(std::uint64_t seed, std::size_t vocab);

/// batch_size random windows of seq_len + 1 tokens, split into inputs and
/// next-token targets.
TokenBatch sample_token_batch(std::span<const int> corpus, std::size_t batch_size, std::size_t seq_len,
                              std::mt19937_64& rng);

/// Up to max_windows windows at evenly spaced, deterministic offsets.
TokenBatch fixed_token_batch(std::span<const int> corpus, std::size_t max_windows, std::size_t seq_len);

/// Classification examples of n_patches x patch_dim Gaussian noise where one
/// random patch also carries the class prototype.
PatchBatch generate_patch_dataset(std::uint64_t seed, std::size_t examples, std::size_t n_patches,
                                  std::size_t patch_dim, std::size_t n_classes);

// ---- CIFAR-10 ---------------------------------------------------------------

inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarImageBytes;

struct CifarRecord {
  std::uint8_t label = 0;
  std::array<std::uint8_t, kCifarImageBytes> pixels{};  // R plane, G plane, B plane; each 32x32 row-major
};

struct CifarBatch {
  std::vector<int> labels;
  std::vector<std::vector<double>> images;  // 3072 values in [0, 1], same layout as the file
};

CifarBatch parse_cifar10(std::span<const std::uint8_t> bytes);
CifarBatch load_cifar10_batch(const std::filesystem::path& path);
void write_cifar10_batch(const std::filesystem::path& path, std::span<const CifarRecord> records);

/// Splits a planar 32x32x3 image into (32/patch)^2 row-major patches of
/// patch*patch*3 values (channel-major within a patch).
Tensor image_to_patches(std::span<const double> image, std::size_t patch);

}  // namespace axlab
