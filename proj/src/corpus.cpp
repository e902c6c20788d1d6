#include <algorithm>
#include <numeric>

#include "axlab/data.hpp"

namespace axlab {

std::vector<std::vector<double>> markov_transitions(std::uint64_t seed, std::size_t vocab) {
  if (vocab == 0) throw PreconditionError("markov_transitions: vocab must be positive");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> weight(0.2, 1.0);
  std::vector<std::vector<double>> t(vocab, std::vector<double>(vocab, 0.0));
  std::vector<std::size_t> order(vocab);
  for (std::size_t s = 0; s < vocab; ++s) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t fanout = std::min<std::size_t>(3, vocab);
    double total = 0.0;
    for (std::size_t k = 0; k < fanout; ++k) {
      t[s][order[k]] = weight(rng);
      total += t[s][order[k]];
    }
    for (double& p : t[s]) p /= total;
  }
  return t;
}

std::vector<int> generate_synthetic_corpus(CorpusKind kind, std::uint64_t seed, std::size_t length,
                                           const CorpusOptions& options) {
  if (length == 0) throw PreconditionError("generate_synthetic_corpus: length must be positive");
  if (options.vocab == 0 || options.vocab > 256) throw PreconditionError("generate_synthetic_corpus: vocab in [1,256]");
  std::vector<int> out(length);
  if (kind == CorpusKind::copy_task) {
    if (options.period == 0) throw PreconditionError("generate_synthetic_corpus: period must be positive");
    std::mt19937_64 rng(seed);
    std::vector<int> symbols(options.vocab);
    std::iota(symbols.begin(), symbols.end(), 0);
    std::vector<int> pattern;
    while (pattern.size() < options.period) {
      std::shuffle(symbols.begin(), symbols.end(), rng);
      const std::size_t take = std::min(symbols.size(), options.period - pattern.size());
      pattern.insert(pattern.end(), symbols.begin(), symbols.begin() + static_cast<std::ptrdiff_t>(take));
    }
    for (std::size_t t = 0; t < length; ++t) out[t] = pattern[t % options.period];
    return out;
  }
  const auto trans = markov_transitions(seed, options.vocab);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t state = std::uniform_int_distribution<std::size_t>(0, options.vocab - 1)(rng);
  for (std::size_t t = 0; t < length; ++t) {
    out[t] = static_cast<int>(state);
    const double r = u(rng);
    double acc = 0.0;
    std::size_t next = options.vocab - 1;
    for (std::size_t s = 0; s < options.vocab; ++s) {
      acc += trans[state][s];
      if (r < acc) {
        next = s;
        break;
      }
    }
    while (trans[state][next] == 0.0) --next;  // rounding at the top of the cumulative sum
    state = next;
  }
  return out;
}

TokenBatch sample_token_batch(std::span<const int> corpus, std::size_t batch_size, std::size_t seq_len,
                              std::mt19937_64& rng) {
  if (corpus.size() < seq_len + 1) throw PreconditionError("sample_token_batch: corpus shorter than one window");
  std::uniform_int_distribution<std::size_t> start(0, corpus.size() - seq_len - 1);
  TokenBatch b;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t s = start(rng);
    b.inputs.emplace_back(corpus.begin() + static_cast<std::ptrdiff_t>(s),
                          corpus.begin() + static_cast<std::ptrdiff_t>(s + seq_len));
    b.targets.emplace_back(corpus.begin() + static_cast<std::ptrdiff_t>(s + 1),
                           corpus.begin() + static_cast<std::ptrdiff_t>(s + seq_len + 1));
  }
  return b;
}

TokenBatch fixed_token_batch(std::span<const int> corpus, std::size_t max_windows, std::size_t seq_len) {
  if (corpus.size() < seq_len + 1) throw PreconditionError("fixed_token_batch: corpus shorter than one window");
  const std::size_t span = corpus.size() - seq_len - 1;
  const std::size_t windows = std::max<std::size_t>(1, std::min(max_windows, span + 1));
  TokenBatch b;
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t s = windows == 1 ? 0 : w * span / (windows - 1);
    b.inputs.emplace_back(corpus.begin() + static_cast<std::ptrdiff_t>(s),
                          corpus.begin() + static_cast<std::ptrdiff_t>(s + seq_len));
    b.targets.emplace_back(corpus.begin() + static_cast<std::ptrdiff_t>(s + 1),
                           corpus.begin() + static_cast<std::ptrdiff_t>(s + seq_len + 1));
  }
  return b;
}

PatchBatch generate_patch_dataset(std::uint64_t seed, std::size_t examples, std::size_t n_patches,
                                  std::size_t patch_dim, std::size_t n_classes) {
  if (n_patches == 0 || patch_dim == 0 || n_classes == 0) {
    throw PreconditionError("generate_patch_dataset: sizes must be positive");
  }
  // Prototypes depend only on the class layout so train and validation splits agree.
  std::mt19937_64 proto_rng(0x5eedULL + n_classes * 131 + patch_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> prototypes(n_classes, std::vector<double>(patch_dim));
  for (auto& p : prototypes)
    for (double& v : p) v = 2.0 * normal(proto_rng);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cls(0, n_classes - 1);
  std::uniform_int_distribution<std::size_t> pos(0, n_patches - 1);
  PatchBatch out;
  for (std::size_t e = 0; e < examples; ++e) {
    const std::size_t c = cls(rng);
    const std::size_t where = pos(rng);
    Tensor x(n_patches, patch_dim);
    auto v = x.mutable_values();
    for (double& z : v) z = 0.5 * normal(rng);
    for (std::size_t d = 0; d < patch_dim; ++d) v[where * patch_dim + d] += prototypes[c][d];
    out.patches.push_back(x);
    out.labels.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace axlab
