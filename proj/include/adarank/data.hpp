// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "adarank/model.hpp"
#include "adarank/rng.hpp"

namespace adarank {

std::uint64_t fnv1a64(std::string_view bytes);

/// Hashing tokenizer. Text is ASCII-lowercased and split on every byte that
/// is neither alphanumeric nor part of a multi-byte UTF-8 sequence; each
/// token maps to 2 + FNV-1a-64(token) mod (V - 2). Id 0 pads, id 1 marks an
/// empty input.
class Tokenizer {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnknown = 1;

  explicit Tokenizer(std::size_t vocab_size);

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::vector<std::string> split(std::string_view text) const;
  std::int32_t token_id(std::string_view token) const;
  /// Exactly max_len ids: truncated, or padded with kPad.
  std::vector<std::int32_t> tokenize(std::string_view text, std::size_t max_len) const;

 private:
  std::size_t vocab_size_;
};

struct Record {
  int label = 0;
  std::string text;

  friend bool operator==(const Record&, const Record&) = default;
};

enum class Split { Train, Test };

struct Dataset {
  std::string name;
  Split split = Split::Train;
  std::size_t num_classes = 0;
  std::vector<Record> records;

  std::size_t size() const noexcept { return records.size(); }
  void validate() const;
  std::vector<std::string> texts() const;
  std::vector<int> labels() const;
};

/// Reads a `label,text` CSV (RFC 4180 quoting). Errors name the offending line.
Dataset load_csv(const std::filesystem::path& file, std::size_t num_classes, Split split = Split::Train);
void write_csv(const std::filesystem::path& file, const Dataset& dataset);

/// Sentences used as the scoring input.
struct Corpus {
  std::vector<std::string> sentences;
};

/// The bundled generic scoring sentences.
Corpus generic_corpus();
/// One sentence per nonempty line.
Corpus load_corpus(const std::filesystem::path& file);
/// First `count` texts of the dataset after a seeded shuffle.
Corpus in_domain_corpus(const Dataset& dataset, std::uint64_t seed, std::size_t count = 10);

InputBatch make_batch(const Tokenizer& tokenizer, const std::vector<std::string>& texts, std::size_t max_len,
                      std::vector<int> labels = {});

/// Every record of the dataset as one labelled batch.
InputBatch encode(const Dataset& dataset, const Tokenizer& tokenizer, std::size_t max_len);

/// The given rows of `x`, in the given order, with their labels.
InputBatch select_rows(const InputBatch& x, const std::vector<std::size_t>& rows);

// ---------------------------------------------------------------------------
// Synthetic keyword-classification data.

struct SyntheticVocab {
  std::vector<std::vector<std::string>> class_keywords;  // disjoint per class
  std::vector<std::string> filler;                       // shared by all classes
};

/// Deterministic pronounceable pseudo-words; every word has a distinct token id under `tokenizer`.
SyntheticVocab make_synthetic_vocab(std::size_t num_classes, const Tokenizer& tokenizer,
                                    std::size_t keywords_per_class = 12, std::size_t filler_words = 64);

struct SyntheticLayout {
  std::size_t keywords_per_record = 3;
  std::size_t filler_per_record = 5;
};

/// Classes are assigned round-robin and then shuffled, so counts are balanced
/// to within one record. With probability `noise_rate` a record's label is
/// replaced by a uniformly drawn class (which may equal the original).
Dataset synthetic_dataset(std::size_t num_classes, std::size_t n, const SyntheticVocab& vocab, double noise_rate,
                          RngStream& rng, const SyntheticLayout& layout = {});

}  // namespace adarank
