// SPDX-License-Identifier: Apache-2.0

#include "adarank/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace adarank {

namespace {

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

unsigned char to_lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c; }

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

[[noreturn]] void csv_error(const std::filesystem::path& file, std::size_t line, const std::string& what) {
  throw std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + what);
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRow> parse_csv(const std::string& text, const std::filesystem::path& file) {
  std::vector<CsvRow> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      field.clear();
      if (i < n && text[i] == '"') {
        ++i;
        while (true) {
          if (i >= n) csv_error(file, row.line, "unterminated quoted field");
          const char c = text[i++];
          if (c == '"') {
            if (i < n && text[i] == '"') {
              field.push_back('"');
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
          }
        }
        if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          csv_error(file, line, "unexpected character after closing quote");
        }
      } else {
        while (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          if (text[i] == '"') csv_error(file, line, "quote inside unquoted field");
          field.push_back(text[i++]);
        }
      }
      row.fields.push_back(field);
      if (i < n && text[i] == ',') {
        ++i;
        continue;
      }
      if (i < n && text[i] == '\r') ++i;
      if (i < n && text[i] == '\n') {
        ++i;
        ++line;
      }
      done = true;
    }
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;  // blank line
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

template <class T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(v[i - 1], v[j]);
  }
}

std::string pseudo_word(std::uint64_t index) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  constexpr std::uint64_t kSyllables = kConsonants.size() * kVowels.size();
  std::uint64_t x = (index * 7919 + 101) % (kSyllables * kSyllables * kSyllables);
  std::string out;
  for (int s = 0; s < 3; ++s) {
    const std::uint64_t syl = x % kSyllables;
    x /= kSyllables;
    out.push_back(kConsonants[syl / kVowels.size()]);
    out.push_back(kVowels[syl % kVowels.size()]);
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Tokenizer::Tokenizer(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 3) throw std::invalid_argument("vocab_size must be >= 3");
}

std::vector<std::string> Tokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      cur.push_back(static_cast<char>(to_lower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::int32_t Tokenizer::token_id(std::string_view token) const {
  return static_cast<std::int32_t>(2 + fnv1a64(token) % (vocab_size_ - 2));
}

std::vector<std::int32_t> Tokenizer::tokenize(std::string_view text, std::size_t max_len) const {
  if (max_len == 0) throw std::invalid_argument("max_len must be >= 1");
  std::vector<std::int32_t> ids(max_len, kPad);
  const std::vector<std::string> tokens = split(text);
  if (tokens.empty()) {
    ids[0] = kUnknown;
    return ids;
  }
  for (std::size_t i = 0; i < std::min(max_len, tokens.size()); ++i) ids[i] = token_id(tokens[i]);
  return ids;
}

void Dataset::validate() const {
  if (num_classes < 2) throw std::invalid_argument("dataset needs >= 2 classes");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int y = records[i].label;
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("record " + std::to_string(i) + ": label " + std::to_string(y) + " out of range");
    }
  }
}

std::vector<std::string> Dataset::texts() const {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const Record& r : records) out.push_back(r.text);
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const Record& r : records) out.push_back(r.label);
  return out;
}

Dataset load_csv(const std::filesystem::path& file, std::size_t num_classes, Split split) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  const std::vector<CsvRow> rows = parse_csv(read_file(file), file);
  if (rows.empty()) csv_error(file, 1, "missing header");
  if (rows[0].fields != std::vector<std::string>{"label", "text"}) {
    csv_error(file, rows[0].line, "header must be 'label,text'");
  }
  Dataset ds;
  ds.name = file.stem().string();
  ds.split = split;
  ds.num_classes = num_classes;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.fields.size() != 2) {
      csv_error(file, row.line, "expected 2 fields, found " + std::to_string(row.fields.size()));
    }
    const std::string& lab = row.fields[0];
    int y = 0;
    const auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), y);
    if (ec != std::errc() || ptr != lab.data() + lab.size() || lab.empty()) {
      csv_error(file, row.line, "label '" + lab + "' is not an integer");
    }
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      csv_error(file, row.line, "label " + lab + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ds.records.push_back({y, row.fields[1]});
  }
  return ds;
}

void write_csv(const std::filesystem::path& file, const Dataset& dataset) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "label,text\n";
  for (const Record& r : dataset.records) out << r.label << ',' << quote(r.text) << '\n';
  if (!out) throw std::runtime_error("write failed: " + file.string());
}

Corpus generic_corpus() {
  return {{
      "Here We Go Then, You And I is a 1999 album by Norwegian pop artist Morten Abel. It was Abel's second CD as "
      "a solo artist.",
      "The album went straight to number one on the Norwegian album chart, and sold to double platinum.",
      "Among the singles released from the album were the songs \"Be My Lover\" and \"Hard To Stay Awake\".",
      "Riccardo Zegna is an Italian jazz musician.",
      "Rajko Maksimovi\xC4\x87 is a composer, writer, and music pedagogue.",
      "One of the most significant Serbian composers of our time, Maksimovi\xC4\x87 has been and remains active in "
      "creating works for different ensembles.",
      "Ceylon spinach is a common name for several plants and may refer to: Basella alba Talinum fruticosum.",
      "A solar eclipse occurs when the Moon passes between Earth and the Sun, thereby totally or partly obscuring "
      "the image of the Sun for a viewer on Earth.",
      "A partial solar eclipse occurs in the polar regions of the Earth when the center of the Moon's shadow misses "
      "the Earth.",
  }};
}

Corpus load_corpus(const std::filesystem::path& file) {
  std::istringstream in(read_file(file));
  Corpus out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.sentences.push_back(line);
  }
  if (out.sentences.empty()) throw std::runtime_error(file.string() + ": no sentences");
  return out;
}

Corpus in_domain_corpus(const Dataset& dataset, std::uint64_t seed, std::size_t count) {
  if (dataset.records.empty()) throw std::invalid_argument("in_domain_corpus: empty dataset");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, RngStream::stream_id({0x1d0a1}));
  shuffle(order, rng);
  Corpus out;
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) {
    out.sentences.push_back(dataset.records[order[i]].text);
  }
  return out;
}

InputBatch make_batch(const Tokenizer& tokenizer, const std::vector<std::string>& texts, std::size_t max_len,
                      std::vector<int> labels) {
  if (texts.empty()) throw std::invalid_argument("make_batch: no texts");
  if (!labels.empty() && labels.size() != texts.size()) {
    throw std::invalid_argument("make_batch: label count does not match text count");
  }
  InputBatch x;
  x.batch = texts.size();
  x.seq_len = max_len;
  x.ids.reserve(texts.size() * max_len);
  for (const std::string& t : texts) {
    const std::vector<std::int32_t> ids = tokenizer.tokenize(t, max_len);
    x.ids.insert(x.ids.end(), ids.begin(), ids.end());
  }
  x.labels = std::move(labels);
  return x;
}

InputBatch encode(const Dataset& dataset, const Tokenizer& tokenizer, std::size_t max_len) {
  dataset.validate();
  return make_batch(tokenizer, dataset.texts(), max_len, dataset.labels());
}

InputBatch select_rows(const InputBatch& x, const std::vector<std::size_t>& rows) {
  InputBatch out;
  out.batch = rows.size();
  out.seq_len = x.seq_len;
  out.ids.reserve(rows.size() * x.seq_len);
  for (std::size_t r : rows) {
    if (r >= x.batch) throw std::out_of_range("select_rows: row " + std::to_string(r) + " out of range");
    const auto first = x.ids.begin() + static_cast<std::ptrdiff_t>(r * x.seq_len);
    out.ids.insert(out.ids.end(), first, first + static_cast<std::ptrdiff_t>(x.seq_len));
    if (!x.labels.empty()) out.labels.push_back(x.labels[r]);
  }
  return out;
}

SyntheticVocab make_synthetic_vocab(std::size_t num_classes, const Tokenizer& tokenizer,
                                    std::size_t keywords_per_class, std::size_t filler_words) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (keywords_per_class == 0) throw std::invalid_argument("keywords_per_class must be >= 1");
  const std::size_t needed = num_classes * keywords_per_class + filler_words;
  if (needed > tokenizer.vocab_size() / 2) throw std::invalid_argument("vocabulary too small for synthetic words");

  std::set<std::int32_t> used;
  std::uint64_t index = 0;
  auto next_word = [&] {
    while (true) {
      std::string w = pseudo_word(index++);
      if (used.insert(tokenizer.token_id(w)).second) return w;
    }
  };
  SyntheticVocab vocab;
  vocab.class_keywords.resize(num_classes);
  for (auto& kw : vocab.class_keywords) {
    for (std::size_t i = 0; i < keywords_per_class; ++i) kw.push_back(next_word());
  }
  for (std::size_t i = 0; i < filler_words; ++i) vocab.filler.push_back(next_word());
  return vocab;
}

Dataset synthetic_dataset(std::size_t num_classes, std::size_t n, const SyntheticVocab& vocab, double noise_rate,
                          RngStream& rng, const SyntheticLayout& layout) {
  if (vocab.class_keywords.size() != num_classes) throw std::invalid_argument("vocabulary/class count mismatch");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw std::invalid_argument("noise_rate must lie in [0, 1]");
  if (layout.keywords_per_record == 0) throw std::invalid_argument("keywords_per_record must be >= 1");
  if (layout.filler_per_record > 0 && vocab.filler.empty()) throw std::invalid_argument("no filler words");

  std::vector<int> classes(n);
  for (std::size_t i = 0; i < n; ++i) classes[i] = static_cast<int>(i % num_classes);
  shuffle(classes, rng);

  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = num_classes;
  ds.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& kw = vocab.class_keywords[static_cast<std::size_t>(classes[i])];
    std::vector<std::string> words;
    for (std::size_t k = 0; k < layout.keywords_per_record; ++k) words.push_back(kw[rng.below(kw.size())]);
    for (std::size_t k = 0; k < layout.filler_per_record; ++k) {
      words.push_back(vocab.filler[rng.below(vocab.filler.size())]);
    }
    shuffle(words, rng);
    std::string text;
    for (const std::string& w : words) {
      if (!text.empty()) text.push_back(' ');
      text += w;
    }
    int label = classes[i];
    if (rng.uniform() < noise_rate) label = static_cast<int>(rng.below(num_classes));
    ds.records.push_back({label, std::move(text)});
  }
  return ds;
}

}  // namespace adarank
