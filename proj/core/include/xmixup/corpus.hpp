#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "xmixup/encoder.hpp"

namespace xmixup {

/// Answer span as inclusive token positions.
struct Span {
  int start = 0;
  int end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

/// Class id, per-token tags (-1 = unknown), or an answer span.
using Label = std::variant<int, std::vector<int>, Span>;

struct Provenance {
  bool src_is_real = true;
  bool tgt_is_real = false;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// One paired source/target instance.
///
/// Training examples: `src` is real source text, `tgt` its forward
/// translation, `bt_src` the back-translation of `tgt`; `label` belongs to
/// `src`, `tgt_label` / `bt_label` are the labels carried through translation.
/// Test examples: `tgt` is real target text with its gold `label`, `src` the
/// translate-test source. Parallel examples: real source and real target
/// renderings of the same sentence.
struct ParallelExample {
  std::vector<int> src;
  std::vector<int> tgt;
  std::optional<std::vector<int>> bt_src;
  Label label = 0;
  std::optional<Label> tgt_label;
  std::optional<Label> bt_label;
  /// For each target position, the aligned position in `src` / `bt_src`.
  std::vector<int> tgt_to_src;
  std::vector<int> tgt_to_bt;
  Provenance provenance;

  friend bool operator==(const ParallelExample&, const ParallelExample&) = default;
};

/// The train collection realises D_S, D~_T and D~_S of the training data;
/// the test collection realises D_T (tgt) and D~_S (src, translate-test).
struct DatasetBundle {
  TaskKind task = TaskKind::classification;
  int num_labels = 3;
  int vocab_size = 50;
  std::vector<ParallelExample> train;
  std::vector<ParallelExample> test;
  /// Row-aligned real source / real target text for representation analysis.
  std::vector<ParallelExample> parallel;

  /// Sizes of {source train, translated target train, back-translated source
  /// train, target test, translate-test source}.
  std::array<std::size_t, 5> collection_sizes() const;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

struct ToyLanguageSpec {
  int vocab_size = 50;
  double swap_rate = 0.1;
  double noise_rate = 0.1;
  /// Probability that natural target text uses a native synonym the
  /// translation system never emits.
  double synonym_rate = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class Direction { source_to_target, target_to_source };

/// Lexicon layout and cipher of a toy language pair.
///
/// Ids: 0 is padding; [1, S] the source lexicon; [S+1, 2S] the target
/// lexicon (image of the cipher); [2S+1, 2S+M] native target synonyms of
/// source words 1..M. The first six source words are the keywords (two
/// groups of three) that drive every task label.
class ToyLanguagePair {
 public:
  explicit ToyLanguagePair(const ToyLanguageSpec& spec);

  const ToyLanguageSpec& spec() const { return spec_; }
  int lexicon_size() const { return lexicon_; }
  int synonym_count() const { return synonyms_; }

  int cipher(int source_word) const;
  int decipher(int target_token) const;
  /// Native synonym of a source word, or -1.
  int synonym(int source_word) const;

  bool is_source_word(int id) const { return id >= 1 && id <= lexicon_; }
  bool is_target_token(int id) const { return id > lexicon_ && id <= 2 * lexicon_ + synonyms_; }
  /// Keyword group (0 or 1) of a source word, or -1.
  static int keyword_group(int source_word);

 private:
  ToyLanguageSpec spec_;
  int lexicon_ = 0;
  int synonyms_ = 0;
  std::vector<int> forward_;   // source word -> target token
  std::vector<int> backward_;  // target token -> source word
};

/// Result of simulated machine translation.
struct Translation {
  std::vector<int> tokens;
  /// origin[k]: input position that produced output position k.
  std::vector<int> origin;
  /// corrupted[k]: output token replaced by noise.
  std::vector<std::uint8_t> corrupted;
};

/// Cipher each token, apply adjacent swaps at swap_rate, then replace tokens
/// with random output-lexicon tokens at noise_rate. Padding and tokens outside
/// the input lexicon pass through unchanged.
Translation translate_traced(std::span<const int> tokens, const ToyLanguagePair& lang, Direction direction,
                             std::mt19937_64& rng);

std::vector<int> translate(std::span<const int> tokens, const ToyLanguagePair& lang, Direction direction,
                           std::mt19937_64& rng);

struct BundleSizes {
  int train = 2000;
  int test = 500;
};

DatasetBundle gen_bundle(TaskKind task, BundleSizes sizes, const ToyLanguageSpec& spec, std::uint64_t seed);

/// Class label of a source-language sentence: number of keyword groups present.
int classify_sentence(std::span<const int> source_words);

void save_jsonl(const DatasetBundle& bundle, const std::filesystem::path& path);
DatasetBundle load_jsonl(const std::filesystem::path& path);

}  // namespace xmixup
