#include "xmixup/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace xmixup {

using nlohmann::json;

std::array<std::size_t, 5> DatasetBundle::collection_sizes() const {
  std::size_t bt = 0;
  for (const auto& ex : train) bt += ex.bt_src ? 1 : 0;
  return {train.size(), train.size(), bt, test.size(), test.size()};
}

void ToyLanguageSpec::validate() const {
  if (vocab_size < 21) throw std::invalid_argument("toy language: vocab_size must be at least 21");
  auto rate = [](double r, const char* what) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(std::string("toy language: ") + what + " must lie in [0, 1]");
  };
  rate(swap_rate, "swap_rate");
  rate(noise_rate, "noise_rate");
  rate(synonym_rate, "synonym_rate");
}

namespace {

constexpr int kKeywordsPerGroup = 3;
constexpr int kKeywordCount = 2 * kKeywordsPerGroup;
constexpr double kKeywordRate = 0.16;
constexpr int kMinSentence = 5;
constexpr int kMaxSentence = 12;

}  // namespace

ToyLanguagePair::ToyLanguagePair(const ToyLanguageSpec& spec) : spec_(spec) {
  spec_.validate();
  const int usable = spec_.vocab_size - 1;
  lexicon_ = usable * 2 / 5;
  synonyms_ = std::min(lexicon_, usable - 2 * lexicon_);
  std::vector<int> image(static_cast<std::size_t>(lexicon_));
  std::iota(image.begin(), image.end(), lexicon_ + 1);
  std::mt19937_64 rng(spec_.seed);
  std::shuffle(image.begin(), image.end(), rng);
  forward_.assign(static_cast<std::size_t>(lexicon_ + 1), 0);
  backward_.assign(static_cast<std::size_t>(2 * lexicon_ + synonyms_ + 1), 0);
  for (int w = 1; w <= lexicon_; ++w) {
    forward_[static_cast<std::size_t>(w)] = image[static_cast<std::size_t>(w - 1)];
    backward_[static_cast<std::size_t>(image[static_cast<std::size_t>(w - 1)])] = w;
  }
  for (int w = 1; w <= synonyms_; ++w) backward_[static_cast<std::size_t>(2 * lexicon_ + w)] = w;
}

int ToyLanguagePair::cipher(int source_word) const {
  if (!is_source_word(source_word)) throw std::out_of_range("cipher: not a source word");
  return forward_[static_cast<std::size_t>(source_word)];
}

int ToyLanguagePair::decipher(int target_token) const {
  if (!is_target_token(target_token)) throw std::out_of_range("decipher: not a target token");
  return backward_[static_cast<std::size_t>(target_token)];
}

int ToyLanguagePair::synonym(int source_word) const {
  if (source_word < 1 || source_word > synonyms_) return -1;
  return 2 * lexicon_ + source_word;
}

int ToyLanguagePair::keyword_group(int source_word) {
  if (source_word < 1 || source_word > kKeywordCount) return -1;
  return (source_word - 1) / kKeywordsPerGroup;
}

Translation translate_traced(std::span<const int> tokens, const ToyLanguagePair& lang, Direction direction,
                             std::mt19937_64& rng) {
  const auto& spec = lang.spec();
  const std::size_t n = tokens.size();
  const bool fwd = direction == Direction::source_to_target;
  std::vector<int> mapped(tokens.begin(), tokens.end());
  for (auto& t : mapped) {
    if (fwd && lang.is_source_word(t)) t = lang.cipher(t);
    else if (!fwd && lang.is_target_token(t)) t = lang.decipher(t);
  }
  Translation out;
  out.origin.resize(n);
  std::iota(out.origin.begin(), out.origin.end(), 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i + 1 < n;) {
    const bool both = mapped[i] != kPadId && mapped[i + 1] != kPadId;
    if (both && unit(rng) < spec.swap_rate) {
      std::swap(out.origin[i], out.origin[i + 1]);
      i += 2;
    } else {
      i += 1;
    }
  }
  const int lo = fwd ? lang.lexicon_size() + 1 : 1;
  const int hi = fwd ? 2 * lang.lexicon_size() : lang.lexicon_size();
  std::uniform_int_distribution<int> pick(lo, hi);
  out.tokens.resize(n);
  out.corrupted.assign(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    out.tokens[k] = mapped[static_cast<std::size_t>(out.origin[k])];
    if (out.tokens[k] != kPadId && unit(rng) < spec.noise_rate) {
      out.tokens[k] = pick(rng);
      out.corrupted[k] = 1;
    }
  }
  return out;
}

std::vector<int> translate(std::span<const int> tokens, const ToyLanguagePair& lang, Direction direction,
                           std::mt19937_64& rng) {
  return translate_traced(tokens, lang, direction, rng).tokens;
}

int classify_sentence(std::span<const int> source_words) {
  bool group[2] = {false, false};
  for (int w : source_words) {
    const int g = ToyLanguagePair::keyword_group(w);
    if (g >= 0) group[g] = true;
  }
  return (group[0] ? 1 : 0) + (group[1] ? 1 : 0);
}

namespace {

std::vector<int> sample_sentence(const ToyLanguagePair& lang, TaskKind task, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> length(kMinSentence, kMaxSentence);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> keyword(1, kKeywordCount);
  std::uniform_int_distribution<int> filler(kKeywordCount + 1, lang.lexicon_size());
  const int n = length(rng);
  std::vector<int> words(static_cast<std::size_t>(n));
  for (auto& w : words) w = unit(rng) < kKeywordRate ? keyword(rng) : filler(rng);
  if (task == TaskKind::span && classify_sentence(words) == 0) {
    std::uniform_int_distribution<int> where(0, n - 1);
    words[static_cast<std::size_t>(where(rng))] = keyword(rng);
  }
  return words;
}

Label source_label(TaskKind task, const std::vector<int>& words) {
  switch (task) {
    case TaskKind::classification: return classify_sentence(words);
    case TaskKind::structured: {
      std::vector<int> tags(words.size());
      for (std::size_t i = 0; i < words.size(); ++i) tags[i] = ToyLanguagePair::keyword_group(words[i]) >= 0 ? 1 : 0;
      return tags;
    }
    case TaskKind::span: {
      int first = -1, last = -1;
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (ToyLanguagePair::keyword_group(words[i]) >= 0) {
          if (first < 0) first = static_cast<int>(i);
          last = static_cast<int>(i);
        }
      }
      return Span{first, last};
    }
  }
  return 0;
}

// Carries a label through one translation step.
Label carry_label(const Label& in, const Translation& tr) {
  if (std::holds_alternative<int>(in)) return in;
  if (const auto* tags = std::get_if<std::vector<int>>(&in)) {
    std::vector<int> out(tr.tokens.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = tr.corrupted[k] ? -1 : (*tags)[static_cast<std::size_t>(tr.origin[k])];
    }
    return out;
  }
  const auto& span = std::get<Span>(in);
  std::vector<int> where(tr.origin.size());
  for (std::size_t k = 0; k < tr.origin.size(); ++k) where[static_cast<std::size_t>(tr.origin[k])] = static_cast<int>(k);
  const int a = where[static_cast<std::size_t>(span.start)];
  const int b = where[static_cast<std::size_t>(span.end)];
  return Span{std::min(a, b), std::max(a, b)};
}

std::vector<int> natural_target(const std::vector<int>& words, const ToyLanguagePair& lang, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> out(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const int syn = lang.synonym(words[i]);
    out[i] = syn > 0 && unit(rng) < lang.spec().synonym_rate ? syn : lang.cipher(words[i]);
  }
  return out;
}

}  // namespace

DatasetBundle gen_bundle(TaskKind task, BundleSizes sizes, const ToyLanguageSpec& spec, std::uint64_t seed) {
  if (sizes.train < 1 || sizes.test < 1) throw std::invalid_argument("gen_bundle: sizes must be positive");
  const ToyLanguagePair lang(spec);
  std::mt19937_64 rng(seed);
  DatasetBundle b;
  b.task = task;
  b.num_labels = task == TaskKind::classification ? 3 : 2;
  b.vocab_size = spec.vocab_size;
  b.train.reserve(static_cast<std::size_t>(sizes.train));
  for (int i = 0; i < sizes.train; ++i) {
    ParallelExample ex;
    ex.src = sample_sentence(lang, task, rng);
    ex.label = source_label(task, ex.src);
    const auto fwd = translate_traced(ex.src, lang, Direction::source_to_target, rng);
    ex.tgt = fwd.tokens;
    ex.tgt_to_src = fwd.origin;
    ex.tgt_label = carry_label(ex.label, fwd);
    const auto back = translate_traced(ex.tgt, lang, Direction::target_to_source, rng);
    ex.bt_src = back.tokens;
    ex.bt_label = carry_label(*ex.tgt_label, back);
    ex.tgt_to_bt.assign(ex.tgt.size(), -1);
    for (std::size_t k = 0; k < back.origin.size(); ++k) {
      ex.tgt_to_bt[static_cast<std::size_t>(back.origin[k])] = static_cast<int>(k);
    }
    ex.provenance = {true, false};
    b.train.push_back(std::move(ex));
  }
  b.test.reserve(static_cast<std::size_t>(sizes.test));
  b.parallel.reserve(static_cast<std::size_t>(sizes.test));
  for (int i = 0; i < sizes.test; ++i) {
    const auto words = sample_sentence(lang, task, rng);
    const Label gold = source_label(task, words);
    ParallelExample ex;
    ex.tgt = natural_target(words, lang, rng);
    ex.src = translate(ex.tgt, lang, Direction::target_to_source, rng);
    ex.label = gold;
    ex.provenance = {false, true};
    ParallelExample par;
    par.src = words;
    par.tgt = ex.tgt;
    par.label = gold;
    par.provenance = {true, true};
    b.test.push_back(std::move(ex));
    b.parallel.push_back(std::move(par));
  }
  return b;
}

// JSONL ----------------------------------------------------------------------

namespace {

json label_to_json(const Label& l) {
  if (const auto* c = std::get_if<int>(&l)) return *c;
  if (const auto* t = std::get_if<std::vector<int>>(&l)) return *t;
  const auto& s = std::get<Span>(l);
  return json{{"start", s.start}, {"end", s.end}};
}

Label label_from_json(const json& j) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_array()) return j.get<std::vector<int>>();
  if (j.is_object() && j.contains("start") && j.contains("end")) return Span{j.at("start").get<int>(), j.at("end").get<int>()};
  throw std::invalid_argument("label must be an integer, an array of tags, or {start, end}");
}

json example_to_json(const ParallelExample& ex, const char* split) {
  json j;
  j["split"] = split;
  j["src"] = ex.src;
  j["tgt"] = ex.tgt;
  j["bt_src"] = ex.bt_src ? json(*ex.bt_src) : json(nullptr);
  j["label"] = label_to_json(ex.label);
  j["provenance"] = {{"src_is_real", ex.provenance.src_is_real}, {"tgt_is_real", ex.provenance.tgt_is_real}};
  if (ex.tgt_label) j["tgt_label"] = label_to_json(*ex.tgt_label);
  if (ex.bt_label) j["bt_label"] = label_to_json(*ex.bt_label);
  if (!ex.tgt_to_src.empty() || !ex.tgt_to_bt.empty()) j["align"] = {{"tgt_src", ex.tgt_to_src}, {"tgt_bt", ex.tgt_to_bt}};
  return j;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(line) + ": " + what);
}

TaskKind infer_task(const Label& l) {
  if (std::holds_alternative<int>(l)) return TaskKind::classification;
  if (std::holds_alternative<std::vector<int>>(l)) return TaskKind::structured;
  return TaskKind::span;
}

}  // namespace

void save_jsonl(const DatasetBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  json meta{{"split", "meta"},
            {"task", to_string(bundle.task)},
            {"num_labels", bundle.num_labels},
            {"vocab_size", bundle.vocab_size}};
  out << meta.dump() << '\n';
  for (const auto& ex : bundle.train) out << example_to_json(ex, "train").dump() << '\n';
  for (const auto& ex : bundle.test) out << example_to_json(ex, "test").dump() << '\n';
  for (const auto& ex : bundle.parallel) out << example_to_json(ex, "parallel").dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DatasetBundle load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  DatasetBundle b;
  bool have_meta = false;
  bool have_labels = false;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      fail_line(line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail_line(line, "record is not a JSON object");
    if (!j.contains("split")) fail_line(line, "missing required field 'split'");
    const auto split = j.at("split").get<std::string>();
    try {
      if (split == "meta") {
        b.task = task_kind_from_string(j.at("task").get<std::string>());
        b.num_labels = j.at("num_labels").get<int>();
        b.vocab_size = j.at("vocab_size").get<int>();
        have_meta = true;
        continue;
      }
      for (const char* field : {"src", "tgt", "bt_src", "label", "provenance"}) {
        if (!j.contains(field)) fail_line(line, std::string("missing required field '") + field + "'");
      }
      ParallelExample ex;
      ex.src = j.at("src").get<std::vector<int>>();
      ex.tgt = j.at("tgt").get<std::vector<int>>();
      if (!j.at("bt_src").is_null()) ex.bt_src = j.at("bt_src").get<std::vector<int>>();
      ex.label = label_from_json(j.at("label"));
      ex.provenance.src_is_real = j.at("provenance").at("src_is_real").get<bool>();
      ex.provenance.tgt_is_real = j.at("provenance").at("tgt_is_real").get<bool>();
      if (j.contains("tgt_label")) ex.tgt_label = label_from_json(j.at("tgt_label"));
      if (j.contains("bt_label")) ex.bt_label = label_from_json(j.at("bt_label"));
      if (j.contains("align")) {
        ex.tgt_to_src = j.at("align").at("tgt_src").get<std::vector<int>>();
        ex.tgt_to_bt = j.at("align").at("tgt_bt").get<std::vector<int>>();
      }
      if (!have_meta && !have_labels) {
        b.task = infer_task(ex.label);
        b.num_labels = 2;
      }
      if (!have_meta && b.task == TaskKind::classification) {
        b.num_labels = std::max(b.num_labels, std::get<int>(ex.label) + 1);
      }
      have_labels = true;
      if (split == "train") b.train.push_back(std::move(ex));
      else if (split == "test") b.test.push_back(std::move(ex));
      else if (split == "parallel") b.parallel.push_back(std::move(ex));
      else fail_line(line, "unknown split '" + split + "'");
    } catch (const json::exception& e) {
      fail_line(line, std::string("bad field: ") + e.what());
    } catch (const std::invalid_argument& e) {
      fail_line(line, e.what());
    } catch (const std::bad_variant_access&) {
      fail_line(line, "label type does not match task");
    }
  }
  return b;
}

}  // namespace xmixup
