#include "xmixup/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace xmixup {

void RunConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  language.seed = seed;
}

void RunConfig::set_task(TaskKind kind) {
  const TrainConfig d = TrainConfig::defaults_for(kind);
  task = kind;
  train.alpha = d.alpha;
  train.schedule_k = d.schedule_k;
  train.mix_layer = d.mix_layer;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("bad boolean for " + key + ": '" + value + "'");
}

std::optional<int> parse_layer(const std::string& key, const std::string& value) {
  if (value == "none") return std::nullopt;
  return parse_number<int>(key, value);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"task", [](RunConfig& c, const std::string&, const std::string& v) { c.set_task(task_kind_from_string(v)); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.set_seed(parse_number<std::uint64_t>(k, v)); }},
      {"encoder.num_layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.encoder.num_layers = parse_number<int>(k, v); }},
      {"encoder.d_model", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.encoder.d_model = parse_number<int>(k, v); }},
      {"encoder.num_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.encoder.num_heads = parse_number<int>(k, v); }},
      {"encoder.ffn_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.encoder.ffn_dim = parse_number<int>(k, v); }},
      {"encoder.vocab_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.encoder.vocab_size = parse_number<int>(k, v); }},
      {"encoder.max_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.encoder.max_len = parse_number<int>(k, v); }},
      {"train.alpha", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.alpha = parse_number<double>(k, v); }},
      {"train.schedule_k", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.schedule_k = parse_number<double>(k, v); }},
      {"train.lambda0", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lambda0 = parse_number<double>(k, v); }},
      {"train.mix_layer", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.mix_layer = parse_layer(k, v); }},
      {"train.n_scale", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") c.train.n_scale.reset();
         else c.train.n_scale = parse_number<double>(k, v);
       }},
      {"train.learning_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = parse_number<double>(k, v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = parse_number<int>(k, v); }},
      {"train.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs = parse_number<int>(k, v); }},
      {"train.run_id", [](RunConfig& c, const std::string&, const std::string& v) { c.train.run_id = unquote(v); }},
      {"toggles.use_mixup", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.toggles.use_mixup = parse_bool(k, v); }},
      {"toggles.mixup_inference", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.toggles.mixup_inference = parse_bool(k, v); }},
      {"toggles.scheduled_sampling", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.toggles.scheduled_sampling = parse_bool(k, v); }},
      {"toggles.mse_consistency", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.toggles.mse_consistency = parse_bool(k, v); }},
      {"toggles.kl_consistency", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.toggles.kl_consistency = parse_bool(k, v); }},
      {"toggles.constant_lambda", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.toggles.constant_lambda = parse_bool(k, v); }},
      {"data.vocab_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.language.vocab_size = parse_number<int>(k, v); }},
      {"data.swap_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.language.swap_rate = parse_number<double>(k, v); }},
      {"data.noise_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.language.noise_rate = parse_number<double>(k, v); }},
      {"data.synonym_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.language.synonym_rate = parse_number<double>(k, v); }},
      {"data.train_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.sizes.train = parse_number<int>(k, v); }},
      {"data.test_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.sizes.test = parse_number<int>(k, v); }},
      {"paths.data", [](RunConfig& c, const std::string&, const std::string& v) { c.data = unquote(v); }},
      {"paths.checkpoint", [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = unquote(v); }},
      {"paths.out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = unquote(v); }},
  };
  return table;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(number) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second(config, key, value);
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto kv = parse_key_values(buffer.str());
  if (const auto it = kv.find("task"); it != kv.end()) {
    apply_setting(config, it->first, it->second);
    kv.erase(it);
  }
  for (const auto& [k, v] : kv) apply_setting(config, k, v);
}

std::string to_key_values(const RunConfig& c) {
  std::ostringstream o;
  o << std::setprecision(17) << std::boolalpha;
  const auto& t = c.train;
  o << "task = " << to_string(c.task) << '\n'
    << "seed = " << t.seed << '\n'
    << "encoder.num_layers = " << t.encoder.num_layers << '\n'
    << "encoder.d_model = " << t.encoder.d_model << '\n'
    << "encoder.num_heads = " << t.encoder.num_heads << '\n'
    << "encoder.ffn_dim = " << t.encoder.ffn_dim << '\n'
    << "encoder.vocab_size = " << t.encoder.vocab_size << '\n'
    << "encoder.max_len = " << t.encoder.max_len << '\n'
    << "train.alpha = " << t.alpha << '\n'
    << "train.schedule_k = " << t.schedule_k << '\n'
    << "train.lambda0 = " << t.lambda0 << '\n'
    << "train.mix_layer = " << (t.mix_layer ? std::to_string(*t.mix_layer) : "none") << '\n'
    << "train.n_scale = ";
  if (t.n_scale) o << *t.n_scale;
  else o << "none";
  o << '\n'
    << "train.learning_rate = " << t.learning_rate << '\n'
    << "train.batch_size = " << t.batch_size << '\n'
    << "train.epochs = " << t.epochs << '\n'
    << "train.run_id = " << t.run_id << '\n'
    << "toggles.use_mixup = " << t.toggles.use_mixup << '\n'
    << "toggles.mixup_inference = " << t.toggles.mixup_inference << '\n'
    << "toggles.scheduled_sampling = " << t.toggles.scheduled_sampling << '\n'
    << "toggles.mse_consistency = " << t.toggles.mse_consistency << '\n'
    << "toggles.kl_consistency = " << t.toggles.kl_consistency << '\n'
    << "toggles.constant_lambda = " << t.toggles.constant_lambda << '\n'
    << "data.vocab_size = " << c.language.vocab_size << '\n'
    << "data.swap_rate = " << c.language.swap_rate << '\n'
    << "data.noise_rate = " << c.language.noise_rate << '\n'
    << "data.synonym_rate = " << c.language.synonym_rate << '\n'
    << "data.train_size = " << c.sizes.train << '\n'
    << "data.test_size = " << c.sizes.test << '\n'
    << "paths.data = " << c.data.string() << '\n'
    << "paths.checkpoint = " << c.checkpoint.string() << '\n'
    << "paths.out = " << c.out.string() << '\n';
  return o.str();
}

}  // namespace xmixup
