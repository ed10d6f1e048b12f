#include "xmixup/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace xmixup {

using nlohmann::json;

namespace {

json tensors_to_json(const ParamMap& map) {
  json j = json::object();
  for (const auto& [name, t] : map) j[name] = json{{"shape", t.shape()}, {"data", t.storage()}};
  return j;
}

ParamMap tensors_from_json(const json& j) {
  ParamMap map;
  for (const auto& [name, entry] : j.items()) {
    map.emplace(name, Tensor(entry.at("shape").get<std::vector<std::size_t>>(),
                             entry.at("data").get<std::vector<double>>()));
  }
  return map;
}

json encoder_to_json(const EncoderConfig& e) {
  return {{"num_layers", e.num_layers}, {"d_model", e.d_model}, {"num_heads", e.num_heads},
          {"ffn_dim", e.ffn_dim},       {"vocab_size", e.vocab_size}, {"max_len", e.max_len}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig e;
  e.num_layers = j.at("num_layers");
  e.d_model = j.at("d_model");
  e.num_heads = j.at("num_heads");
  e.ffn_dim = j.at("ffn_dim");
  e.vocab_size = j.at("vocab_size");
  e.max_len = j.at("max_len");
  return e;
}

json train_to_json(const TrainConfig& c) {
  const auto& t = c.toggles;
  return {{"encoder", encoder_to_json(c.encoder)},
          {"alpha", c.alpha},
          {"schedule_k", c.schedule_k},
          {"lambda0", c.lambda0},
          {"mix_layer", c.mix_layer ? json(*c.mix_layer) : json(nullptr)},
          {"n_scale", c.n_scale ? json(*c.n_scale) : json(nullptr)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"run_id", c.run_id},
          {"toggles",
           {{"use_mixup", t.use_mixup},
            {"mixup_inference", t.mixup_inference},
            {"scheduled_sampling", t.scheduled_sampling},
            {"mse_consistency", t.mse_consistency},
            {"kl_consistency", t.kl_consistency},
            {"constant_lambda", t.constant_lambda}}}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.encoder = encoder_from_json(j.at("encoder"));
  c.alpha = j.at("alpha");
  c.schedule_k = j.at("schedule_k");
  c.lambda0 = j.at("lambda0");
  if (!j.at("mix_layer").is_null()) c.mix_layer = j.at("mix_layer").get<int>();
  else c.mix_layer.reset();
  if (!j.at("n_scale").is_null()) c.n_scale = j.at("n_scale").get<double>();
  c.learning_rate = j.at("learning_rate");
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  c.run_id = j.at("run_id");
  const auto& t = j.at("toggles");
  c.toggles.use_mixup = t.at("use_mixup");
  c.toggles.mixup_inference = t.at("mixup_inference");
  c.toggles.scheduled_sampling = t.at("scheduled_sampling");
  c.toggles.mse_consistency = t.at("mse_consistency");
  c.toggles.kl_consistency = t.at("kl_consistency");
  c.toggles.constant_lambda = t.at("constant_lambda");
  return c;
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return train_to_json(config).dump(2); }

TrainConfig config_from_json(const std::string& text) { return train_from_json(json::parse(text)); }

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json j{{"format", "xmixup-checkpoint/1"},
         {"config", train_to_json(ck.config)},
         {"step", ck.step},
         {"task", to_string(ck.model.task)},
         {"num_labels", ck.model.num_labels},
         {"model_encoder", encoder_to_json(ck.model.config)},
         {"params", tensors_to_json(ck.model.tensors)},
         {"optimizer",
          {{"beta1", ck.optimizer.beta1},
           {"beta2", ck.optimizer.beta2},
           {"eps", ck.optimizer.eps},
           {"t", ck.optimizer.t},
           {"m", tensors_to_json(ck.optimizer.m)},
           {"v", tensors_to_json(ck.optimizer.v)}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  try {
    const json j = json::parse(in);
    Checkpoint ck;
    ck.config = train_from_json(j.at("config"));
    ck.step = j.at("step");
    ck.model.task = task_kind_from_string(j.at("task"));
    ck.model.num_labels = j.at("num_labels");
    ck.model.config = encoder_from_json(j.at("model_encoder"));
    ck.model.tensors = tensors_from_json(j.at("params"));
    const auto& o = j.at("optimizer");
    ck.optimizer.beta1 = o.at("beta1");
    ck.optimizer.beta2 = o.at("beta2");
    ck.optimizer.eps = o.at("eps");
    ck.optimizer.t = o.at("t");
    ck.optimizer.m = tensors_from_json(o.at("m"));
    ck.optimizer.v = tensors_from_json(o.at("v"));
    return ck;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace xmixup
