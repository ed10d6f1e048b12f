#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "xmixup/checkpoint.hpp"
#include "xmixup/pipeline.hpp"

using namespace xmixup;

namespace {

TrainConfig small_config(TaskKind task, int epochs) {
  TrainConfig c = TrainConfig::defaults_for(task);
  c.epochs = epochs;
  c.run_id = "unit";
  return c;
}

std::string csv(const std::vector<EpochMetrics>& log) {
  std::ostringstream out;
  write_metrics_csv(out, log);
  return out.str();
}

}  // namespace

TEST_CASE("per-task defaults") {
  CHECK(TrainConfig::defaults_for(TaskKind::classification).alpha == 0.4);
  CHECK(TrainConfig::defaults_for(TaskKind::structured).alpha == 0.8);
  CHECK(TrainConfig::defaults_for(TaskKind::span).alpha == 0.2);
  CHECK(TrainConfig::defaults_for(TaskKind::classification).schedule_k == 1000.0);
  CHECK(TrainConfig::defaults_for(TaskKind::span).schedule_k == 2000.0);
  TrainConfig bad;
  bad.alpha = 1.5;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("adam step follows the bias-corrected update") {
  ParamMap params{{"w", Tensor::row({1.0, -2.0})}};
  const ParamMap grads{{"w", Tensor::row({0.5, -0.25})}};
  AdamState s;
  adam_step(params, grads, s, 0.1);
  // First step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(std::abs(params.at("w")[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))) < 1e-15);
  CHECK(std::abs(params.at("w")[1] - (-2.0 + 0.1 * 0.25 / (0.25 + 1e-8))) < 1e-15);
  CHECK(s.t == 1);
}

TEST_CASE("train") {
  const auto bundle = gen_bundle(TaskKind::classification, {48, 16}, ToyLanguageSpec{}, 2);
  SUBCASE("zero epochs returns the initial parameters") {
    const auto r = train(small_config(TaskKind::classification, 0), bundle);
    CHECK(r.model.tensors == init_model(EncoderConfig{}, TaskKind::classification, 3, 1).tensors);
    CHECK(r.log.empty());
  }
  SUBCASE("two steps are bit-identical across runs") {
    auto cfg = small_config(TaskKind::classification, 1);
    cfg.batch_size = 24;
    const auto a = train(cfg, bundle), b = train(cfg, bundle);
    CHECK(a.step == 2);
    CHECK(a.log == b.log);
    CHECK(csv(a.log) == csv(b.log));
    CHECK(a.model.tensors == b.model.tensors);
    CHECK(a.log[0].lambda_min > 0.0);
    CHECK(a.log[0].lambda_max < cfg.lambda0);
  }
  SUBCASE("a non-finite loss aborts") {
    auto cfg = small_config(TaskKind::classification, 1);
    cfg.learning_rate = 1e300;
    CHECK_THROWS(train(cfg, bundle));
  }
  SUBCASE("mixup training needs back-translations when sampling") {
    auto broken = bundle;
    broken.train[3].bt_src.reset();
    CHECK_THROWS(train(small_config(TaskKind::classification, 1), broken));
  }
}

TEST_CASE("training lowers the loss on every seed") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto bundle = gen_bundle(TaskKind::classification, {160, 20}, ToyLanguageSpec{}, seed);
    auto cfg = small_config(TaskKind::classification, 4);
    cfg.seed = seed;
    const auto r = train(cfg, bundle);
    CAPTURE(seed);
    CHECK(r.log.back().loss_total < r.log.front().loss_total);
  }
}

TEST_CASE("structured and span tasks train and evaluate") {
  for (const auto task : {TaskKind::structured, TaskKind::span}) {
    const auto bundle = gen_bundle(task, {32, 12}, ToyLanguageSpec{}, 3);
    auto cfg = small_config(task, 1);
    const auto r = train(cfg, bundle);
    CHECK(r.log.size() == 1);
    CHECK(std::isfinite(r.log[0].loss_total));
    const auto e = evaluate(r.model, cfg, bundle.test);
    CHECK(e.metric >= 0.0);
    CHECK(e.metric <= 1.0);
    cfg.toggles = Toggles::all_off();
    CHECK(std::isfinite(train(cfg, bundle).log[0].loss_total));
  }
}

TEST_CASE("inference") {
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.1, 0.7, 0.7}) == 1);
  CHECK_THROWS(argmax(std::vector<double>{}));

  const auto cfg = small_config(TaskKind::classification, 0);
  const ModelParams m = init_model(cfg.encoder, TaskKind::classification, 3, 6);
  const std::vector<int> tgt{21, 25, 30, 0}, src{1, 2, 3};
  const auto pred = infer_classification(m, cfg, tgt, src);
  double s = 0.0;
  for (double p : pred.probs) s += p;
  CHECK(std::abs(s - 1.0) < 1e-9);
  CHECK_THROWS(infer_classification(m, cfg, tgt, std::nullopt));
  auto single = cfg;
  single.toggles = Toggles::all_off();
  CHECK_NOTHROW(infer_classification(m, single, tgt, std::nullopt));

  const auto tcfg = small_config(TaskKind::structured, 0);
  const ModelParams tm = init_model(tcfg.encoder, TaskKind::structured, 2, 6);
  CHECK(infer_tags(tm, tcfg, tgt, src).size() == 3);
  CHECK(infer_tags(tm, tcfg, tgt, src) == infer_tags(tm, tcfg, tgt, src));
  auto off = tcfg;
  off.toggles = Toggles::all_off();
  Tape tape;
  BoundParams p(tape, tm, false);
  const Tensor probs = token_probs(p, encode_single(p, tgt)).value();
  std::vector<int> expected;
  for (std::size_t i = 0; i < 3; ++i) expected.push_back(probs.at(i, 1) > probs.at(i, 0) ? 1 : 0);
  CHECK(infer_tags(tm, off, tgt, std::nullopt) == expected);

  const auto scfg = small_config(TaskKind::span, 0);
  const ModelParams sm = init_model(scfg.encoder, TaskKind::span, 2, 6);
  const Span sp = infer_span(sm, scfg, tgt, src);
  CHECK(sp.start <= sp.end);
  CHECK(sp.end < 3);
}

TEST_CASE("ablation and sweep harness") {
  const auto rows = ablation_configs(small_config(TaskKind::classification, 1));
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].first == "full");
  CHECK(rows[1].first == "w/o mixup");
  CHECK(!rows[1].second.toggles.use_mixup);
  CHECK(!rows[1].second.toggles.mixup_inference);
  CHECK(rows[1].second.toggles == Toggles::all_off());
  CHECK(rows[5].first == "lambda=lambda0");
  CHECK(rows[5].second.mixup().fixed_lambda == rows[5].second.lambda0);
  CHECK(!rows[6].second.toggles.mse_consistency);
  CHECK(rows[6].second.toggles.kl_consistency);
  CHECK(!rows[7].second.toggles.kl_consistency);

  const auto bundle = gen_bundle(TaskKind::classification, {24, 8}, ToyLanguageSpec{}, 4);
  const auto cfg = small_config(TaskKind::classification, 1);
  const std::vector<int> one{1}, two{2}, both{1, 2};
  const auto s1 = sweep_layer(cfg, one, bundle);
  REQUIRE(s1.size() == 2);
  CHECK(!s1[1].layer);
  const auto s2 = sweep_layer(cfg, two, bundle);
  const auto s12 = sweep_layer(cfg, both, bundle);
  REQUIRE(s12.size() == 3);
  CHECK(s12[0].log == s1[0].log);
  CHECK(s12[1].log == s2[0].log);
  CHECK(s12[2].result == s1[1].result);
  const std::vector<int> bad{3};
  CHECK_THROWS(sweep_layer(cfg, bad, bundle));
}

TEST_CASE("checkpoint round trip") {
  const auto bundle = gen_bundle(TaskKind::classification, {32, 8}, ToyLanguageSpec{}, 5);
  auto cfg = small_config(TaskKind::classification, 1);
  cfg.n_scale = 16.0;
  const auto r = train(cfg, bundle);
  const auto path = std::filesystem::temp_directory_path() / "xmixup_unit_ckpt.json";
  save_checkpoint({cfg, r.model, r.optimizer, r.step}, path);
  const auto ck = load_checkpoint(path);
  CHECK(ck.step == r.step);
  CHECK(ck.model.tensors == r.model.tensors);
  CHECK(ck.optimizer.m == r.optimizer.m);
  CHECK(config_to_json(ck.config) == config_to_json(cfg));
  for (const auto& ex : bundle.test) {
    const auto a = infer_classification(r.model, cfg, ex.tgt, ex.src);
    const auto b = infer_classification(ck.model, ck.config, ex.tgt, ex.src);
    for (std::size_t j = 0; j < a.probs.size(); ++j) CHECK(std::abs(a.probs[j] - b.probs[j]) <= 1e-12);
  }
}
