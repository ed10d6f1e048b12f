#include <doctest.h>

#include <cmath>
#include <random>

#include "xmixup/encoder.hpp"
#include "xmixup/objectives.hpp"

using namespace xmixup;

TEST_CASE("classification loss") {
  const std::vector<double> onehot{0.0, 1.0, 0.0};
  CHECK(classification_loss(onehot, onehot) == 0.0);
  const std::vector<double> uniform(3, 1.0 / 3.0);
  CHECK(std::abs(classification_loss(uniform, onehot) - std::log(3.0)) < 1e-15);
  const std::vector<double> p{0.9, 0.1}, y{0.5, 0.5};
  const double golden = -(0.5 * std::log(0.9) + 0.5 * std::log(0.1));
  CHECK(std::abs(classification_loss(p, y) - golden) < 1e-15);
  CHECK(std::abs(golden - 1.203972804325936) < 1e-15);
  // The floor keeps a zero probability finite.
  const std::vector<double> zero{1.0, 0.0}, hit{0.0, 1.0};
  CHECK(std::abs(classification_loss(zero, hit) + std::log(kProbFloor)) < 1e-12);

  Tape tape;
  CHECK(classification_loss(tape.constant(Tensor::matrix(1, 2, {0.9, 0.1})), Tensor::matrix(1, 2, {0.5, 0.5})).item() ==
        classification_loss(p, y));
}

TEST_CASE("token level loss") {
  const Tensor exact = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  CHECK(token_level_loss(exact, exact, Mask{1, 1}) == 0.0);
  const Tensor p = Tensor::matrix(3, 2, {0.7, 0.3, 0.2, 0.8, 0.5, 0.5});
  const Tensor y = Tensor::matrix(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 0.0});
  const double golden = -std::log(0.7) - std::log(0.8);
  CHECK(std::abs(token_level_loss(p, y, Mask{1, 1, 0}) - golden) < 1e-15);
  // Masked rows never contribute, whatever they contain.
  Tensor junk = p;
  junk.at(2, 0) = 1e-300;
  CHECK(token_level_loss(junk, y, Mask{1, 1, 0}) == token_level_loss(p, y, Mask{1, 1, 0}));
  Tape tape;
  CHECK(std::abs(token_level_loss(tape.constant(p), y, Mask{1, 1, 0}).item() - golden) < 1e-15);
}

TEST_CASE("pseudo labels") {
  const Tensor onehot = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  CHECK(pseudo_labels(onehot) == onehot);
  const Tensor uniform = Tensor::matrix(2, 3, 1.0 / 3.0);
  CHECK(pseudo_labels(uniform) == uniform);
  CHECK_THROWS(pseudo_labels(Tensor::matrix(1, 2, {0.6, 0.6})));

  SUBCASE("target loss sends no gradient through the pseudo-labels") {
    Tape tape;
    Var z_s = tape.param("source_head", Tensor::matrix(2, 3, {0.3, -0.2, 1.0, 0.5, 0.1, -0.7}));
    Var z_t = tape.param("target_head", Tensor::matrix(2, 3, {-0.1, 0.4, 0.2, 0.0, 0.9, -0.3}));
    Var soft = pseudo_labels(softmax_rows(z_s));
    // The pseudo-label node is a graph leaf: no inputs, no gradient.
    CHECK(tape.node(soft.id).inputs.empty());
    CHECK(!tape.needs_grad(soft.id));
    const auto grads = backward(tape, token_level_loss(softmax_rows(z_t), soft.value(), Mask{1, 1}));
    for (double g : grads.at("source_head").data()) CHECK(g == 0.0);
    bool any = false;
    for (double g : grads.at("target_head").data()) any = any || g != 0.0;
    CHECK(any);
  }
}

TEST_CASE("consistency losses") {
  const std::vector<double> r{0.1, -2.0, 3.0};
  const std::vector<double> ps{0.8, 0.2}, pt{0.5, 0.5};
  auto [mse, kl] = consistency_loss(r, r, ps, ps, TaskKind::classification);
  CHECK(mse == 0.0);
  CHECK(kl == 0.0);
  const double golden = 0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5);
  std::tie(mse, kl) = consistency_loss(r, r, ps, pt, TaskKind::classification);
  CHECK(std::abs(kl - golden) < 1e-15);
  CHECK(std::abs(golden - 0.19274475702175753) < 1e-15);
  std::tie(mse, kl) = consistency_loss(r, r, std::nullopt, std::nullopt, TaskKind::structured);
  CHECK(kl == 0.0);
  CHECK_THROWS(consistency_loss(r, r, ps, pt, TaskKind::structured));

  Tape tape;
  const Var a = tape.constant(Tensor::row({0.8, 0.2}));
  const Var b = tape.constant(Tensor::row({0.5, 0.5}));
  CHECK(kl_divergence(a, a).item() == 0.0);
  CHECK(std::abs(kl_divergence(a, b).item() - golden) < 1e-15);
  const Var u = tape.constant(Tensor::row({1.0, 2.0}));
  const Var v = tape.constant(Tensor::row({0.0, 4.0}));
  CHECK(mse_loss(u, v).item() == doctest::Approx(2.5));
}

TEST_CASE("total loss recomposition") {
  CHECK(total_loss(1.3, 0.7, 0.0, 0.0, 1.0, TaskKind::classification).total == 1.3);
  CHECK(total_loss(0.0, 0.0, 0.0, 0.0, 0.4, TaskKind::classification).total == 0.0);
  const auto b = total_loss(1.0, 2.0, 0.5, 0.25, 0.4, TaskKind::classification);
  CHECK(b.total == 0.4 * 1.0 + 0.6 * 2.0 + 0.5 + 0.25);
  CHECK_THROWS(total_loss(1.0, 1.0, 0.0, 0.0, 1.5, TaskKind::classification));

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 5.0), a(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = u(rng), t = u(rng), m = u(rng), k = u(rng), alpha = a(rng);
    const auto r = total_loss(s, t, m, k, alpha, TaskKind::classification);
    CHECK(std::abs(r.total - (alpha * s + (1.0 - alpha) * t + m + k)) <= 1e-12);
    Tape tape;
    TapedLossParts parts{tape.constant(Tensor::scalar(s)), tape.constant(Tensor::scalar(t)),
                         tape.constant(Tensor::scalar(m)), tape.constant(Tensor::scalar(k))};
    CHECK(std::abs(total_loss(parts, alpha).item() - r.total) <= 1e-12);
    CHECK(breakdown(parts, alpha, TaskKind::classification).total == total_loss(parts, alpha).item());
  }
}
