#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "xmixup/mixup.hpp"

using namespace xmixup;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.storage()) v = n(rng);
  return t;
}

oracle::Rows rows_of(const Tensor& t, const Mask& mask = {}) {
  oracle::Rows r;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    r.emplace_back(t.data().begin() + static_cast<std::ptrdiff_t>(i * t.cols()),
                   t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * t.cols()));
  }
  return r;
}

Tensor identity(std::size_t d) {
  Tensor t = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) t.at(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("cross attention") {
  Tape tape;
  Var id = tape.constant(identity(3));
  const AttentionParams ap{id, id, id, id, 1};
  SUBCASE("a single source row is copied to every target row") {
    const Tensor r = Tensor::matrix(1, 3, {0.5, -1.0, 2.0});
    const Tensor out = cross_attention(tape.constant(Tensor::matrix(4, 3, 0.7)), tape.constant(r), ap, {}).value();
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(i, j) == doctest::Approx(r[j]).epsilon(1e-15));
  }
  SUBCASE("same input on both sides is self-attention") {
    std::mt19937_64 rng(1);
    Var h = tape.constant(random_matrix(3, 3, rng));
    CHECK(cross_attention(h, h, ap, {}).value() == multi_head_attention(h, h, h, ap).value());
  }
  SUBCASE("2x2 toy case") {
    Var id2 = tape.constant(identity(2));
    const Tensor t = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    const Tensor s = Tensor::matrix(2, 2, {2.0, 1.0, -1.0, 3.0});
    const Tensor out = cross_attention(tape.constant(t), tape.constant(s), {id2, id2, id2, id2, 1}, {}).value();
    const auto ref = oracle::attention(rows_of(t), rows_of(s), rows_of(identity(2)), rows_of(identity(2)),
                                       rows_of(identity(2)), rows_of(identity(2)), 1, {});
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(out.at(i, j) - ref[i][j]) < 1e-14);
  }
}

TEST_CASE("attention entropy") {
  SUBCASE("identical source rows give ln J") {
    std::mt19937_64 rng(2);
    const Tensor t = random_matrix(3, 5, rng);
    Tensor s = Tensor::matrix(4, 5);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 5; ++j) s.at(i, j) = 0.3 * static_cast<double>(j);
    const auto st = attention_entropy(t, s, {}, {}, 5.0);
    CHECK(std::abs(st.entropy_forward - std::log(4.0)) < 1e-12);
  }
  SUBCASE("large logit gaps drive the entropy to zero") {
    const Tensor t = Tensor::matrix(1, 2, {100.0, 0.0});
    const Tensor s = Tensor::matrix(2, 2, {100.0, 0.0, -100.0, 0.0});
    CHECK(attention_entropy(t, s, {}, {}, 2.0).entropy_forward < 1e-12);
  }
  SUBCASE("matches the two-loop oracle and stays in [0, ln J]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor t = random_matrix(4, 6, rng), s = random_matrix(5, 6, rng);
      const Mask tm{1, 1, 0, 1}, sm{1, 0, 1, 1, 1};
      const auto st = attention_entropy(t, s, tm, sm, 6.0);
      const double fwd = oracle::entropy(rows_of(t, tm), rows_of(s, sm), 6.0);
      const double bwd = oracle::entropy(rows_of(s, sm), rows_of(t, tm), 6.0);
      CHECK(std::abs(st.entropy_forward - fwd) < 1e-10);
      CHECK(std::abs(st.entropy_backward - bwd) < 1e-10);
      CHECK(st.entropy_forward >= -1e-12);
      CHECK(st.entropy_forward <= std::log(4.0) + 1e-12);
      CHECK(st.entropy_backward <= std::log(3.0) + 1e-12);
    }
  }
  SUBCASE("taped and plain paths agree") {
    std::mt19937_64 rng(4);
    const Tensor t = random_matrix(3, 4, rng), s = random_matrix(4, 4, rng);
    Tape tape;
    const auto taped = attention_entropy(tape.constant(t), tape.constant(s), Mask{1, 1, 1}, Mask{1, 1, 1, 0}, 4.0);
    const auto plain = attention_entropy(t, s, Mask{1, 1, 1}, Mask{1, 1, 1, 0}, 4.0);
    CHECK(std::abs(taped.forward.item() - plain.entropy_forward) < 1e-13);
    CHECK(std::abs(taped.backward.item() - plain.entropy_backward) < 1e-13);
  }
}

TEST_CASE("mixup ratio") {
  AttentionStats st;
  st.entropy_forward = 0.7;
  st.entropy_backward = 0.9;
  CHECK(mixup_ratio(st, 0.0, 0.0, 0.5) == 0.25);
  CHECK(mixup_ratio(st, 0.0, -800.0, 0.5) < 1e-300);
  CHECK(mixup_ratio(st, 0.0, 800.0, 0.5) == 0.5);
  const double golden = 0.5 / (1.0 + std::exp(-1.6));
  CHECK(std::abs(mixup_ratio(st, 1.0, 0.0, 0.5) - golden) < 1e-15);
  CHECK(std::abs(golden - 0.4160091925669622) < 1e-15);
}

TEST_CASE("manifold mix") {
  std::mt19937_64 rng(5);
  const Tensor ht = random_matrix(3, 4, rng), hc = random_matrix(3, 4, rng);
  const Tensor g = random_matrix(1, 4, rng), b = random_matrix(1, 4, rng);
  CHECK(manifold_mix(ht, hc, 0.0, g, b) == layer_norm(ht, g, b));
  CHECK(manifold_mix(ht, hc, 1.0, g, b) == layer_norm(hc, g, b));
  CHECK(max_abs_diff(manifold_mix(ht, ht, 0.37, g, b), layer_norm(ht, g, b)) < 1e-12);
  Tape tape;
  const Var lam = tape.constant(Tensor::scalar(0.0));
  const Var mixed = manifold_mix(tape.constant(ht), tape.constant(hc), lam, tape.constant(g), tape.constant(b));
  CHECK(mixed.value() == layer_norm(ht, g, b));
}

TEST_CASE("scheduled sampling") {
  CHECK(sampling_threshold(0, 1000.0) == 1000.0 / 1001.0);
  CHECK(std::abs(sampling_threshold(10000, 1000.0) - 1000.0 / (1000.0 + std::exp(10.0))) < 1e-15);
  for (long i = 0; i < 20000; ++i) CHECK(sampling_threshold(i + 1, 1000.0) < sampling_threshold(i, 1000.0));
  CHECK(sampling_threshold(100000, 1000.0) < 1e-40);
  CHECK_THROWS(sampling_threshold(-1, 1000.0));
  CHECK_THROWS(sampling_threshold(0, 0.5));

  ParallelExample ex;
  ex.src = {1, 2};
  ex.bt_src = std::vector<int>{3, 4};
  CHECK(&sample_source(ex, 0.3, 0.0) == &ex.src);
  CHECK(&sample_source(ex, 0.01, 0.9999) == &*ex.bt_src);
  ex.bt_src.reset();
  CHECK_THROWS(sample_source(ex, 0.01, 0.9999));

  std::mt19937_64 a(7), b(7);
  std::uniform_real_distribution<double> u;
  for (int i = 0; i < 100; ++i) CHECK(u(a) == u(b));
}

TEST_CASE("encode_pair") {
  const EncoderConfig enc;
  ModelParams m = init_model(enc, TaskKind::classification, 3, 8);
  const std::vector<int> src{3, 4, 5, 6, 0}, tgt{21, 30, 22};
  MixupConfig mix;
  mix.mix_layer = 1;

  SUBCASE("no mix layer equals two single encodings") {
    mix.mix_layer.reset();
    Tape tape;
    BoundParams p(tape, m, false);
    const auto pair = encode_pair(p, src, tgt, mix);
    CHECK(!pair.lambda);
    CHECK(pair.source.last().value() == encode_single(p, src).last().value());
    CHECK(pair.target.last().value() == encode_single(p, tgt).last().value());
  }
  SUBCASE("lambda = 0 adds one layer norm and nothing else") {
    mix.fixed_lambda = 0.0;
    Tape tape;
    BoundParams p(tape, m, false);
    const auto pair = encode_pair(p, src, tgt, mix);
    const auto single = encode_single(p, tgt);
    const Tensor expected =
        layer_norm(single.attention_output[1].value(), m.at("mix.ln.gain"), m.at("mix.ln.bias"));
    CHECK(pair.target.attention_output[1].value() == expected);
    CHECK(pair.source.last().value() == encode_single(p, src).last().value());
  }
  SUBCASE("lambda is strictly inside (0, lambda0)") {
    m.tensors.at("mix.ratio.w")[0] = 0.8;
    m.tensors.at("mix.ratio.b")[0] = -1.0;
    Tape tape;
    BoundParams p(tape, m, false);
    for (int l : {1, 2}) {
      mix.mix_layer = l;
      const auto pair = encode_pair(p, src, tgt, mix);
      REQUIRE(pair.lambda);
      CHECK(pair.lambda->item() > 0.0);
      CHECK(pair.lambda->item() < mix.lambda0);
    }
  }
  SUBCASE("invalid mix layer") {
    mix.mix_layer = 3;
    CHECK_THROWS(mix.validate(enc));
  }
}
