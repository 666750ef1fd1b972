#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccvnet/autoencoder.hpp"
#include "ccvnet/errors.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace ccvnet;
using support::fd_error;
using support::zero_params;

namespace {

Model small_model(std::size_t c, std::uint64_t seed) {
  CnnSpec cs;
  cs.channels = c;
  RnnSpec rs;
  rs.channels = c;
  Model m;
  m.cnn.emplace(cs, seed);
  m.rnn.emplace(rs, seed);
  m.dae.emplace(DaeSpec{}, seed);
  m.head.emplace(HeadSpec{}, seed);
  return m;
}

} // namespace

TEST_CASE("autoencoder") {
  SUBCASE("zero parameters") {
    Autoencoder dae(DaeSpec{}, 1);
    zero_params(dae.params());
    CHECK(dae_loss(Tensor({128}), dae) == 0.0);
    CHECK(dae_loss(Tensor::filled({128}, 1.0), dae) == 1.0);
    const Tensor z = dae_encode(Tensor::filled({128}, 3.0), dae);
    CHECK(z.shape() == Shape{32});
    for (double v : z.data())
      CHECK(v == 0.0);
  }
  SUBCASE("latent width") {
    const Autoencoder dae(DaeSpec{}, 2);
    std::mt19937_64 gen(41);
    CHECK(dae.encode(oracle::random_tensor({128}, gen)).shape() == Shape{32});
    CHECK(dae.encode(oracle::random_tensor({5, 128}, gen)).shape() == Shape{5, 32});
    CHECK(dae.reconstruct(oracle::random_tensor({5, 128}, gen)).shape() == Shape{5, 128});
  }
  SUBCASE("reconstruction loss is the mean squared error of reconstruct") {
    const Autoencoder dae(DaeSpec{}, 3);
    std::mt19937_64 gen(42);
    const Tensor f = oracle::random_tensor({4, 128}, gen);
    const Tensor r = dae.reconstruct(f);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
      sum += (r[i] - f[i]) * (r[i] - f[i]);
    CHECK(dae_loss(f, dae) == doctest::Approx(sum / static_cast<double>(f.size())).epsilon(1e-12));
  }
  SUBCASE("gradient reaches all four layers and matches finite differences") {
    Autoencoder dae(DaeSpec{}, 4);
    std::mt19937_64 gen(43);
    const Tensor f = oracle::random_tensor({3, 128}, gen);
    auto loss = [&] { return dae.loss(f); };
    for (const char *name : {"enc1.w", "enc1.b", "enc2.w", "enc2.b", "dec1.w", "dec1.b", "dec2.w",
                             "dec2.b"}) {
      CAPTURE(name);
      Var &p = dae.params().get(name);
      CHECK(fd_error(loss, p) < 1e-4);
      backward(loss());
      double norm = 0.0;
      for (double g : p.grad().data())
        norm += g * g;
      CHECK(norm > 0.0);
      dae.params().zero_grad();
    }
  }
  SUBCASE("spec validation") {
    CHECK_THROWS_AS(Autoencoder(DaeSpec{128, 64, 128}, 1), ConfigError);
    CHECK_THROWS_AS(Autoencoder(DaeSpec{}, ParamStore{}), StateError);
  }
}

TEST_CASE("classifier head") {
  SUBCASE("zero parameters give a uniform prediction") {
    ClassifierHead head(HeadSpec{}, 1);
    zero_params(head.params());
    std::mt19937_64 gen(44);
    const Tensor logits = head_forward(oracle::random_tensor({32}, gen), head);
    CHECK(logits.shape() == Shape{3});
    const Tensor p = softmax(logits);
    for (double v : p.data())
      CHECK(v == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("logit length follows the class count") {
    const ClassifierHead head(HeadSpec{32, 16, 5}, 2);
    std::mt19937_64 gen(45);
    CHECK(head.logits(oracle::random_tensor({7, 32}, gen)).shape() == Shape{7, 5});
  }
  SUBCASE("argmax ignores a constant shift of the logits") {
    std::mt19937_64 gen(46);
    for (int k = 0; k < 50; ++k) {
      Tensor z = oracle::random_tensor({4}, gen, 3.0);
      const std::size_t base = argmax(softmax(z).data());
      for (auto &v : z.storage())
        v += 123.25;
      CHECK(argmax(softmax(z).data()) == base);
      CHECK(argmax(z.data()) == base);
    }
  }
  SUBCASE("argmax ties go to the lowest index") {
    const std::vector<double> tie{0.2, 0.4, 0.4};
    CHECK(argmax(tie) == 1);
    const std::vector<double> flat{1.0, 1.0, 1.0};
    CHECK(argmax(flat) == 0);
  }
  SUBCASE("gradient matches finite differences") {
    ClassifierHead head(HeadSpec{}, 3);
    std::mt19937_64 gen(47);
    const Var z = Var::constant(oracle::random_tensor({4, 32}, gen));
    const std::vector<int> labels{0, 1, 2, 2};
    auto loss = [&] { return softmax_xent(head.forward(z), labels); };
    head.params().get("out.w").mutable_value() = oracle::random_tensor({16, 3}, gen);
    for (const char *name : {"fc1.w", "fc1.b", "out.w", "out.b"})
      CHECK(fd_error(loss, head.params().get(name)) < 1e-4);
  }
}

TEST_CASE("model prediction") {
  std::mt19937_64 gen(48);

  SUBCASE("zero-parameter pipeline predicts class 0 with uniform probabilities") {
    Model m = small_model(6, 1);
    zero_params(m.cnn->params());
    zero_params(m.rnn->params());
    zero_params(m.dae->params());
    zero_params(m.head->params());
    const Prediction p = predict(support::random_cov(6, gen), m);
    CHECK(p.label == 0);
    for (double v : p.probs.data())
      CHECK(v == doctest::Approx(1.0 / 3.0));
  }

  SUBCASE("predict composes the stage operations") {
    const Model m = small_model(6, 2);
    for (int k = 0; k < 10; ++k) {
      const CovMatrix x = support::random_cov(6, gen, 2.0);
      const Tensor logits =
          head_forward(dae_encode(extract_features(x, *m.cnn, *m.rnn), *m.dae), *m.head);
      const Prediction p = m.predict(x);
      CHECK(p.probs.storage() == softmax(logits).storage());
      CHECK(p.label == static_cast<int>(argmax(logits.data())));
      double sum = 0.0;
      for (double v : p.probs.data())
        sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-9);

      const Tensor batched = m.logits(make_batch({x}));
      CHECK(batched.storage() == logits.storage());
    }
  }

  SUBCASE("predict_trial standardises the covariance first") {
    Model m = small_model(6, 3);
    const Trial t{oracle::random_tensor({6, 40}, gen), 0, "s", "t0"};
    CHECK_THROWS_AS(m.predict_trial(t), StateError);
    m.norm = StandardizeStats{oracle::random_tensor({6, 6}, gen),
                              Tensor::filled({6, 6}, 0.5)};
    const Prediction direct = m.predict(apply_standardize(ccv(t), *m.norm));
    CHECK(m.predict_trial(t).probs == direct.probs);
  }

  SUBCASE("missing stages are named") {
    for (const char *stage : {"cnn", "rnn", "dae", "head"}) {
      Model m = small_model(6, 4);
      const std::string s = stage;
      if (s == "cnn")
        m.cnn.reset();
      if (s == "rnn")
        m.rnn.reset();
      if (s == "dae")
        m.dae.reset();
      if (s == "head")
        m.head.reset();
      try {
        m.predict(support::random_cov(6, gen));
        FAIL("expected StateError");
      } catch (const StateError &e) {
        CHECK(std::string(e.what()).find("'" + s + "'") != std::string::npos);
      }
    }
  }
}
