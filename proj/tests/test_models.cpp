#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "xmodal/losses.hpp"
#include "xmodal/models.hpp"
#include "xmodal/optim.hpp"

using namespace xmodal;

namespace {

template <typename S>
WindowBatch<S> random_batch(std::mt19937_64& rng, Eigen::Index b, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  WindowBatch<S> x{Matrix<S>(b, 50 * c), 50, c};
  for (Eigen::Index i = 0; i < x.values.size(); ++i) x.values.data()[i] = static_cast<S>(n(rng));
  return x;
}

EncoderConfig config(int channels) {
  EncoderConfig c;
  c.in_channels = channels;
  return c;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("conv stack lengths") {
    const auto len = EncoderConfig{}.conv_lengths();
    CHECK(len[0] == 23);
    CHECK(len[1] == 10);
    CHECK(len[2] == 10);
    CHECK(len[3] == 10);
    CHECK(conv_output_length(50, 5, 2, 0) == 23);
  }

  TEST_CASE("encoder latent shape") {
    std::mt19937_64 rng(1);
    for (int c : {2, 4}) {
      Encoder<float> enc(config(c), 7);
      for (Eigen::Index b : {1, 8, 1024}) {
        const Matrix<float> z = encode(enc, random_batch<float>(rng, b, c));
        CHECK(z.rows() == b * 10);
        CHECK(z.cols() == 40);
        CHECK(z.allFinite());
      }
    }
  }

  TEST_CASE("parameter counts") {
    BackboneModel<float> two(config(2), 5, 1), four(config(4), 5, 1);
    CHECK(param_count(two) == 60205);
    CHECK(param_count(four) > param_count(two));
    CHECK(param_count(four) - param_count(two) == 2 * 40 * 40);
    CHECK(param_count(four) < 100000);
    ContrastiveBundle<float> bundle(config(2), config(2), 5, 1);
    // second encoder plus two 40-40-40 translators
    CHECK(param_count(bundle) == param_count(two) + param_count(two.encoder) + 2 * (2 * 40 * 40 + 2 * 40));
  }

  TEST_CASE("encoder rejects mismatched windows") {
    std::mt19937_64 rng(2);
    Encoder<float> enc(config(2), 7);
    auto x = random_batch<float>(rng, 3, 4);
    Graph<float> g(false);
    CHECK_THROWS_AS(enc.forward(g, x), ShapeError);
    EncoderConfig bad = config(2);
    bad.window = 60;
    CHECK_THROWS_AS(bad.validate(), ConfigMismatch);
  }

  TEST_CASE("initialisation is a function of the seed") {
    BackboneModel<float> a(config(2), 5, 11), b(config(2), 5, 11), c(config(2), 5, 12);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->name == pb[i]->name);
      CHECK(pa[i]->value == pb[i]->value);
      differs = differs || pa[i]->value != pc[i]->value;
    }
    CHECK(differs);
  }

  TEST_CASE("classifier attention weights sum to one") {
    std::mt19937_64 rng(3);
    BackboneModel<double> m(config(2), 4, 3);
    const auto z = encode(m, random_batch<double>(rng, 6, 2));
    const auto out = classify(m.classifier, z);
    CHECK(out.logits.rows() == 6);
    CHECK(out.logits.cols() == 4);
    for (Eigen::Index b = 0; b < 6; ++b) CHECK(out.attention.row(b).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("backbone gradients match central differences") {
    std::mt19937_64 rng(4);
    BackboneModel<double> m(config(2), 3, 5);
    const auto x = random_batch<double>(rng, 3, 2);
    const std::vector<int> y{0, 2, 1};
    const std::vector<double> w{1.0, 0.5, 2.0};
    auto loss = [&] {
      Graph<double> g(false);
      return weighted_cross_entropy(m.classifier.forward(g, m.encoder.forward(g, x)).logits.value(), y, w);
    };
    for (auto* p : m.parameters()) p->zero_grad();
    {
      Graph<double> g;
      g.backward(weighted_cross_entropy(m.classifier.forward(g, m.encoder.forward(g, x)).logits, y, w));
    }
    for (auto* p : m.parameters()) {
      // a handful of entries per tensor keeps the check fast
      for (int k = 0; k < 4; ++k) {
        const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->value.size()));
        const double keep = p->value.data()[i], h = 1e-6;
        p->value.data()[i] = keep + h;
        const double up = loss();
        p->value.data()[i] = keep - h;
        const double down = loss();
        p->value.data()[i] = keep;
        const double numeric = (up - down) / (2 * h), analytic = p->grad.data()[i];
        INFO(p->name << "[" << i << "] analytic " << analytic << " numeric " << numeric);
        CHECK(std::abs(analytic - numeric) <= 1e-5 * std::max(1.0, std::abs(numeric)));
      }
    }
  }

  TEST_CASE("bundle gradients through translators match central differences") {
    std::mt19937_64 rng(5);
    ContrastiveBundle<double> b(config(2), config(2), 3, 6);
    const auto xs = random_batch<double>(rng, 4, 2), xt = random_batch<double>(rng, 4, 2);
    auto build = [&](Graph<double>& g) {
      auto rs = b.source_encoder.forward(g, xs), rt = b.target_encoder.forward(g, xt);
      return weighted_contrastive(rt, b.source_to_target.forward(g, rs), rs, b.target_to_source.forward(g, rt),
                                  0.3, 0.1, 4);
    };
    for (auto* p : b.parameters()) p->zero_grad();
    {
      Graph<double> g;
      g.backward(build(g));
    }
    for (auto* p : b.parameters()) {
      const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->value.size()));
      const double keep = p->value.data()[i], h = 1e-6;
      p->value.data()[i] = keep + h;
      Graph<double> g1(false);
      const double up = build(g1).value()(0, 0);
      p->value.data()[i] = keep - h;
      Graph<double> g2(false);
      const double down = build(g2).value()(0, 0);
      p->value.data()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      INFO(p->name);
      CHECK(std::abs(p->grad.data()[i] - numeric) <= 1e-5 * std::max(1.0, std::abs(numeric)));
    }
  }

  TEST_CASE("Adam leaves parameters with zero gradient untouched") {
    Parameter<float> moved("a", Matrix<float>::Ones(2, 2)), still("b", Matrix<float>::Ones(2, 2));
    Adam<float> opt({&moved, &still}, {0.1});
    for (int i = 0; i < 5; ++i) {
      opt.zero_grad();
      moved.grad.setConstant(1.0f);
      opt.step();
    }
    CHECK(still.value == Matrix<float>::Ones(2, 2));
    // the first Adam step moves by the learning rate
    CHECK(moved.value(0, 0) < 1.0f);
    CHECK(opt.steps() == 5);
  }

  TEST_CASE("single Adam step size equals the learning rate") {
    Parameter<double> p("p", Matrix<double>::Zero(1, 3));
    Adam<double> opt({&p}, {0.01});
    p.grad << 2.0, -0.5, 1e-3;
    opt.step();
    CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p.value(0, 2) == doctest::Approx(-0.01).epsilon(1e-4));
  }
}
