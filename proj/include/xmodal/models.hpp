#pragma once

// Backbone encoder/classifier, latent translators and the parameter bundles
// used by the three training procedures.
//
// Encoder: per-channel conv stack (weights shared across input channels)
//   -> self-attention across channels -> linear channel fusion -> LSTM x2,
//   giving a latent of latent_time x latent_dim per window.
// Classifier: additive temporal attention pooling -> linear layer.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "xmodal/autograd.hpp"
#include "xmodal/nn_ops.hpp"

namespace xmodal {

struct EncoderConfig {
  int in_channels = 2;
  int window = 50;
  int latent_time = 10;
  int latent_dim = 40;
  int conv_kernel = 5;
  int conv_filters = 40;
  std::array<int, 4> conv_strides{2, 2, 1, 1};
  int lstm_layers = 2;
  int attention_heads = 1;

  /// Strided layers use no padding; stride-1 layers keep the length.
  int conv_padding(std::size_t layer) const {
    return conv_strides[layer] == 1 ? (conv_kernel - 1) / 2 : 0;
  }

  /// Sequence length after each conv layer.
  std::array<Eigen::Index, 4> conv_lengths() const {
    std::array<Eigen::Index, 4> out{};
    Eigen::Index len = window;
    for (std::size_t i = 0; i < conv_strides.size(); ++i) {
      len = conv_output_length(len, conv_kernel, conv_strides[i], conv_padding(i));
      out[i] = len;
    }
    return out;
  }

  void validate() const {
    if (in_channels < 1 || window < 1 || latent_dim < 1 || conv_filters < 1 || conv_kernel < 1 ||
        lstm_layers < 1)
      throw ConfigMismatch("EncoderConfig: sizes must be positive");
    for (int s : conv_strides)
      if (s < 1) throw ConfigMismatch("EncoderConfig: strides must be positive");
    if (attention_heads != 1) throw ConfigMismatch("EncoderConfig: only one attention head is supported");
    if (conv_lengths().back() != latent_time)
      throw ConfigMismatch("EncoderConfig: conv stack maps window " + std::to_string(window) + " to " +
                           std::to_string(conv_lengths().back()) + ", expected latent_time " +
                           std::to_string(latent_time));
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Windows of `length` steps and `channels` channels, one window per row,
/// laid out (step, channel) row-major.
template <typename S>
struct WindowBatch {
  Matrix<S> values;
  Eigen::Index length = 0;
  Eigen::Index channels = 0;

  Eigen::Index batch() const { return values.rows(); }
};

namespace detail {

/// Fan-in uniform initialisation U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename S>
Matrix<S> fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  return m;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

template <typename S>
struct Linear {
  Parameter<S> weight;
  Parameter<S> bias;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng,
         bool with_bias = true)
      : weight(name + ".weight", detail::fan_in_uniform<S>(in, out, in, rng)), has_bias(with_bias) {
    if (has_bias) bias = Parameter<S>(name + ".bias", detail::fan_in_uniform<S>(1, out, in, rng));
  }

  Var<S> operator()(Graph<S>& g, Var<S> x) {
    Var<S> y = matmul(x, g.parameter(weight));
    return has_bias ? add_bias(y, g.parameter(bias)) : y;
  }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
  }
};

template <typename S>
struct Conv1dLayer {
  Parameter<S> weight;  // (kernel*in) x out
  Parameter<S> bias;
  int kernel = 1, stride = 1, pad = 0;

  Conv1dLayer() = default;
  Conv1dLayer(const std::string& name, Eigen::Index in, Eigen::Index out, int k, int s, int p,
              std::mt19937_64& rng)
      : weight(name + ".weight", detail::fan_in_uniform<S>(k * in, out, k * in, rng)),
        bias(name + ".bias", detail::fan_in_uniform<S>(1, out, k * in, rng)),
        kernel(k), stride(s), pad(p) {}

  Var<S> operator()(Graph<S>& g, Var<S> x, Eigen::Index sequences, Eigen::Index length) {
    return conv1d(x, sequences, length, g.parameter(weight), g.parameter(bias), kernel, stride, pad);
  }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Unidirectional LSTM layer, gate order (input, forget, cell, output).
template <typename S>
struct LstmLayer {
  Parameter<S> input_weight;      // in x 4H
  Parameter<S> recurrent_weight;  // H x 4H
  Parameter<S> bias;              // 1 x 4H
  Eigen::Index hidden = 0;

  LstmLayer() = default;
  LstmLayer(const std::string& name, Eigen::Index in, Eigen::Index h, std::mt19937_64& rng)
      : input_weight(name + ".input_weight", detail::fan_in_uniform<S>(in, 4 * h, h, rng)),
        recurrent_weight(name + ".recurrent_weight", detail::fan_in_uniform<S>(h, 4 * h, h, rng)),
        bias(name + ".bias", detail::fan_in_uniform<S>(1, 4 * h, h, rng)),
        hidden(h) {}

  /// `x` is time-major: (steps*batch) x in. Returns (steps*batch) x hidden.
  Var<S> operator()(Graph<S>& g, Var<S> x, Eigen::Index steps, Eigen::Index batch) {
    return lstm(x, g.parameter(input_weight), g.parameter(recurrent_weight), g.parameter(bias), steps,
                batch);
  }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&input_weight);
    out.push_back(&recurrent_weight);
    out.push_back(&bias);
  }
};

template <typename S>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::uint64_t seed, const std::string& name = "encoder")
      : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const Eigen::Index f = config_.conv_filters;
    for (std::size_t i = 0; i < config_.conv_strides.size(); ++i)
      conv_.emplace_back(name + ".conv" + std::to_string(i), i == 0 ? 1 : f, f, config_.conv_kernel,
                         config_.conv_strides[i], config_.conv_padding(i), rng);
    query_ = Linear<S>(name + ".attn_query", f, f, rng, false);
    key_ = Linear<S>(name + ".attn_key", f, f, rng, false);
    value_ = Linear<S>(name + ".attn_value", f, f, rng, false);
    fusion_ = Linear<S>(name + ".fusion", config_.in_channels * f, config_.latent_dim, rng);
    for (int l = 0; l < config_.lstm_layers; ++l)
      lstm_.emplace_back(name + ".lstm" + std::to_string(l), config_.latent_dim, config_.latent_dim, rng);
  }

  const EncoderConfig& config() const { return config_; }

  /// Latent of shape (batch*latent_time) x latent_dim, batch-major.
  Var<S> forward(Graph<S>& g, const WindowBatch<S>& x) {
    check_input(x);
    const Eigen::Index B = x.batch(), C = config_.in_channels, L = config_.window;
    const Eigen::Index T = config_.latent_time, F = config_.conv_filters;

    // one univariate sequence per (window, channel)
    Matrix<S> seq(B * C * L, 1);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index t = 0; t < L; ++t) seq((b * C + c) * L + t, 0) = x.values(b, t * C + c);
    Var<S> h = g.constant(std::move(seq));
    Eigen::Index len = L;
    for (auto& conv : conv_) {
      h = relu(conv(g, h, B * C, len));
      len = h.rows() / (B * C);
    }

    // regroup rows from (b, c, t) to (b, t, c)
    std::vector<Eigen::Index> to_btc(static_cast<std::size_t>(B * T * C));
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index c = 0; c < C; ++c) to_btc[(b * T + t) * C + c] = (b * C + c) * T + t;
    h = gather_rows(h, std::move(to_btc));

    // self-attention across the channel axis at each step, residual
    Var<S> att = group_attention(query_(g, h), key_(g, h), value_(g, h), C,
                                 static_cast<S>(1.0 / std::sqrt(static_cast<double>(F))));
    h = add(h, att);

    h = relu(fusion_(g, reshape(h, B * T, C * F)));

    std::vector<Eigen::Index> to_tb(static_cast<std::size_t>(B * T));
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index b = 0; b < B; ++b) to_tb[t * B + b] = b * T + t;
    h = gather_rows(h, std::move(to_tb));
    for (auto& layer : lstm_) h = layer(g, h, T, B);

    std::vector<Eigen::Index> to_bt(static_cast<std::size_t>(B * T));
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < T; ++t) to_bt[b * T + t] = t * B + b;
    return gather_rows(h, std::move(to_bt));
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    for (auto& c : conv_) c.collect(out);
    query_.collect(out);
    key_.collect(out);
    value_.collect(out);
    fusion_.collect(out);
    for (auto& l : lstm_) l.collect(out);
    return out;
  }

 private:
  void check_input(const WindowBatch<S>& x) const {
    if (x.length != config_.window || x.channels != config_.in_channels ||
        x.values.cols() != x.length * x.channels)
      throw ShapeError("encoder expects windows of " + std::to_string(config_.window) + " x " +
                       std::to_string(config_.in_channels) + ", got " + std::to_string(x.length) + " x " +
                       std::to_string(x.channels));
    if (x.batch() < 1) throw ShapeError("encoder: empty batch");
  }

  EncoderConfig config_;
  std::vector<Conv1dLayer<S>> conv_;
  Linear<S> query_, key_, value_, fusion_;
  std::vector<LstmLayer<S>> lstm_;
};

template <typename S>
struct ClassifierOutput {
  Var<S> logits;     // batch x classes
  Var<S> attention;  // batch x latent_time, rows sum to one
};

/// Temporal attention pooling followed by one linear layer.
template <typename S>
class Classifier {
 public:
  Classifier() = default;
  Classifier(Eigen::Index latent_time, Eigen::Index latent_dim, Eigen::Index classes, std::uint64_t seed,
             const std::string& name = "classifier")
      : latent_time_(latent_time), latent_dim_(latent_dim), classes_(classes) {
    std::mt19937_64 rng(seed);
    hidden_ = Linear<S>(name + ".attn_hidden", latent_dim, latent_dim, rng);
    score_ = Linear<S>(name + ".attn_score", latent_dim, 1, rng, false);
    output_ = Linear<S>(name + ".output", latent_dim, classes, rng);
  }

  Eigen::Index classes() const { return classes_; }

  ClassifierOutput<S> forward(Graph<S>& g, Var<S> latent) {
    if (latent.cols() != latent_dim_ || latent.rows() % latent_time_ != 0 || latent.rows() == 0)
      throw ShapeError("classifier expects (batch*" + std::to_string(latent_time_) + ") x " +
                       std::to_string(latent_dim_) + " latents");
    const Eigen::Index B = latent.rows() / latent_time_;
    Var<S> scores = score_(g, xmodal::tanh(hidden_(g, latent)));
    Var<S> weights = softmax_rows(reshape(scores, B, latent_time_));
    Var<S> pooled = attention_pool(latent, weights);
    return {output_(g, pooled), weights};
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    hidden_.collect(out);
    score_.collect(out);
    output_.collect(out);
    return out;
  }

 private:
  Eigen::Index latent_time_ = 0, latent_dim_ = 0, classes_ = 0;
  Linear<S> hidden_, score_, output_;
};

/// Per-step two-layer perceptron latent_dim -> latent_dim -> latent_dim.
template <typename S>
class Translator {
 public:
  Translator() = default;
  Translator(Eigen::Index latent_dim, std::uint64_t seed, const std::string& name = "translator",
             bool zero_output = false)
      : latent_dim_(latent_dim) {
    std::mt19937_64 rng(seed);
    first_ = Linear<S>(name + ".hidden", latent_dim, latent_dim, rng);
    second_ = Linear<S>(name + ".output", latent_dim, latent_dim, rng);
    if (zero_output) {
      second_.weight.value.setZero();
      second_.bias.value.setZero();
    }
  }

  Var<S> forward(Graph<S>& g, Var<S> latent) {
    if (latent.cols() != latent_dim_) throw ShapeError("translator: latent width mismatch");
    return second_(g, relu(first_(g, latent)));
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    first_.collect(out);
    second_.collect(out);
    return out;
  }

 private:
  Eigen::Index latent_dim_ = 0;
  Linear<S> first_, second_;
};

/// Encoder plus classifier: the inference unit of every procedure.
template <typename S>
struct BackboneModel {
  EncoderConfig config;
  int n_classes = 0;
  Encoder<S> encoder;
  Classifier<S> classifier;

  BackboneModel() = default;
  BackboneModel(const EncoderConfig& cfg, int classes, std::uint64_t seed)
      : config(cfg), n_classes(classes),
        encoder(cfg, detail::mix_seed(seed, 0), "encoder"),
        classifier(cfg.latent_time, cfg.latent_dim, classes, detail::mix_seed(seed, 1), "classifier") {}

  std::vector<Parameter<S>*> parameters() {
    auto out = encoder.parameters();
    for (auto* p : classifier.parameters()) out.push_back(p);
    return out;
  }
};

/// Two encoders, two translators and one shared classifier. The target
/// encoder and the classifier carry the same names as a BackboneModel, so the
/// inference model can be restored from a bundle checkpoint.
template <typename S>
struct ContrastiveBundle {
  EncoderConfig source_config, target_config;
  int n_classes = 0;
  Encoder<S> source_encoder, target_encoder;
  Translator<S> source_to_target, target_to_source;
  Classifier<S> classifier;

  ContrastiveBundle() = default;
  ContrastiveBundle(const EncoderConfig& source, const EncoderConfig& target, int classes, std::uint64_t seed)
      : source_config(source), target_config(target), n_classes(classes),
        source_encoder(source, detail::mix_seed(seed, 2), "source_encoder"),
        target_encoder(target, detail::mix_seed(seed, 0), "encoder"),
        source_to_target(target.latent_dim, detail::mix_seed(seed, 3), "translator_s2t"),
        target_to_source(target.latent_dim, detail::mix_seed(seed, 4), "translator_t2s"),
        classifier(target.latent_time, target.latent_dim, classes, detail::mix_seed(seed, 1), "classifier") {
    if (source.latent_dim != target.latent_dim || source.latent_time != target.latent_time)
      throw ConfigMismatch("source and target latents must have the same shape");
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    for (auto* p : target_encoder.parameters()) out.push_back(p);
    for (auto* p : classifier.parameters()) out.push_back(p);
    for (auto* p : source_encoder.parameters()) out.push_back(p);
    for (auto* p : source_to_target.parameters()) out.push_back(p);
    for (auto* p : target_to_source.parameters()) out.push_back(p);
    return out;
  }
};

/// Two encoders feeding one shared classifier, no translators.
template <typename S>
struct SharedRepBundle {
  EncoderConfig source_config, target_config;
  int n_classes = 0;
  Encoder<S> source_encoder, target_encoder;
  Classifier<S> classifier;

  SharedRepBundle() = default;
  SharedRepBundle(const EncoderConfig& source, const EncoderConfig& target, int classes, std::uint64_t seed)
      : source_config(source), target_config(target), n_classes(classes),
        source_encoder(source, detail::mix_seed(seed, 2), "source_encoder"),
        target_encoder(target, detail::mix_seed(seed, 0), "encoder"),
        classifier(target.latent_time, target.latent_dim, classes, detail::mix_seed(seed, 1), "classifier") {
    if (source.latent_dim != target.latent_dim || source.latent_time != target.latent_time)
      throw ConfigMismatch("source and target latents must have the same shape");
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    for (auto* p : target_encoder.parameters()) out.push_back(p);
    for (auto* p : classifier.parameters()) out.push_back(p);
    for (auto* p : source_encoder.parameters()) out.push_back(p);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Eval-mode free functions.

template <typename Model>
std::size_t param_count(Model& model) {
  std::size_t n = 0;
  for (auto* p : model.parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

template <typename S>
Matrix<S> encode(Encoder<S>& encoder, const WindowBatch<S>& x) {
  Graph<S> g(false);
  return encoder.forward(g, x).value();
}

template <typename S>
Matrix<S> encode(BackboneModel<S>& model, const WindowBatch<S>& x) {
  return encode(model.encoder, x);
}

template <typename S>
struct Classification {
  Matrix<S> logits;
  Matrix<S> attention;
};

template <typename S>
Classification<S> classify(Classifier<S>& classifier, const Matrix<S>& latent) {
  Graph<S> g(false);
  auto out = classifier.forward(g, g.constant(latent));
  return {out.logits.value(), out.attention.value()};
}

template <typename S>
Classification<S> classify(BackboneModel<S>& model, const Matrix<S>& latent) {
  return classify(model.classifier, latent);
}

template <typename S>
Matrix<S> translate(Translator<S>& translator, const Matrix<S>& latent) {
  Graph<S> g(false);
  return translator.forward(g, g.constant(latent)).value();
}

/// Logits of the full inference path classifier(encoder(x)).
template <typename S>
Matrix<S> predict_logits(BackboneModel<S>& model, const WindowBatch<S>& x) {
  Graph<S> g(false);
  Var<S> latent = model.encoder.forward(g, x);
  return model.classifier.forward(g, latent).logits.value();
}

}  // namespace xmodal
