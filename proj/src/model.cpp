// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ucam {

namespace {

// y[o] = sum_i W[o,i] x[i] (+ b[o])
void matvec(const RealArray& w, const double* x, const RealArray* b, double* y) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  const double* wp = w.data();
  for (std::size_t o = 0; o < rows; ++o) {
    double acc = b ? (*b)[o] : 0.0;
    const double* row = wp + o * cols;
    for (std::size_t i = 0; i < cols; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// dx[i] += sum_o W[o,i] dy[o];  dW[o,i] += scale * dy[o] x[i]
void matvec_backward(const RealArray& w, const double* x, const double* dy, double* dx, RealArray& dw,
                     double scale = 1.0) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  const double* wp = w.data();
  double* dwp = dw.data();
  for (std::size_t o = 0; o < rows; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    const double gs = scale * g;
    const double* row = wp + o * cols;
    double* drow = dwp + o * cols;
    for (std::size_t i = 0; i < cols; ++i) drow[i] += gs * x[i];
    if (dx) {
      for (std::size_t i = 0; i < cols; ++i) dx[i] += row[i] * g;
    }
  }
}

void require_shape(const RealArray& a, std::size_t n, const char* what) {
  if (a.size() != n) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

}  // namespace

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::image: return "image";
    case Partition::question: return "question";
    case Partition::attention: return "attention";
    case Partition::classifier: return "classifier";
    case Partition::answer: return "answer";
    case Partition::uncertainty: return "uncertainty";
  }
  return "?";
}

Partition partition_from_name(std::string_view name) {
  for (Partition p : kAllPartitions) {
    if (partition_name(p) == name) return p;
  }
  throw std::invalid_argument("unknown partition: " + std::string(name));
}

Parameters Parameters::zeros(const ModelConfig& cfg) {
  Parameters p;
  p.cell_embedding = RealArray({cfg.cell_kinds, cfg.image_channels});
  p.token_embedding = RealArray({cfg.vocab_size, cfg.question_dim});
  p.key_image = RealArray({cfg.attention_dim, cfg.image_channels});
  p.key_question = RealArray({cfg.attention_dim, cfg.question_dim});
  p.value_image = RealArray({cfg.feature_dim, cfg.image_channels});
  p.value_question = RealArray({cfg.feature_dim, cfg.question_dim});
  p.value_bias = RealArray({cfg.feature_dim});
  p.w1 = RealArray({cfg.hidden, cfg.feature_dim});
  p.b1 = RealArray({cfg.hidden});
  p.w2 = RealArray({cfg.hidden, cfg.hidden});
  p.b2 = RealArray({cfg.hidden});
  p.w_answer = RealArray({cfg.answers, cfg.hidden});
  p.b_answer = RealArray({cfg.answers});
  p.w_variance = RealArray({cfg.answers, cfg.hidden});
  p.b_variance = RealArray({cfg.answers});
  return p;
}

Parameters Parameters::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters p = zeros(cfg);
  const RngStream root(seed, 0x1a17);
  std::uint64_t index = 0;
  p.for_each([&](Partition, std::string_view, RealArray& a) {
    RngStream s = root.child(index++);
    if (a.rank() == 1) return;  // biases start at zero
    // embeddings are lookups: unit scale; matrices: 1/sqrt(fan_in)
    const bool lookup = (&a == &p.cell_embedding) || (&a == &p.token_embedding);
    const double stddev = cfg.init_scale * (lookup ? 1.0 : 1.0 / std::sqrt(static_cast<double>(a.dim(1))));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = stddev * s.normal();
  });
  return p;
}

Parameters Parameters::zeros_like() const {
  Parameters out = *this;
  out.for_each([](Partition, std::string_view, RealArray& a) { a.fill(0.0); });
  return out;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each([&](Partition, std::string_view, const RealArray& a) { n += a.size(); });
  return n;
}

void axpy(Parameters& self, double scale, const Parameters& other) {
  std::vector<const RealArray*> src;
  other.for_each([&](Partition, std::string_view, const RealArray& a) { src.push_back(&a); });
  std::size_t k = 0;
  self.for_each([&](Partition, std::string_view, RealArray& a) {
    const RealArray& b = *src[k++];
    if (!a.same_shape(b)) throw std::invalid_argument("axpy: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  });
}

RealArray AttendedFeatureMap::pooled() const {
  const std::size_t d = map.dim(2);
  const std::size_t cells = map.dim(0) * map.dim(1);
  RealArray f({d});
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < d; ++k) f[k] += map[c * d + k];
  }
  return f;
}

GradientField GradientField::zeros(const ModelConfig& cfg) {
  return GradientField{RealArray({cfg.grid_rows, cfg.grid_cols, cfg.feature_dim})};
}

ImageGrid encode_image(const Scene& scene, const Parameters& params, const ModelConfig& cfg) {
  if (scene.rows != cfg.grid_rows || scene.cols != cfg.grid_cols || scene.cells.size() != cfg.cells()) {
    throw std::invalid_argument("scene dimensions do not match model config");
  }
  const std::size_t ch = cfg.image_channels;
  ImageGrid g{RealArray({cfg.grid_rows, cfg.grid_cols, ch})};
  for (std::size_t c = 0; c < scene.cells.size(); ++c) {
    const std::size_t kind = scene.cells[c];
    if (kind >= cfg.cell_kinds) throw std::invalid_argument("unknown cell kind");
    for (std::size_t k = 0; k < ch; ++k) g.features[c * ch + k] = params.cell_embedding[kind * ch + k];
  }
  return g;
}

QuestionEmbedding encode_question(std::span<const std::size_t> tokens, const Parameters& params,
                                  const ModelConfig& cfg) {
  if (tokens.empty()) throw std::invalid_argument("empty question");
  const std::size_t dq = cfg.question_dim;
  QuestionEmbedding q{RealArray({dq}), std::vector<std::size_t>(tokens.begin(), tokens.end())};
  // Weighted by token counts in id order, so repetition and permutation give
  // bit-identical embeddings.
  std::vector<std::size_t> count(cfg.vocab_size, 0);
  for (std::size_t t : tokens) {
    if (t >= cfg.vocab_size) throw std::invalid_argument("out-of-vocabulary");
    ++count[t];
  }
  const double n = static_cast<double>(tokens.size());
  for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
    if (count[t] == 0) continue;
    const double w = static_cast<double>(count[t]) / n;
    for (std::size_t k = 0; k < dq; ++k) q.vector[k] += w * params.token_embedding[t * dq + k];
  }
  for (std::size_t k = 0; k < dq; ++k) q.vector[k] = std::tanh(q.vector[k]);
  return q;
}

AttentionResult attend(const ImageGrid& image, const QuestionEmbedding& question, const Parameters& params,
                       const ModelConfig& cfg) {
  const std::size_t cells = cfg.cells(), ch = cfg.image_channels, ka = cfg.attention_dim, d = cfg.feature_dim;
  require_shape(image.features, cells * ch, "image grid");
  require_shape(question.vector, cfg.question_dim, "question embedding");
  AttentionResult r;
  r.keys = RealArray({cells, ka});
  r.query = RealArray({ka});
  r.values = RealArray({cells, d});
  r.scores = RealArray({cells});

  matvec(params.key_question, question.vector.data(), nullptr, r.query.data());
  RealArray question_value({d});
  matvec(params.value_question, question.vector.data(), &params.value_bias, question_value.data());

  const double scale = 1.0 / std::sqrt(static_cast<double>(ka));
  for (std::size_t c = 0; c < cells; ++c) {
    const double* g = image.features.data() + c * ch;
    double* key = r.keys.data() + c * ka;
    matvec(params.key_image, g, nullptr, key);
    double s = 0.0;
    for (std::size_t k = 0; k < ka; ++k) s += key[k] * r.query[k];
    r.scores[c] = s * scale;
    double* val = r.values.data() + c * d;
    matvec(params.value_image, g, nullptr, val);
    for (std::size_t k = 0; k < d; ++k) val[k] += question_value[k];
  }

  const ProbabilityVector alpha = softmax(r.scores.span());
  r.weights.alpha = RealArray({cfg.grid_rows, cfg.grid_cols}, alpha.values());
  r.features.map = RealArray({cfg.grid_rows, cfg.grid_cols, d});
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < d; ++k) r.features.map[c * d + k] = alpha[c] * r.values[c * d + k];
  }
  return r;
}

namespace {

void dense_relu_dropout(const RealArray& w, const RealArray& b, const RealArray& x, DropoutSpec& dropout,
                        RealArray& pre, RealArray& h, RealArray& mask) {
  const std::size_t n = w.dim(0);
  pre = RealArray({n});
  h = RealArray({n});
  mask = RealArray({n}, 1.0);
  matvec(w, x.data(), &b, pre.data());
  if (dropout.rate > 0.0) {
    const double keep = 1.0 / (1.0 - dropout.rate);
    for (std::size_t i = 0; i < n; ++i) mask[i] = dropout.stream.uniform() < dropout.rate ? 0.0 : keep;
  }
  for (std::size_t i = 0; i < n; ++i) h[i] = (pre[i] > 0.0 ? pre[i] : 0.0) * mask[i];
}

}  // namespace

ClassifierState classify(const AttendedFeatureMap& features, const Parameters& params, DropoutSpec& dropout) {
  if (dropout.rate < 0.0 || dropout.rate >= 1.0) throw std::invalid_argument("dropout rate outside [0,1)");
  ClassifierState s;
  s.pooled = features.pooled();
  require_shape(s.pooled, params.w1.dim(1), "attended feature");
  dense_relu_dropout(params.w1, params.b1, s.pooled, dropout, s.pre1, s.h1, s.mask1);
  dense_relu_dropout(params.w2, params.b2, s.h1, dropout, s.pre2, s.h2, s.mask2);
  return s;
}

RealArray predict_logits(const RealArray& hidden, const Parameters& params) {
  require_shape(hidden, params.w_answer.dim(1), "hidden");
  RealArray y({params.w_answer.dim(0)});
  matvec(params.w_answer, hidden.data(), &params.b_answer, y.data());
  return y;
}

RealArray predict_log_variance(const RealArray& hidden, const Parameters& params) {
  require_shape(hidden, params.w_variance.dim(1), "hidden");
  RealArray s({params.w_variance.dim(0)});
  matvec(params.w_variance, hidden.data(), &params.b_variance, s.data());
  return s;
}

ForwardPass forward_encoder(const Scene& scene, std::span<const std::size_t> tokens, const Parameters& params,
                            const ModelConfig& cfg) {
  ForwardPass pass;
  pass.scene = scene;
  pass.image = encode_image(scene, params, cfg);
  pass.question = encode_question(tokens, params, cfg);
  pass.attention = attend(pass.image, pass.question, params, cfg);
  return pass;
}

std::size_t add_head_pass(ForwardPass& pass, const Parameters& params, DropoutSpec& dropout) {
  HeadPass h;
  h.classifier = classify(pass.attention.features, params, dropout);
  h.logits = predict_logits(h.classifier.hidden(), params);
  h.log_variance = predict_log_variance(h.classifier.hidden(), params);
  pass.heads.push_back(std::move(h));
  return pass.heads.size() - 1;
}

GradientField backward_heads(const ForwardPass& pass, const Parameters& params, std::span<const HeadSeed> seeds,
                             Parameters& grads, double grad_scale) {
  const RealArray& fmap = pass.attention.features.map;
  const std::size_t d = fmap.dim(2);
  const std::size_t hidden = params.w1.dim(0);
  RealArray d_pooled({d});
  std::vector<double> dh2(hidden), dpre2(hidden), dh1(hidden), dpre1(hidden);

  for (const HeadSeed& seed : seeds) {
    if (seed.head >= pass.heads.size()) throw std::out_of_range("node not in recorded pass");
    const HeadPass& h = pass.heads[seed.head];
    const ClassifierState& cs = h.classifier;
    std::fill(dh2.begin(), dh2.end(), 0.0);
    if (!seed.d_logits.empty()) {
      require_shape(seed.d_logits, params.w_answer.dim(0), "d_logits");
      matvec_backward(params.w_answer, cs.h2.data(), seed.d_logits.data(), dh2.data(), grads.w_answer, grad_scale);
      for (std::size_t i = 0; i < seed.d_logits.size(); ++i) grads.b_answer[i] += grad_scale * seed.d_logits[i];
    }
    if (!seed.d_log_variance.empty()) {
      require_shape(seed.d_log_variance, params.w_variance.dim(0), "d_log_variance");
      matvec_backward(params.w_variance, cs.h2.data(), seed.d_log_variance.data(), dh2.data(), grads.w_variance,
                      grad_scale);
      for (std::size_t i = 0; i < seed.d_log_variance.size(); ++i) {
        grads.b_variance[i] += grad_scale * seed.d_log_variance[i];
      }
    }
    for (std::size_t i = 0; i < hidden; ++i) dpre2[i] = cs.pre2[i] > 0.0 ? dh2[i] * cs.mask2[i] : 0.0;
    std::fill(dh1.begin(), dh1.end(), 0.0);
    matvec_backward(params.w2, cs.h1.data(), dpre2.data(), dh1.data(), grads.w2, grad_scale);
    for (std::size_t i = 0; i < hidden; ++i) grads.b2[i] += grad_scale * dpre2[i];
    for (std::size_t i = 0; i < hidden; ++i) dpre1[i] = cs.pre1[i] > 0.0 ? dh1[i] * cs.mask1[i] : 0.0;
    matvec_backward(params.w1, cs.pooled.data(), dpre1.data(), d_pooled.data(), grads.w1, grad_scale);
    for (std::size_t i = 0; i < hidden; ++i) grads.b1[i] += grad_scale * dpre1[i];
  }

  // f = sum_{u,v} F[u,v,:], so every cell receives df.
  GradientField tap{RealArray(fmap.shape())};
  const std::size_t cells = fmap.dim(0) * fmap.dim(1);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < d; ++k) tap.values[c * d + k] = d_pooled[k];
  }
  return tap;
}

void backward_encoder(const ForwardPass& pass, const Parameters& params, const GradientField& d_features,
                      Parameters& grads) {
  const AttentionResult& att = pass.attention;
  const std::size_t cells = att.scores.size();
  const std::size_t d = att.values.dim(1);
  const std::size_t ka = att.query.size();
  const std::size_t ch = params.key_image.dim(1);
  const std::size_t dq = params.key_question.dim(1);
  if (d_features.values.shape() != att.features.map.shape()) {
    throw std::invalid_argument("shape mismatch: gradient field");
  }
  const RealArray& alpha = att.weights.alpha;
  const RealArray& dF = d_features.values;

  // F = alpha * value
  std::vector<double> d_alpha(cells, 0.0);
  RealArray d_value_sum({d});
  RealArray d_image({cells, ch});
  std::vector<double> dz(d);
  for (std::size_t c = 0; c < cells; ++c) {
    double da = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      da += dF[c * d + k] * att.values[c * d + k];
      dz[k] = alpha[c] * dF[c * d + k];
      d_value_sum[k] += dz[k];
    }
    d_alpha[c] = da;
    matvec_backward(params.value_image, pass.image.features.data() + c * ch, dz.data(), d_image.data() + c * ch,
                    grads.value_image);
  }
  for (std::size_t k = 0; k < d; ++k) grads.value_bias[k] += d_value_sum[k];
  RealArray d_question({dq});
  matvec_backward(params.value_question, pass.question.vector.data(), d_value_sum.data(), d_question.data(),
                  grads.value_question);

  // alpha = softmax(scores)
  double dot = 0.0;
  for (std::size_t c = 0; c < cells; ++c) dot += alpha[c] * d_alpha[c];
  const double scale = 1.0 / std::sqrt(static_cast<double>(ka));
  RealArray d_query({ka});
  std::vector<double> d_key(ka);
  for (std::size_t c = 0; c < cells; ++c) {
    const double ds = alpha[c] * (d_alpha[c] - dot) * scale;
    if (ds == 0.0) continue;
    const double* key = att.keys.data() + c * ka;
    for (std::size_t k = 0; k < ka; ++k) {
      d_key[k] = ds * att.query[k];
      d_query[k] += ds * key[k];
    }
    matvec_backward(params.key_image, pass.image.features.data() + c * ch, d_key.data(), d_image.data() + c * ch,
                    grads.key_image);
  }
  matvec_backward(params.key_question, pass.question.vector.data(), d_query.data(), d_question.data(),
                  grads.key_question);

  // q = tanh(mean of token embeddings)
  const std::vector<std::size_t>& tokens = pass.question.tokens;
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t k = 0; k < dq; ++k) {
    const double q = pass.question.vector[k];
    d_question[k] *= (1.0 - q * q) * inv;
  }
  for (std::size_t t : tokens) {
    for (std::size_t k = 0; k < dq; ++k) grads.token_embedding[t * dq + k] += d_question[k];
  }

  // g_i = cell_embedding[kind]
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t kind = pass.scene.cells[c];
    for (std::size_t k = 0; k < ch; ++k) grads.cell_embedding[kind * ch + k] += d_image[c * ch + k];
  }
}

BackwardResult backward(const ForwardPass& pass, const Parameters& params, std::span<const HeadSeed> seeds,
                        const GradientField* injection) {
  BackwardResult r{GradientField{}, params.zeros_like()};
  r.tap = backward_heads(pass, params, seeds, r.grads);
  if (injection) {
    if (!injection->values.same_shape(r.tap.values)) throw std::invalid_argument("shape mismatch: injection");
    GradientField total = r.tap;
    for (std::size_t i = 0; i < total.values.size(); ++i) total.values[i] += injection->values[i];
    backward_encoder(pass, params, total, r.grads);
  } else {
    backward_encoder(pass, params, r.tap, r.grads);
  }
  return r;
}

}  // namespace ucam
