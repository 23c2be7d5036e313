// Copyright 2026 The Tabaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Logistic regression and a one-hidden-layer tanh MLP with exact analytic
// per-example gradients. All arithmetic is float64.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabaudit/error.hpp"
#include "tabaudit/io.hpp"
#include "tabaudit/random.hpp"

namespace tabaudit {

enum class ModelKind { kLogisticRegression, kMlp };

inline std::string ToString(ModelKind k) {
  return k == ModelKind::kMlp ? "mlp" : "logistic_regression";
}

inline ModelKind ParseModelKind(const std::string& s) {
  if (s == "mlp") return ModelKind::kMlp;
  if (s == "logistic_regression") return ModelKind::kLogisticRegression;
  Fail(ErrorCode::kConfig,
       "model kind must be logistic_regression or mlp, got '" + s + "'");
}

struct ModelSpec {
  ModelKind kind = ModelKind::kLogisticRegression;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // mlp only
  // Output width. Classifiers need >= 2; a generator network may use 1.
  std::size_t num_classes = 2;
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  std::size_t ParamCount() const {
    if (kind == ModelKind::kLogisticRegression) {
      return num_classes * input_dim + num_classes;
    }
    return hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim +
           num_classes;
  }

  void Validate(bool classifier = true) const {
    Require(input_dim >= 1, "model input_dim must be positive");
    Require(num_classes >= (classifier ? 2u : 1u),
            classifier ? "classifier num_classes must be >= 2"
                       : "network output width must be >= 1");
    Require(kind != ModelKind::kMlp || hidden_dim >= 1,
            "mlp hidden_dim must be >= 1");
    Require(std::isfinite(init_scale) && init_scale >= 0.0,
            "init_scale must be finite and non-negative");
  }

  nlohmann::json ToJson() const {
    return {{"kind", ToString(kind)},         {"input_dim", input_dim},
            {"hidden_dim", hidden_dim},       {"num_classes", num_classes},
            {"init_scale", init_scale},       {"seed", seed}};
  }

  static ModelSpec FromJson(const nlohmann::json& j) {
    ModelSpec s;
    s.kind = ParseModelKind(j.value("kind", std::string("logistic_regression")));
    s.input_dim = j.value("input_dim", std::size_t{1});
    s.hidden_dim = j.value("hidden_dim", std::size_t{0});
    s.num_classes = j.value("num_classes", std::size_t{2});
    s.init_scale = j.value("init_scale", 0.1);
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Flat parameter vector. Layout (row-major):
//   logistic_regression: W[C][D], b[C]
//   mlp:                 W1[H][D], b1[H], W2[C][H], b2[C]
struct ParamVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

inline ParamVector InitParams(const ModelSpec& spec) {
  spec.Validate(false);
  Rng rng(spec.seed, stream_tag::kInit);
  ParamVector p;
  p.values.resize(spec.ParamCount());
  for (auto& v : p.values) v = rng.Uniform(-spec.init_scale, spec.init_scale);
  if (spec.init_scale == 0.0) std::fill(p.values.begin(), p.values.end(), 0.0);
  return p;
}

// Intermediate values of one forward pass, reused by the backward pass.
struct ForwardPass {
  std::vector<double> hidden;   // tanh activations (mlp only)
  std::vector<double> outputs;  // logits / raw network outputs
};

namespace internal {

inline void CheckShapes(const ModelSpec& spec, const ParamVector& params,
                        std::span<const double> x) {
  if (x.size() != spec.input_dim) {
    Fail(ErrorCode::kInvalidArgument,
         "feature dimension " + std::to_string(x.size()) +
             " does not match model input_dim " +
             std::to_string(spec.input_dim));
  }
  if (params.size() != spec.ParamCount()) {
    Fail(ErrorCode::kInvalidArgument, "parameter vector length mismatch");
  }
}

// out[r] = b[r] + sum_c W[r][c] x[c]
inline void Affine(std::span<const double> w, std::span<const double> b,
                   std::span<const double> x, std::span<double> out) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = b[r];
    const double* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
    out[r] = s;
  }
}

}  // namespace internal

inline ForwardPass Forward(const ModelSpec& spec, const ParamVector& params,
                           std::span<const double> x) {
  internal::CheckShapes(spec, params, x);
  const std::span<const double> p(params.values);
  const std::size_t d = spec.input_dim, c = spec.num_classes;
  ForwardPass f;
  f.outputs.resize(c);
  if (spec.kind == ModelKind::kLogisticRegression) {
    internal::Affine(p.subspan(0, c * d), p.subspan(c * d, c), x, f.outputs);
    return f;
  }
  const std::size_t h = spec.hidden_dim;
  f.hidden.resize(h);
  internal::Affine(p.subspan(0, h * d), p.subspan(h * d, h), x, f.hidden);
  for (auto& v : f.hidden) v = std::tanh(v);
  const std::size_t o2 = h * d + h;
  internal::Affine(p.subspan(o2, c * h), p.subspan(o2 + c * h, c), f.hidden,
                   f.outputs);
  return f;
}

// Given dL/d(outputs), accumulates dL/d(params) into grad_params and, if
// non-empty, writes dL/d(x) into grad_input.
inline void Backward(const ModelSpec& spec, const ParamVector& params,
                     std::span<const double> x, const ForwardPass& f,
                     std::span<const double> grad_outputs,
                     std::span<double> grad_params,
                     std::span<double> grad_input = {}) {
  const std::span<const double> p(params.values);
  const std::size_t d = spec.input_dim, c = spec.num_classes;
  if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), 0.0);
  if (spec.kind == ModelKind::kLogisticRegression) {
    for (std::size_t r = 0; r < c; ++r) {
      const double g = grad_outputs[r];
      for (std::size_t k = 0; k < d; ++k) {
        grad_params[r * d + k] += g * x[k];
        if (!grad_input.empty()) grad_input[k] += g * p[r * d + k];
      }
      grad_params[c * d + r] += g;
    }
    return;
  }
  const std::size_t h = spec.hidden_dim;
  const std::size_t o2 = h * d + h;
  std::vector<double> grad_hidden(h, 0.0);
  for (std::size_t r = 0; r < c; ++r) {
    const double g = grad_outputs[r];
    for (std::size_t k = 0; k < h; ++k) {
      grad_params[o2 + r * h + k] += g * f.hidden[k];
      grad_hidden[k] += g * p[o2 + r * h + k];
    }
    grad_params[o2 + c * h + r] += g;
  }
  for (std::size_t k = 0; k < h; ++k) {
    const double pre = grad_hidden[k] * (1.0 - f.hidden[k] * f.hidden[k]);
    for (std::size_t j = 0; j < d; ++j) {
      grad_params[k * d + j] += pre * x[j];
      if (!grad_input.empty()) grad_input[j] += pre * p[k * d + j];
    }
    grad_params[h * d + k] += pre;
  }
}

inline std::vector<double> Softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

inline double LogSumExp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return m + std::log(z);
}

inline std::vector<double> Predict(const ModelSpec& spec,
                                   const ParamVector& params,
                                   std::span<const double> x) {
  return Softmax(Forward(spec, params, x).outputs);
}

// Cross-entropy of the softmax output at the true label.
inline double PerExampleLoss(const ModelSpec& spec, const ParamVector& params,
                             std::span<const double> x, std::size_t label) {
  Require(label < spec.num_classes, "label out of range");
  const ForwardPass f = Forward(spec, params, x);
  return std::max(0.0, LogSumExp(f.outputs) - f.outputs[label]);
}

inline std::vector<double> PerSampleGradient(const ModelSpec& spec,
                                             const ParamVector& params,
                                             std::span<const double> x,
                                             std::size_t label) {
  Require(label < spec.num_classes, "label out of range");
  const ForwardPass f = Forward(spec, params, x);
  std::vector<double> dout = Softmax(f.outputs);
  dout[label] -= 1.0;
  std::vector<double> grad(spec.ParamCount(), 0.0);
  Backward(spec, params, x, f, dout, grad);
  return grad;
}

// Gradient of the per-example loss with respect to the input features.
inline std::vector<double> InputGradient(const ModelSpec& spec,
                                         const ParamVector& params,
                                         std::span<const double> x,
                                         std::size_t label) {
  Require(label < spec.num_classes, "label out of range");
  const ForwardPass f = Forward(spec, params, x);
  std::vector<double> dout = Softmax(f.outputs);
  dout[label] -= 1.0;
  std::vector<double> grad(spec.ParamCount(), 0.0);
  std::vector<double> gx(spec.input_dim, 0.0);
  Backward(spec, params, x, f, dout, grad, gx);
  return gx;
}

// Plain minibatch SGD on the mean cross-entropy. Used for attack classifiers,
// never for the audited models.
inline ParamVector TrainPlainSgd(const ModelSpec& spec,
                                 std::span<const double> features,
                                 std::span<const std::size_t> labels,
                                 std::size_t steps, double learning_rate,
                                 std::size_t batch_size, std::uint64_t seed) {
  Require(!labels.empty(), "plain SGD needs data");
  Require(features.size() == labels.size() * spec.input_dim,
          "feature matrix shape mismatch");
  ParamVector params = InitParams(spec);
  Rng rng(seed, stream_tag::kBatch);
  const std::size_t n = labels.size();
  batch_size = std::max<std::size_t>(1, std::min(batch_size, n));
  std::vector<double> grad(spec.ParamCount());
  for (std::size_t step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const std::size_t i = batch_size == n ? b : rng.Index(n);
      const auto x = features.subspan(i * spec.input_dim, spec.input_dim);
      const auto g = PerSampleGradient(spec, params, x, labels[i]);
      for (std::size_t k = 0; k < g.size(); ++k) grad[k] += g[k];
    }
    const double scale = learning_rate / static_cast<double>(batch_size);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      params.values[k] -= scale * grad[k];
    }
  }
  return params;
}

// JSON header line with the spec, then the parameters as float64.
inline void WriteParams(std::ostream& out, const ModelSpec& spec,
                        const ParamVector& params) {
  nlohmann::json header = spec.ToJson();
  header["schema_version"] = kSchemaVersion;
  header["count"] = params.size();
  WriteHeaderLine(out, header);
  WriteF64(out, params.values);
}

inline std::pair<ModelSpec, ParamVector> ReadParams(std::istream& in) {
  const nlohmann::json header = ReadHeaderLine(in);
  const ModelSpec spec = ModelSpec::FromJson(header);
  const std::size_t count = header.at("count");
  Require(count == spec.ParamCount(), "parameter count does not match spec",
          ErrorCode::kIo);
  return {spec, ParamVector{ReadF64(in, count)}};
}

}  // namespace tabaudit
