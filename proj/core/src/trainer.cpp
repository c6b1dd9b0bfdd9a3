// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "deskmoe/errors.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

std::string step_name(const char* prefix, std::size_t step, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s-%06zu%s", prefix, step, ext);
  return buf;
}

void add_into(GradientMap& acc, GradientMap&& g, Real factor) {
  for (auto& [name, grad] : g) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      if (factor != Real(1)) {
        for (Real& x : grad.storage()) x *= factor;
      }
      acc.emplace(name, std::move(grad));
    } else {
      it->second.add_scaled(grad, factor);
    }
  }
}

}  // namespace

double global_norm(const GradientMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    for (Real x : g.data()) s += static_cast<double>(x) * static_cast<double>(x);
  }
  return std::sqrt(s);
}

UpdateStats AdamW::step(ParameterStore& store, const GradientMap& grads, double lr) {
  UpdateStats stats;
  stats.grad_norm = global_norm(grads);
  if (!std::isfinite(stats.grad_norm)) throw NumericError("AdamW: gradient norm is not finite");
  double clip = 1.0;
  if (config_.clip_norm > 0.0 && stats.grad_norm > config_.clip_norm) {
    clip = config_.clip_norm / stats.grad_norm;
    stats.clipped = true;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = store.at(name);
    require_same_shape(p, g, name.c_str());
    Moments& mo = moments_[name];
    if (mo.m.empty()) {
      mo.m.assign(p.numel(), 0.0);
      mo.v.assign(p.numel(), 0.0);
    }
    const double decay = p.rank() == 2 ? lr * config_.weight_decay : 0.0;
    auto pd = p.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double gi = static_cast<double>(gd[i]) * clip;
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * gi;
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      const double x = static_cast<double>(pd[i]);
      pd[i] = static_cast<Real>(x - lr * mhat / (std::sqrt(vhat) + config_.eps) - decay * x);
    }
  }
  return stats;
}

void sgd_step(ParameterStore& store, const GradientMap& grads, double lr) {
  for (const auto& [name, g] : grads) store.at(name).add_scaled(g, static_cast<Real>(-lr));
}

AccumulatedLoss accumulate_gradients(const ParameterStore& store, std::span<const PackedSequence> batch,
                                     std::size_t grad_accum, Real aux_coefficient) {
  if (batch.empty()) throw InputError("accumulate_gradients: empty batch");
  if (grad_accum == 0) throw ConfigError("accumulate_gradients: grad_accum must be positive");
  const std::size_t micro = std::min(grad_accum, batch.size());
  const std::size_t per = (batch.size() + micro - 1) / micro;

  struct Part {
    GradientMap grads;
    double ce, aux, total, weight;
  };
  std::vector<Part> parts;
  double total_weight = 0.0;
  AccumulatedLoss out;
  for (std::size_t begin = 0; begin < batch.size(); begin += per) {
    const std::size_t end = std::min(batch.size(), begin + per);
    const PackedSequence joined = concat_rows(batch.subspan(begin, end - begin));
    for (std::int32_t s : joined.segments) out.tokens += s != 0;

    Tape tape;
    BoundModel model(store, tape, true);
    SftLoss loss = sft_loss(model, joined, aux_coefficient);
    const double total = loss.total.value()[0];
    if (!std::isfinite(total)) {
      throw NumericError("non-finite loss " + std::to_string(total) + " in micro-batch starting at row " +
                         std::to_string(begin));
    }
    parts.push_back({tape.backward(loss.total), loss.cross_entropy.value()[0], loss.aux_loss.value()[0], total,
                     loss.target_weight});
    total_weight += loss.target_weight;
  }

  for (Part& p : parts) {
    const double share = p.weight / total_weight;
    out.loss += share * p.total;
    out.cross_entropy += share * p.ce;
    out.aux_loss += share * p.aux;
    add_into(out.grads, std::move(p.grads), static_cast<Real>(share));
  }
  return out;
}

void to_json(nlohmann::json& j, const StepMetrics& m) {
  j = {{"step", m.step},
       {"loss", m.loss},
       {"cross_entropy", m.cross_entropy},
       {"aux_loss", m.aux_loss},
       {"lr", m.lr},
       {"grad_norm", m.grad_norm},
       {"tokens_seen", m.tokens_seen}};
}

Trainer::Trainer(ParameterStore& store, TrainOptions options)
    : store_(&store), options_(std::move(options)), optimizer_(options_.optimizer) {
  options_.stage.validate();
  if (options_.checkpoint_interval == 0) throw ConfigError("checkpoint interval must be positive");
  if (options_.checkpoint_dir) std::filesystem::create_directories(*options_.checkpoint_dir);
}

void Trainer::write_diagnostic(const std::string& message, const GradientMap* grads) const {
  if (!options_.checkpoint_dir) return;
  nlohmann::json d = {{"step", step_}, {"message", message}, {"lr", lr_at(options_.stage, step_)}};
  d["non_finite_parameters"] = nlohmann::json::array();
  for (const auto& [name, t] : store_->tensors()) {
    if (!t.all_finite()) d["non_finite_parameters"].push_back(name);
  }
  if (grads) {
    d["non_finite_gradients"] = nlohmann::json::array();
    for (const auto& [name, g] : *grads) {
      if (!g.all_finite()) d["non_finite_gradients"].push_back(name);
    }
  }
  std::ofstream out(*options_.checkpoint_dir / step_name("diagnostic", step_, ".json"));
  out << d.dump(2) << '\n';
}

StepMetrics Trainer::train_step(std::span<const PackedSequence> batch) {
  const StageSpec& stage = options_.stage;
  StepMetrics m;
  m.lr = lr_at(stage, step_);
  AccumulatedLoss acc;
  try {
    acc = accumulate_gradients(*store_, batch, stage.grad_accum.at(step_), static_cast<Real>(stage.aux_coefficient));
    m.grad_norm = optimizer_.step(*store_, acc.grads, m.lr).grad_norm;
  } catch (const NumericError& e) {
    write_diagnostic(e.what(), acc.grads.empty() ? nullptr : &acc.grads);
    throw;
  }

  ++step_;
  tokens_seen_ += acc.tokens;
  m.step = step_;
  m.loss = acc.loss;
  m.cross_entropy = acc.cross_entropy;
  m.aux_loss = acc.aux_loss;
  m.tokens_seen = tokens_seen_;

  if (options_.metrics_path) {
    std::ofstream out(*options_.metrics_path, std::ios::app);
    if (!out) throw IoError("cannot append to " + options_.metrics_path->string());
    out << nlohmann::json(m).dump() << '\n';
  }
  if (options_.checkpoint_dir && step_ % options_.checkpoint_interval == 0) {
    const auto path = *options_.checkpoint_dir / step_name("step", step_, ".bin");
    store_->save(path, {{"step", step_}, {"seed", options_.seed}, {"stage", stage.name}, {"tokens_seen", tokens_seen_}});
    checkpoints_.push_back(path);
  }
  return m;
}

std::vector<StepMetrics> Trainer::run(std::span<const PackedSequence> data, std::size_t steps) {
  if (data.empty()) throw InputError("training data is empty");
  std::mt19937_64 rng(options_.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  std::vector<StepMetrics> out;
  std::vector<PackedSequence> batch;
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t gbs = std::min(options_.stage.global_batch.at(step_), data.size());
    batch.clear();
    while (batch.size() < gbs) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(data[order[cursor++]]);
    }
    out.push_back(train_step(batch));
  }
  return out;
}

DESKMOE_NUMERIC_END
