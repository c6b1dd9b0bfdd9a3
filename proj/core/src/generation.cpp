// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/generation.hpp"

#include <memory>

#include "deskmoe/errors.hpp"
#include "deskmoe/tokenizer.hpp"
#include "deskmoe/transformer.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

std::string strip_reserved(std::string s) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (Special sp : SpecialTokenRegistry::all()) {
      const std::string_view t = SpecialTokenRegistry::text(sp);
      for (auto at = s.find(t); at != std::string::npos; at = s.find(t)) {
        s.erase(at, t.size());
        changed = true;
      }
    }
  }
  return s;
}

class Decoder {
 public:
  Decoder(const ParameterStore& store, std::vector<std::int32_t> ids, const SamplingParams& sampling,
          std::mt19937_64& rng)
      : store_(store), ids_(std::move(ids)), sampling_(sampling), rng_(rng) {}

  std::vector<std::int32_t>& ids() { return ids_; }
  bool full() const { return ids_.size() + 2 >= store_.config().context_length; }

  std::int32_t next(const std::vector<bool>& banned) {
    std::vector<std::int32_t> pos, seg;
    const Tensor logits = forward_logits(store_, single_sequence(ids_, pos, seg));
    const auto last = logits.row(logits.rows() - 1);
    // std::vector<bool> has no contiguous storage.
    std::unique_ptr<bool[]> mask(new bool[banned.size()]);
    for (std::size_t i = 0; i < banned.size(); ++i) mask[i] = banned[i];
    return sample_next(last, sampling_, rng_, std::span<const bool>(mask.get(), banned.size()));
  }

 private:
  const ParameterStore& store_;
  std::vector<std::int32_t> ids_;
  const SamplingParams& sampling_;
  std::mt19937_64& rng_;
};

std::vector<bool> banned_except(std::size_t vocab, std::int32_t allowed_special, bool allow_special) {
  std::vector<bool> banned(vocab, true);
  for (std::int32_t b = 0; b < ByteTokenizer::kByteVocab; ++b) banned[static_cast<std::size_t>(b)] = false;
  if (allow_special) banned[static_cast<std::size_t>(allowed_special)] = false;
  return banned;
}

}  // namespace

GenerationResult generate(const ParameterStore& store, const Conversation& conversation, const ReasoningConfig& mode,
                          const SamplingParams& sampling, std::mt19937_64& rng, const GenerationLimits& limits) {
  sampling.validate();
  const ByteTokenizer tok;
  const std::size_t vocab = store.config().vocab_size;
  if (vocab < tok.vocab_size()) {
    throw ConfigError("generate: model vocabulary " + std::to_string(vocab) + " cannot hold the " +
                      std::to_string(tok.vocab_size()) + "-token chat tokenizer");
  }

  GenerationResult r;
  r.prompt_ids = tok.encode(generation_prompt(conversation, mode)).ids;
  if (r.prompt_ids.size() + 4 >= store.config().context_length) throw InputError("generate: prompt exceeds the context");
  Decoder dec(store, r.prompt_ids, sampling, rng);
  const std::int32_t think_close = tok.id(Special::kThinkClose);
  const std::int32_t im_end = tok.id(Special::kImEnd);

  auto run_phase = [&](std::int32_t stop, std::size_t budget) {
    std::vector<std::int32_t> bytes;
    while (true) {
      if (bytes.size() >= budget || dec.full()) {
        r.truncated = true;
        break;
      }
      const std::int32_t t = dec.next(banned_except(vocab, stop, !bytes.empty()));
      dec.ids().push_back(t);
      r.generated_ids.push_back(t);
      if (t == stop) break;
      bytes.push_back(t);
    }
    return tok.decode(bytes);
  };

  if (mode.enabled) {
    std::string reasoning = run_phase(think_close, limits.max_reasoning_tokens);
    if (dec.ids().back() != think_close) dec.ids().push_back(think_close);
    dec.ids().push_back('\n');
    if (reasoning.ends_with('\n')) reasoning.pop_back();
    r.body.reasoning = strip_reserved(std::move(reasoning));
    if (r.body.reasoning.empty()) r.body.reasoning = "...";
  }
  r.body.answer = strip_reserved(run_phase(im_end, limits.max_answer_tokens));
  r.text = render_assistant(mode, r.body);
  return r;
}

DESKMOE_NUMERIC_END
