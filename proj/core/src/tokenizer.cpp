// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/tokenizer.hpp"

#include "deskmoe/errors.hpp"

namespace deskmoe {

std::vector<std::int32_t> ByteTokenizer::encode_text(std::string_view text) const {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
  return ids;
}

ByteTokenizer::Encoded ByteTokenizer::encode(std::span<const Piece> pieces) const {
  Encoded out;
  for (const Piece& p : pieces) {
    if (p.special) {
      out.ids.push_back(id(*p.special));
      out.trainable.push_back(p.trainable);
      continue;
    }
    for (std::int32_t b : encode_text(p.text)) {
      out.ids.push_back(b);
      out.trainable.push_back(p.trainable);
    }
  }
  return out;
}

std::string ByteTokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (std::int32_t id : ids) {
    if (id >= 0 && id < kByteVocab) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    } else if (auto s = registry_.special(id)) {
      out.append(SpecialTokenRegistry::text(*s));
    } else {
      throw InputError("decode: id " + std::to_string(id) + " outside the tokenizer vocabulary");
    }
  }
  return out;
}

}  // namespace deskmoe
