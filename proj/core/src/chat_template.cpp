// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/chat_template.hpp"

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"

namespace deskmoe {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";

std::string_view tok(Special s) { return SpecialTokenRegistry::text(s); }

Special language_token(Language l) { return l == Language::kEnglish ? Special::kReasoningEn : Special::kReasoningIta; }

void reject_reserved(std::string_view text, const char* what) {
  for (Special s : SpecialTokenRegistry::all()) {
    if (text.find(tok(s)) != std::string_view::npos) {
      throw InputError(std::string(what) + " contains the reserved string " + std::string(tok(s)));
    }
  }
}

bool consume(std::string_view& text, std::string_view prefix) {
  if (!text.starts_with(prefix)) return false;
  text.remove_prefix(prefix.size());
  return true;
}

void append_header(std::vector<Piece>& out, Role role) {
  out.push_back(Piece::control(Special::kImStart));
  out.push_back(Piece::plain(std::string(role_name(role)) + "\n"));
}

void append_footer(std::vector<Piece>& out) {
  out.push_back(Piece::control(Special::kImEnd));
  out.push_back(Piece::plain("\n"));
}

void append_mode_prefix(std::vector<Piece>& out, const ReasoningConfig& rc) {
  if (rc.enabled) {
    out.push_back(Piece::control(language_token(rc.language)));
    out.push_back(Piece::plain("\n"));
    if (rc.turbo) {
      out.push_back(Piece::control(Special::kTurbo));
      out.push_back(Piece::plain("\n"));
    }
  }
  out.push_back(Piece::control(Special::kThinkOpen));
  out.push_back(Piece::plain("\n"));
}

void append_messages(std::vector<Piece>& out, const Conversation& conv) {
  for (const Message& m : conv.messages) {
    append_header(out, m.role);
    out.push_back(Piece::plain(m.content));
    append_footer(out);
  }
}

}  // namespace

std::string_view role_name(Role r) {
  switch (r) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
    case Role::kTool:
      return "tool";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  if (name == "tool") return Role::kTool;
  throw InputError("unknown role '" + std::string(name) + "'");
}

void Conversation::validate() const {
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const Message& m = messages[i];
    if ((m.role == Role::kUser || m.role == Role::kAssistant) && m.content.empty()) {
      throw InputError("message " + std::to_string(i) + " (" + std::string(role_name(m.role)) + ") is empty");
    }
  }
}

void to_json(nlohmann::json& j, const Conversation& c) {
  j = nlohmann::json::object();
  j["messages"] = nlohmann::json::array();
  for (const Message& m : c.messages) j["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
}

void from_json(const nlohmann::json& j, Conversation& c) {
  const nlohmann::json& list = j.is_array() ? j : j.at("messages");
  c.messages.clear();
  for (const auto& m : list) {
    c.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  }
  c.validate();
}

void ReasoningConfig::validate() const {
  if (turbo && !enabled) throw ConfigError("turbo reasoning requires reasoning to be enabled");
}

ReasoningConfig parse_mode(std::string_view name) {
  if (name == "none" || name == "disabled") return {};
  if (name == "reasoning_en") return {true, Language::kEnglish, false};
  if (name == "reasoning_ita") return {true, Language::kItalian, false};
  if (name == "reasoning_en_turbo") return {true, Language::kEnglish, true};
  if (name == "reasoning_ita_turbo") return {true, Language::kItalian, true};
  throw ConfigError("unknown reasoning mode '" + std::string(name) + "'");
}

std::string mode_name(const ReasoningConfig& rc) {
  if (!rc.enabled) return "none";
  std::string n = rc.language == Language::kEnglish ? "reasoning_en" : "reasoning_ita";
  return rc.turbo ? n + "_turbo" : n;
}

std::vector<Piece> assistant_pieces(const ReasoningConfig& rc, const AssistantBody& body) {
  rc.validate();
  if (rc.enabled && body.reasoning.empty()) throw ConfigError("reasoning mode needs reasoning text");
  if (!rc.enabled && !body.reasoning.empty()) throw ConfigError("reasoning text given with reasoning disabled");
  reject_reserved(body.reasoning, "reasoning text");
  reject_reserved(body.answer, "answer text");

  std::vector<Piece> out;
  append_mode_prefix(out, rc);
  if (rc.enabled) {
    out.push_back(Piece::plain(body.reasoning, true));
    out.push_back(Piece::plain("\n", true));
  }
  // The model closes its own reasoning block; in disabled mode the prompt does.
  Piece close = Piece::control(Special::kThinkClose);
  close.trainable = rc.enabled;
  out.push_back(close);
  out.push_back(Piece::plain("\n", rc.enabled));
  out.push_back(Piece::plain(body.answer, true));
  return out;
}

std::string render_assistant(const ReasoningConfig& rc, const AssistantBody& body) {
  return pieces_text(assistant_pieces(rc, body));
}

std::vector<Piece> render(const Conversation& conv, const ReasoningConfig& rc, const AssistantBody& body) {
  conv.validate();
  std::vector<Piece> out;
  append_messages(out, conv);
  append_header(out, Role::kAssistant);
  for (Piece& p : assistant_pieces(rc, body)) out.push_back(std::move(p));
  append_footer(out);
  out[out.size() - 2].trainable = true;
  return out;
}

std::vector<Piece> generation_prompt(const Conversation& conv, const ReasoningConfig& rc) {
  conv.validate();
  rc.validate();
  std::vector<Piece> out;
  append_messages(out, conv);
  append_header(out, Role::kAssistant);
  append_mode_prefix(out, rc);
  if (!rc.enabled) {
    out.push_back(Piece::control(Special::kThinkClose));
    out.push_back(Piece::plain("\n"));
  }
  return out;
}

std::string pieces_text(const std::vector<Piece>& pieces) {
  std::string out;
  for (const Piece& p : pieces) {
    if (p.special) {
      out.append(tok(*p.special));
    } else {
      out.append(p.text);
    }
  }
  return out;
}

ParsedOutput parse(std::string_view text) {
  const std::string_view im_end = tok(Special::kImEnd);
  if (text.ends_with("\n") && text.substr(0, text.size() - 1).ends_with(im_end)) text.remove_suffix(1);
  if (text.ends_with(im_end)) text.remove_suffix(im_end.size());

  ParsedOutput out;
  std::string_view rest = text;
  bool has_language = false;
  if (consume(rest, tok(Special::kReasoningEn))) {
    has_language = true;
    out.mode.language = Language::kEnglish;
  } else if (consume(rest, tok(Special::kReasoningIta))) {
    has_language = true;
    out.mode.language = Language::kItalian;
  }
  if (has_language && !consume(rest, "\n")) throw MalformedOutputError("language token must end its line");
  if (consume(rest, tok(Special::kTurbo))) {
    if (!has_language) throw MalformedOutputError("/turbo without a reasoning language token");
    if (!consume(rest, "\n")) throw MalformedOutputError("/turbo must end its line");
    out.mode.turbo = true;
  }

  const bool any_tag = rest.find(kThinkOpen) != std::string_view::npos || rest.find(kThinkClose) != std::string_view::npos;
  if (!any_tag) {
    if (has_language) throw MalformedOutputError("reasoning mode tokens without a <think> block");
    out.conforming = false;
    out.body.answer = std::string(rest);
    return out;
  }
  if (!consume(rest, kThinkOpen)) {
    if (rest.find(kThinkClose) < rest.find(kThinkOpen)) throw MalformedOutputError("</think> without <think>");
    throw MalformedOutputError("text before the <think> block");
  }
  const std::size_t close = rest.find(kThinkClose);
  if (close == std::string_view::npos) throw MalformedOutputError("missing </think> after <think>");
  std::string_view block = rest.substr(0, close);
  if (block.find(kThinkOpen) != std::string_view::npos) throw MalformedOutputError("nested <think> tags");
  rest.remove_prefix(close + kThinkClose.size());
  if (rest.find(kThinkOpen) != std::string_view::npos || rest.find(kThinkClose) != std::string_view::npos) {
    throw MalformedOutputError("think tags after the think block");
  }
  consume(rest, "\n");
  consume(block, "\n");
  if (block.ends_with("\n")) block.remove_suffix(1);

  out.mode.enabled = has_language || !block.empty();
  out.conforming = has_language || block.empty();
  out.body.reasoning = std::string(block);
  out.body.answer = std::string(rest);
  return out;
}

SourceExample training_example(const Conversation& conv, const ReasoningConfig& rc, const AssistantBody& body,
                               std::string id) {
  const ByteTokenizer::Encoded enc = ByteTokenizer().encode(render(conv, rc, body));
  SourceExample ex{std::move(id), enc.ids, enc.trainable};
  ex.validate();
  return ex;
}

SourceExample training_example_from_json(const nlohmann::json& j) {
  try {
    Conversation conv = j.at("messages").get<Conversation>();
    const ReasoningConfig rc = parse_mode(j.value("mode", std::string("none")));
    AssistantBody body{j.value("reasoning", std::string()), j.at("answer").get<std::string>()};
    std::string id;
    if (j.contains("id")) id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    return training_example(conv, rc, body, std::move(id));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("chat example: ") + e.what());
  }
}

}  // namespace deskmoe
