// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/corpus_filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"

namespace deskmoe {

namespace {

constexpr std::array<std::string_view, 6> kCategoryNames = {"Media & News", "Academic", "Broadcasting",
                                                           "Legal",        "Literary", "Professional"};
constexpr std::array<std::string_view, 6> kCategoryKeys = {"media", "academic", "broadcasting",
                                                          "legal", "literary", "professional"};

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_alnum(char c) { return is_digit(c) || is_alpha(c); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = lower(c);
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct Line {
  std::size_t offset;
  std::string_view text;  // original bytes, '\n' excluded
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::size_t stop = end == std::string_view::npos ? text.size() : end;
    lines.push_back({start, text.substr(start, stop - start)});
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return lines;
}

// Offset of `trimmed` (a view into the line) relative to the whole text.
std::size_t offset_of(const Line& line, std::string_view trimmed) {
  return line.offset + static_cast<std::size_t>(trimmed.data() - line.text.data());
}

bool is_roman(char c) {
  return c == 'I' || c == 'V' || c == 'X' || c == 'L' || c == 'C' || c == 'D' || c == 'M';
}

constexpr std::array<std::string_view, 12> kNumberWords = {"one", "two",   "three", "four",   "five",   "six",
                                                           "seven", "eight", "nine", "ten", "eleven", "twelve"};

// True when `s` begins with a chapter/volume number: digits, an upper-case
// roman numeral or an English number word, ending at a word boundary.
bool starts_with_ordinal(std::string_view s) {
  std::size_t n = 0;
  if (!s.empty() && is_digit(s[0])) {
    while (n < s.size() && is_digit(s[n])) ++n;
  } else if (!s.empty() && is_roman(s[0])) {
    while (n < s.size() && is_roman(s[n])) ++n;
  } else {
    const std::string head = to_lower(s.substr(0, 7));
    for (std::string_view w : kNumberWords) {
      if (head.starts_with(w)) {
        n = w.size();
        break;
      }
    }
  }
  return n > 0 && (n == s.size() || !is_alnum(s[n]));
}

constexpr std::array<std::string_view, 9> kChapterWords = {"chapter", "capitolo", "chapitre", "kapitel", "capitulo",
                                                           "cap\xC3\xADtulo", "volume", "volumen", "vol."};

std::optional<std::size_t> find_chapter_marker(const std::vector<Line>& lines) {
  for (const Line& line : lines) {
    const std::string_view t = trim(line.text);
    const std::string low = to_lower(t.substr(0, 16));
    for (std::string_view w : kChapterWords) {
      if (!low.starts_with(w)) continue;
      std::string_view rest = t.substr(w.size());
      const bool dotted = w.back() == '.';
      if (!dotted && (rest.empty() || !is_space(rest.front()))) continue;
      while (!rest.empty() && is_space(rest.front())) rest.remove_prefix(1);
      if (starts_with_ordinal(rest)) return offset_of(line, t);
    }
  }
  return std::nullopt;
}

constexpr std::array<std::string_view, 20> kFrontMatter = {
    "preface",        "foreword",   "prologue",        "acknowledgements", "acknowledgments",
    "table of contents", "contents", "prefazione",     "premessa",         "ringraziamenti",
    "indice",         "sommario",   "pr\xC3\xA9" "face", "remerciements",   "table des mati\xC3\xA8res",
    "vorwort",        "danksagung", "inhaltsverzeichnis", "prefacio",      "agradecimientos",
};

std::optional<std::size_t> find_front_matter(const std::vector<Line>& lines) {
  for (const Line& line : lines) {
    const std::string_view t = trim(line.text);
    if (t.empty() || t.size() > 32) continue;
    std::string low = to_lower(t);
    while (!low.empty() && (low.back() == ':' || low.back() == '.')) low.pop_back();
    if (std::find(kFrontMatter.begin(), kFrontMatter.end(), low) != kFrontMatter.end()) return offset_of(line, t);
  }
  return std::nullopt;
}

constexpr std::array<std::string_view, 9> kHeadingPrefixes = {
    "keywords:", "key words:", "received:", "accepted:", "published online:",
    "corresponding author", "parole chiave:", "riassunto:", "citation:",
};

bool is_byline(std::string_view t) {
  if (t.size() > 60 || !t.starts_with("By ")) return false;
  std::string_view rest = t.substr(3);
  std::size_t words = 0;
  while (!rest.empty()) {
    while (!rest.empty() && is_space(rest.front())) rest.remove_prefix(1);
    if (rest.empty()) break;
    if (!(rest.front() >= 'A' && rest.front() <= 'Z')) return false;
    std::size_t n = 0;
    while (n < rest.size() && !is_space(rest[n])) ++n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_alpha(rest[i]) && rest[i] != '.' && rest[i] != '-' && rest[i] != '\'' && rest[i] != ',') return false;
    }
    rest.remove_prefix(n);
    ++words;
  }
  return words >= 2 && words <= 4;
}

std::optional<std::size_t> find_formal_heading(const std::vector<Line>& lines) {
  for (const Line& line : lines) {
    const std::string_view t = trim(line.text);
    if (t.empty()) continue;
    const std::string low = to_lower(t.substr(0, 24));
    if (low == "abstract" || low.starts_with("abstract:") || low.starts_with("abstract.")) return offset_of(line, t);
    for (std::string_view p : kHeadingPrefixes) {
      if (low.starts_with(p)) return offset_of(line, t);
    }
    if (is_byline(t)) return offset_of(line, t);
  }
  return std::nullopt;
}

// Number carried by a bare page-number line ("12", "Page 12", "- 12 -").
std::optional<long> page_number(std::string_view t) {
  std::string low = to_lower(t);
  std::string_view s = low;
  for (std::string_view p : {"page ", "pagina ", "pag. ", "p. ", "seite "}) {
    if (s.starts_with(p)) {
      s.remove_prefix(p.size());
      break;
    }
  }
  if (s.starts_with("- ") && s.ends_with(" -")) s = s.substr(2, s.size() - 4);
  if (s.empty() || s.size() > 4) return std::nullopt;
  long v = 0;
  for (char c : s) {
    if (!is_digit(c)) return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

std::optional<std::size_t> find_page_sequence(const std::vector<Line>& lines) {
  long last = -2;
  std::size_t run = 0, run_start = 0;
  for (const Line& line : lines) {
    const std::string_view t = trim(line.text);
    const auto n = page_number(t);
    if (!n) continue;
    if (run > 0 && *n == last + 1) {
      ++run;
    } else {
      run = 1;
      run_start = offset_of(line, t);
    }
    last = *n;
    if (run >= 3) return run_start;
  }
  return std::nullopt;
}

std::optional<std::size_t> find_any(std::string_view haystack, std::span<const std::string_view> needles) {
  std::optional<std::size_t> best;
  for (std::string_view n : needles) {
    const std::size_t p = haystack.find(n);
    if (p != std::string_view::npos && (!best || p < *best)) best = p;
  }
  return best;
}

constexpr std::array<std::string_view, 3> kSymbols = {"\xC2\xA9", "\xC2\xAE", "\xE2\x84\xA2"};
constexpr std::array<std::string_view, 7> kRightsReserved = {
    "all rights reserved",           "tutti i diritti riservati", "riproduzione riservata",
    "tous droits r\xC3\xA9serv\xC3\xA9s", "alle rechte vorbehalten",   "todos los derechos reservados",
    "some rights reserved",
};
constexpr std::array<std::string_view, 7> kLicense = {
    "licensed under",         "this work is licensed",          "creative commons",
    "permission is hereby granted", "distribuito con licenza", "rilasciato con licenza",
    "under license from",
};
constexpr std::array<std::string_view, 8> kDisclaimer = {
    "no part of this publication may be reproduced",
    "no part of this book may be reproduced",
    "without the prior written permission",
    "without prior written permission",
    "unauthorized reproduction",
    "nessuna parte di questa pubblicazione",
    "vietata la riproduzione",
    "the publisher makes no representation",
};

std::optional<std::size_t> find_copyright_c(std::string_view low) {
  std::size_t p = 0;
  while ((p = low.find("(c) ", p)) != std::string_view::npos) {
    if (p + 4 < low.size() && is_digit(low[p + 4])) return p;
    p += 4;
  }
  return std::nullopt;
}

std::optional<std::size_t> find_isbn(std::string_view text, std::string_view low) {
  std::size_t p = 0;
  while ((p = low.find("isbn", p)) != std::string_view::npos) {
    const std::size_t at = p;
    p += 4;
    if (at > 0 && is_alnum(low[at - 1])) continue;
    std::size_t q = p;
    if (low.substr(q, 3) == "-10" || low.substr(q, 3) == "-13") q += 3;
    while (q < low.size() && (low[q] == ':' || is_space(low[q]))) ++q;
    std::string digits;
    while (q < text.size() && digits.size() < 13) {
      const char c = text[q];
      if (is_digit(c)) {
        digits.push_back(c);
      } else if ((c == 'X' || c == 'x') && digits.size() == 9) {
        digits.push_back('X');
        ++q;
        break;
      } else if (c == '-' || (c == ' ' && q + 1 < text.size() && is_digit(text[q + 1]))) {
        // separator
      } else {
        break;
      }
      ++q;
    }
    const bool ok = digits.size() >= 13 ? valid_isbn13(std::string_view(digits).substr(0, 13))
                                        : (digits.size() >= 10 && valid_isbn10(std::string_view(digits).substr(0, 10)));
    if (ok) return at;
  }
  return std::nullopt;
}

std::optional<std::size_t> find_doi(std::string_view text) {
  std::size_t p = 0;
  while ((p = text.find("10.", p)) != std::string_view::npos) {
    const std::size_t at = p;
    p += 3;
    if (at > 0 && (is_alnum(text[at - 1]) || text[at - 1] == '.')) continue;
    std::size_t q = p, registrant = 0;
    while (q < text.size() && (is_digit(text[q]) || text[q] == '.')) {
      registrant += is_digit(text[q]) ? 1 : 0;
      ++q;
    }
    if (registrant < 4 || q >= text.size() || text[q] != '/') continue;
    ++q;
    if (q < text.size() && !is_space(text[q]) && text[q] != '\n') return at;
  }
  return std::nullopt;
}

template <typename Kind>
void push(std::vector<Hit<Kind>>& out, Kind kind, std::optional<std::size_t> offset) {
  if (offset) out.push_back({kind, *offset});
}

std::string ascii_key(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (is_alnum(c)) out.push_back(lower(c));
  }
  return out;
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

Category parse_category(std::string_view name) {
  const std::string key = ascii_key(name);
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (key == ascii_key(kCategoryNames[i]) || key == kCategoryKeys[i]) return static_cast<Category>(i);
  }
  if (key == "news") return Category::kMediaNews;
  throw ConfigError("unknown domain category '" + std::string(name) + "'");
}

void Blacklist::add(std::string domain, Category category) {
  std::string d = to_lower(trim(domain));
  while (!d.empty() && d.front() == '.') d.erase(d.begin());
  if (d.empty() || d.find('.') == std::string::npos) throw ConfigError("blacklist: '" + domain + "' is not a domain");
  domains_[std::move(d)] = category;
}

std::optional<Category> Blacklist::match_host(std::string_view host) const {
  std::string h = to_lower(host);
  std::string_view rest = h;
  while (true) {
    auto it = domains_.find(rest);
    if (it != domains_.end()) return it->second;
    const std::size_t dot = rest.find('.');
    if (dot == std::string_view::npos) return std::nullopt;
    rest.remove_prefix(dot + 1);
  }
}

Blacklist Blacklist::parse(std::string_view tsv) {
  Blacklist b;
  std::size_t lineno = 0;
  for (const Line& line : split_lines(tsv)) {
    ++lineno;
    const std::string_view t = trim(line.text);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t tab = t.find('\t');
    if (tab == std::string_view::npos) {
      throw ConfigError("blacklist line " + std::to_string(lineno) + ": expected domain<TAB>category");
    }
    b.add(std::string(t.substr(0, tab)), parse_category(trim(t.substr(tab + 1))));
  }
  return b;
}

Blacklist Blacklist::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open blacklist " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::optional<std::string> url_host(std::string_view url) {
  url = trim(url);
  const std::size_t scheme = url.find("://");
  if (scheme != std::string_view::npos) {
    const std::string s = to_lower(url.substr(0, scheme));
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return is_alpha(c) || c == '+' || c == '-'; })) {
      return std::nullopt;
    }
    url.remove_prefix(scheme + 3);
  }
  const std::size_t end = url.find_first_of("/?#");
  std::string_view host = url.substr(0, end);
  if (const std::size_t at = host.rfind('@'); at != std::string_view::npos) host.remove_prefix(at + 1);
  if (const std::size_t colon = host.find(':'); colon != std::string_view::npos) host = host.substr(0, colon);
  while (!host.empty() && host.back() == '.') host.remove_suffix(1);
  if (host.empty() || host.find('.') == std::string_view::npos || host.front() == '.') return std::nullopt;
  for (char c : host) {
    if (!is_alnum(c) && c != '-' && c != '.' && static_cast<unsigned char>(c) < 0x80) return std::nullopt;
  }
  if (host.find("..") != std::string_view::npos) return std::nullopt;
  return to_lower(host);
}

DomainMatch match_domain(std::string_view url, const Blacklist& blacklist) {
  DomainMatch m;
  if (trim(url).empty()) return m;
  const auto host = url_host(url);
  if (!host) {
    m.malformed = true;
    return m;
  }
  m.category = blacklist.match_host(*host);
  return m;
}

std::string_view kind_name(EditorialKind k) {
  constexpr std::array<std::string_view, 4> n = {"chapter_marker", "front_matter", "formal_heading", "page_numbers"};
  return n[static_cast<std::size_t>(k)];
}

std::string_view kind_name(BoilerplateKind k) {
  constexpr std::array<std::string_view, 4> n = {"symbol", "all_rights_reserved", "license", "legal_disclaimer"};
  return n[static_cast<std::size_t>(k)];
}

std::string_view kind_name(IdentifierKind k) { return k == IdentifierKind::kIsbn ? "isbn" : "doi"; }

std::vector<Hit<EditorialKind>> detect_editorial(std::string_view text) {
  const std::vector<Line> lines = split_lines(text);
  std::vector<Hit<EditorialKind>> out;
  push(out, EditorialKind::kChapterMarker, find_chapter_marker(lines));
  push(out, EditorialKind::kFrontMatter, find_front_matter(lines));
  push(out, EditorialKind::kFormalHeading, find_formal_heading(lines));
  push(out, EditorialKind::kPageNumbers, find_page_sequence(lines));
  return out;
}

std::vector<Hit<BoilerplateKind>> detect_boilerplate(std::string_view text) {
  const std::string low = to_lower(text);
  std::vector<Hit<BoilerplateKind>> out;
  auto symbol = find_any(text, kSymbols);
  if (auto c = find_copyright_c(low); c && (!symbol || *c < *symbol)) symbol = c;
  push(out, BoilerplateKind::kSymbol, symbol);
  push(out, BoilerplateKind::kAllRightsReserved, find_any(low, kRightsReserved));
  push(out, BoilerplateKind::kLicense, find_any(low, kLicense));
  push(out, BoilerplateKind::kLegalDisclaimer, find_any(low, kDisclaimer));
  return out;
}

std::vector<Hit<IdentifierKind>> detect_identifiers(std::string_view text) {
  const std::string low = to_lower(text);
  std::vector<Hit<IdentifierKind>> out;
  push(out, IdentifierKind::kIsbn, find_isbn(text, low));
  push(out, IdentifierKind::kDoi, find_doi(text));
  return out;
}

bool valid_isbn10(std::string_view d) {
  if (d.size() != 10) return false;
  int sum = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    int v;
    if (is_digit(d[i])) {
      v = d[i] - '0';
    } else if (i == 9 && (d[i] == 'X' || d[i] == 'x')) {
      v = 10;
    } else {
      return false;
    }
    sum += static_cast<int>(10 - i) * v;
  }
  return sum % 11 == 0;
}

bool valid_isbn13(std::string_view d) {
  if (d.size() != 13) return false;
  int sum = 0;
  for (std::size_t i = 0; i < 13; ++i) {
    if (!is_digit(d[i])) return false;
    sum += (d[i] - '0') * (i % 2 == 0 ? 1 : 3);
  }
  return sum % 10 == 0;
}

std::size_t SignalVector::families() const {
  return (domain ? 1 : 0) + (editorial.empty() ? 0 : 1) + (boilerplate.empty() ? 0 : 1) +
         (identifiers.empty() ? 0 : 1);
}

SignalVector extract_signals(std::string_view url, std::string_view text, const Blacklist& blacklist,
                             bool* malformed_url) {
  SignalVector s;
  const DomainMatch m = match_domain(url, blacklist);
  if (malformed_url) *malformed_url = m.malformed;
  s.domain = m.category;
  s.editorial = detect_editorial(text);
  s.boilerplate = detect_boilerplate(text);
  s.identifiers = detect_identifiers(text);
  return s;
}

void RiskWeights::validate() const {
  for (double w : {domain, editorial, boilerplate, identifiers}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("risk weights must be nonnegative");
  }
  if (std::abs(domain + editorial + boilerplate + identifiers - 1.0) > 1e-9) {
    throw ConfigError("risk weights must sum to 1");
  }
}

double risk_score(const SignalVector& s, const RiskWeights& w) {
  w.validate();
  double score = 0.0;
  if (s.domain) score += w.domain;
  if (!s.editorial.empty()) score += w.editorial;
  if (!s.boilerplate.empty()) score += w.boilerplate;
  if (!s.identifiers.empty()) score += w.identifiers;
  return std::clamp(score, 0.0, 1.0);
}

void FilterOptions::validate() const {
  weights.validate();
  auto check = [](double t, const char* what) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError(std::string(what) + " must lie in (0, 1]");
  };
  check(threshold, "threshold");
  check(high_risk, "high-risk threshold");
  for (double t : report_thresholds) check(t, "report threshold");
}

double RiskReport::percent(std::size_t count) const {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

void RiskReport::add(const RecordAssessment& a, const FilterOptions& options, bool malformed_url) {
  ++total;
  malformed_urls += malformed_url ? 1 : 0;
  const SignalVector& s = a.signals;
  if (s.any()) {
    ++flagged;
  } else {
    ++clean;
  }
  high_risk += a.score >= options.high_risk ? 1 : 0;
  removed += a.removed ? 1 : 0;
  for (double t : options.report_thresholds) excluded_at[t] += a.score >= t ? 1 : 0;
  if (s.domain) ++domain_categories[std::string(category_name(*s.domain))];
  if (s.domain) ++families["domain"];
  if (!s.editorial.empty()) ++families["editorial"];
  if (!s.boilerplate.empty()) ++families["boilerplate"];
  if (!s.identifiers.empty()) ++families["identifiers"];
  for (const auto& h : s.editorial) ++signal_kinds["editorial:" + std::string(kind_name(h.kind))];
  for (const auto& h : s.boilerplate) ++signal_kinds["boilerplate:" + std::string(kind_name(h.kind))];
  for (const auto& h : s.identifiers) ++signal_kinds["identifier:" + std::string(kind_name(h.kind))];
}

void to_json(nlohmann::json& j, const SignalVector& s) {
  j = nlohmann::json::object();
  j["domain"] = s.domain ? nlohmann::json(category_name(*s.domain)) : nlohmann::json(nullptr);
  auto hits = [](const auto& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& h : list) arr.push_back({{"kind", kind_name(h.kind)}, {"offset", h.offset}});
    return arr;
  };
  j["editorial"] = hits(s.editorial);
  j["boilerplate"] = hits(s.boilerplate);
  j["identifiers"] = hits(s.identifiers);
}

void to_json(nlohmann::json& j, const RiskReport& r) {
  auto percents = [&r](const std::map<std::string, std::size_t>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [k, v] : m) o[k] = {{"count", v}, {"percent", r.percent(v)}};
    return o;
  };
  nlohmann::json excluded = nlohmann::json::object();
  for (const auto& [t, n] : r.excluded_at) {
    std::ostringstream key;
    key << t;
    excluded[key.str()] = {{"count", n}, {"percent", r.percent(n)}};
  }
  j = {
      {"total", r.total},
      {"skipped", r.skipped},
      {"malformed_urls", r.malformed_urls},
      {"threshold", r.threshold},
      {"clean", {{"count", r.clean}, {"percent", r.percent(r.clean)}}},
      {"flagged", {{"count", r.flagged}, {"percent", r.percent(r.flagged)}}},
      {"high_risk", {{"count", r.high_risk}, {"percent", r.percent(r.high_risk)}}},
      {"removed", {{"count", r.removed}, {"percent", r.percent(r.removed)}}},
      {"excluded_at", excluded},
      {"domain_categories", percents(r.domain_categories)},
      {"families", percents(r.families)},
      {"signal_kinds", percents(r.signal_kinds)},
  };
  if (!r.records.empty()) {
    nlohmann::json recs = nlohmann::json::array();
    for (const RecordAssessment& a : r.records) {
      recs.push_back({{"id", a.id}, {"score", a.score}, {"removed", a.removed}, {"signals", a.signals}});
    }
    j["records"] = std::move(recs);
  }
}

CorpusFilter::CorpusFilter(Blacklist blacklist, FilterOptions options)
    : blacklist_(std::move(blacklist)), options_(std::move(options)) {
  options_.validate();
}

RecordAssessment CorpusFilter::assess(const CorpusRecord& record, bool* malformed_url) const {
  RecordAssessment a;
  a.id = record.id;
  a.signals = extract_signals(record.url, record.text, blacklist_, malformed_url);
  a.score = risk_score(a.signals, options_.weights);
  a.removed = a.score >= options_.threshold;
  return a;
}

RiskReport CorpusFilter::run(std::span<const CorpusRecord> records, std::vector<CorpusRecord>* kept,
                             std::vector<CorpusRecord>* removed, bool keep_assessments) const {
  RiskReport report;
  report.threshold = options_.threshold;
  for (double t : options_.report_thresholds) report.excluded_at[t] = 0;
  for (const CorpusRecord& r : records) {
    bool malformed = false;
    RecordAssessment a = assess(r, &malformed);
    report.add(a, options_, malformed);
    if (a.removed) {
      if (removed) removed->push_back(r);
    } else if (kept) {
      kept->push_back(r);
    }
    if (keep_assessments) report.records.push_back(std::move(a));
  }
  return report;
}

RiskReport CorpusFilter::run_jsonl(std::istream& in, std::ostream* kept, std::ostream* removed,
                                   bool keep_assessments) const {
  RiskReport report;
  report.threshold = options_.threshold;
  for (double t : options_.report_thresholds) report.excluded_at[t] = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    CorpusRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const std::exception&) {
      ++report.skipped;
      continue;
    }
    if (r.id.empty()) r.id = "line " + std::to_string(lineno);
    bool malformed = false;
    RecordAssessment a = assess(r, &malformed);
    report.add(a, options_, malformed);
    std::ostream* sink = a.removed ? removed : kept;
    if (sink) *sink << line << '\n';
    if (keep_assessments) report.records.push_back(std::move(a));
  }
  return report;
}

CorpusRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw InputError("corpus record needs a string \"text\" field");
  }
  CorpusRecord r;
  if (j.contains("id")) r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  if (j.contains("url") && j["url"].is_string()) r.url = j["url"].get<std::string>();
  r.text = j["text"].get<std::string>();
  return r;
}

nlohmann::json record_to_json(const CorpusRecord& r) { return {{"id", r.id}, {"url", r.url}, {"text", r.text}}; }

}  // namespace deskmoe
