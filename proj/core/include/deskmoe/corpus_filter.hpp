// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace deskmoe {

enum class Category { kMediaNews, kAcademic, kBroadcasting, kLegal, kLiterary, kProfessional };

std::string_view category_name(Category c);
/// Accepts the display name ("Media & News") or a short key ("media").
Category parse_category(std::string_view name);

/// Registrable domains with their category. A domain covers itself and
/// every subdomain.
class Blacklist {
 public:
  void add(std::string domain, Category category);
  std::size_t size() const { return domains_.size(); }
  bool empty() const { return domains_.empty(); }

  /// Category of `host` or of its closest listed parent domain.
  std::optional<Category> match_host(std::string_view host) const;

  /// Lines "domain<TAB>category"; blank lines and lines starting with '#' are skipped.
  static Blacklist parse(std::string_view tsv);
  static Blacklist load(const std::filesystem::path& path);

 private:
  std::map<std::string, Category, std::less<>> domains_;
};

/// Lower-cased host of an absolute http(s) URL or a bare "host/path"
/// string; nullopt when no plausible host can be extracted.
std::optional<std::string> url_host(std::string_view url);

struct DomainMatch {
  std::optional<Category> category;
  bool malformed = false;
};
DomainMatch match_domain(std::string_view url, const Blacklist& blacklist);

enum class EditorialKind { kChapterMarker, kFrontMatter, kFormalHeading, kPageNumbers };
enum class BoilerplateKind { kSymbol, kAllRightsReserved, kLicense, kLegalDisclaimer };
enum class IdentifierKind { kIsbn, kDoi };

std::string_view kind_name(EditorialKind k);
std::string_view kind_name(BoilerplateKind k);
std::string_view kind_name(IdentifierKind k);

/// One matched pattern kind and the byte offset of its first occurrence.
template <typename Kind>
struct Hit {
  Kind kind;
  std::size_t offset;
  friend bool operator==(const Hit&, const Hit&) = default;
};

/// Each detector reports every matched kind once, ordered by kind.
std::vector<Hit<EditorialKind>> detect_editorial(std::string_view text);
std::vector<Hit<BoilerplateKind>> detect_boilerplate(std::string_view text);
std::vector<Hit<IdentifierKind>> detect_identifiers(std::string_view text);

bool valid_isbn10(std::string_view digits);
bool valid_isbn13(std::string_view digits);

struct SignalVector {
  std::optional<Category> domain;
  std::vector<Hit<EditorialKind>> editorial;
  std::vector<Hit<BoilerplateKind>> boilerplate;
  std::vector<Hit<IdentifierKind>> identifiers;

  std::size_t families() const;
  bool any() const { return families() > 0; }
};

SignalVector extract_signals(std::string_view url, std::string_view text, const Blacklist& blacklist,
                             bool* malformed_url = nullptr);

struct RiskWeights {
  double domain = 0.25;
  double editorial = 0.25;
  double boilerplate = 0.25;
  double identifiers = 0.25;

  /// Throws ConfigError unless the weights are nonnegative and sum to 1.
  void validate() const;
};

/// Weighted sum of family indicators, clipped to [0, 1].
double risk_score(const SignalVector& signals, const RiskWeights& weights = {});

struct CorpusRecord {
  std::string id;
  std::string url;
  std::string text;
};

struct FilterOptions {
  RiskWeights weights;
  /// Records with score >= threshold are removed.
  double threshold = 0.4;
  /// Thresholds whose exclusion rates are reported.
  std::vector<double> report_thresholds{0.3, 0.4};
  double high_risk = 0.5;

  void validate() const;
};

struct RecordAssessment {
  std::string id;
  SignalVector signals;
  double score = 0.0;
  bool removed = false;
};

/// Corpus-level statistics. Counters are order independent.
struct RiskReport {
  std::size_t total = 0;
  std::size_t clean = 0;
  std::size_t flagged = 0;
  std::size_t high_risk = 0;
  std::size_t removed = 0;
  std::size_t skipped = 0;
  std::size_t malformed_urls = 0;
  double threshold = 0.4;
  std::map<double, std::size_t> excluded_at;
  std::map<std::string, std::size_t> domain_categories;
  std::map<std::string, std::size_t> signal_kinds;
  std::map<std::string, std::size_t> families;
  std::vector<RecordAssessment> records;

  double percent(std::size_t count) const;
  void add(const RecordAssessment& a, const FilterOptions& options, bool malformed_url);
};

void to_json(nlohmann::json& j, const SignalVector& s);
void to_json(nlohmann::json& j, const RiskReport& r);

class CorpusFilter {
 public:
  CorpusFilter(Blacklist blacklist, FilterOptions options);

  const FilterOptions& options() const { return options_; }
  RecordAssessment assess(const CorpusRecord& record, bool* malformed_url = nullptr) const;

  /// Scores every record. `kept` and `removed`, when given, receive the
  /// records in input order.
  RiskReport run(std::span<const CorpusRecord> records, std::vector<CorpusRecord>* kept = nullptr,
                 std::vector<CorpusRecord>* removed = nullptr, bool keep_assessments = true) const;

  /// JSON Lines {id, url, text} in, kept and removed JSON Lines out.
  /// Unreadable lines are skipped and counted.
  RiskReport run_jsonl(std::istream& in, std::ostream* kept, std::ostream* removed,
                       bool keep_assessments = false) const;

 private:
  Blacklist blacklist_;
  FilterOptions options_;
};

CorpusRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const CorpusRecord& r);

}  // namespace deskmoe
