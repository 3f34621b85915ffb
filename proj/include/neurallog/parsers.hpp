#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurallog/core.hpp"

namespace neurallog::parsers {

using TemplateId = std::uint32_t;

inline constexpr std::string_view kWildcard = "<*>";

struct TemplateToken {
  std::string text;  // empty for wildcards
  bool wildcard = false;

  static TemplateToken keyword(std::string text) { return {std::move(text), false}; }
  static TemplateToken any() { return {{}, true}; }
  bool operator==(const TemplateToken&) const = default;
};

struct Template {
  TemplateId id = 0;
  std::vector<TemplateToken> tokens;
  std::size_t support = 0;

  /// Space-joined tokens, wildcards as "<*>".
  std::string render() const;
  std::size_t keyword_count() const;
  std::vector<std::string> keywords() const;

  /// Inverse of render(): whitespace-split, "<*>" becomes a wildcard.
  static Template from_rendered(TemplateId id, std::string_view rendered, std::size_t support = 1);
};

/// Templates indexed by id (templates[i].id == i) plus the line assignment.
struct ParseResult {
  std::vector<Template> templates;
  std::map<std::size_t, TemplateId> assignment;  // line_no -> template id
};

std::vector<std::string> split_whitespace(std::string_view text);

// ---- Drain --------------------------------------------------------------

struct DrainConfig {
  int depth = 4;
  double similarity_threshold = 0.4;
  std::size_t max_children = 100;

  void validate() const;
};

/// Fixed-depth prefix tree parser. Messages are routed by token count, then
/// by their first depth-2 tokens (digit-bearing tokens take the wildcard
/// branch), and grouped within the leaf by positional similarity.
class DrainParser {
 public:
  explicit DrainParser(DrainConfig config = {});
  ~DrainParser();
  DrainParser(DrainParser&&) noexcept;
  DrainParser& operator=(DrainParser&&) noexcept;

  TemplateId add(std::size_t line_no, std::string_view content);
  ParseResult result() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ParseResult drain_parse(std::span<const RawLogRecord> records, const DrainConfig& config = {});

// ---- Spell --------------------------------------------------------------

/// Streaming longest-common-subsequence parser.
class SpellParser {
 public:
  explicit SpellParser(double tau = 0.5);

  TemplateId add(std::size_t line_no, std::string_view content);
  ParseResult result() const;

 private:
  struct Cluster {
    std::vector<std::string> tokens;  // wildcards stored as kWildcard
    std::size_t keywords = 0;
    std::size_t support = 0;
  };
  double tau_;
  std::vector<Cluster> clusters_;
  std::map<std::size_t, TemplateId> assignment_;
};

ParseResult spell_parse(std::span<const RawLogRecord> records, double tau = 0.5);

/// Length of the longest common subsequence; wildcards in `tmpl` never match.
std::size_t lcs_length(std::span<const std::string> tmpl, std::span<const std::string> message);

// ---- template utilities -------------------------------------------------

/// Positional similarity: positions where the template token is a wildcard
/// or equals the message token, over max(template length, message length).
double template_similarity(const Template& tmpl, std::span<const std::string> message_tokens);

/// Most similar template to a message; ties go to the lowest id.
/// Throws std::invalid_argument on an empty template list.
TemplateId match_to_ground_truth(std::string_view content, std::span<const Template> gt_templates);
TemplateId match_to_ground_truth(std::span<const std::string> message_tokens,
                                 std::span<const Template> gt_templates);

/// Entry j counts the sequence members assigned to template j. Throws
/// DataError naming the line of an unassigned member.
std::vector<std::uint32_t> seq_to_count_vector(const LogSequence& sequence,
                                               std::span<const RawLogRecord> records,
                                               const std::map<std::size_t, TemplateId>& assignment,
                                               std::size_t n_templates);

// ---- CSV interchange ----------------------------------------------------

/// `id,rendered_template,support` with a header line.
void write_templates_csv(const std::filesystem::path& path, std::span<const Template> templates);
std::vector<Template> read_templates_csv(const std::filesystem::path& path);

/// `line_no,template_id` with a header line.
void write_assignment_csv(const std::filesystem::path& path,
                          const std::map<std::size_t, TemplateId>& assignment);
std::map<std::size_t, TemplateId> read_assignment_csv(const std::filesystem::path& path);

ParseResult read_parse_result(const std::filesystem::path& templates_csv,
                              const std::filesystem::path& assignment_csv);

/// Splits one CSV record honoring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_quote(std::string_view field);

}  // namespace neurallog::parsers
