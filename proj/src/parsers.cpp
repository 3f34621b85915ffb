#include "neurallog/parsers.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace neurallog::parsers {

std::string Template::render() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t.wildcard ? std::string(kWildcard) : t.text;
  }
  return out;
}

std::size_t Template::keyword_count() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const TemplateToken& t) { return !t.wildcard; }));
}

std::vector<std::string> Template::keywords() const {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (!t.wildcard) out.push_back(t.text);
  }
  return out;
}

Template Template::from_rendered(TemplateId id, std::string_view rendered, std::size_t support) {
  Template t;
  t.id = id;
  t.support = support;
  for (auto& tok : split_whitespace(rendered)) {
    t.tokens.push_back(tok == kWildcard ? TemplateToken::any() : TemplateToken::keyword(std::move(tok)));
  }
  return t;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

namespace {

Template make_template(TemplateId id, const std::vector<std::string>& tokens, std::size_t support) {
  Template t;
  t.id = id;
  t.support = support;
  for (const auto& tok : tokens) {
    t.tokens.push_back(tok == kWildcard ? TemplateToken::any() : TemplateToken::keyword(tok));
  }
  return t;
}

bool has_digit(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

}  // namespace

// ---- Drain --------------------------------------------------------------

void DrainConfig::validate() const {
  if (depth < 3) throw std::invalid_argument("drain depth must be >= 3");
  if (!(similarity_threshold > 0.0 && similarity_threshold < 1.0)) {
    throw std::invalid_argument("drain similarity threshold must lie in (0,1)");
  }
  if (max_children < 1) throw std::invalid_argument("drain max_children must be positive");
}

struct DrainParser::Impl {
  struct Node {
    std::map<std::string, std::unique_ptr<Node>, std::less<>> children;
    std::vector<TemplateId> clusters;  // leaf only
  };
  struct Cluster {
    std::vector<std::string> tokens;
    std::size_t support = 0;
  };

  DrainConfig config;
  std::map<std::size_t, Node> by_length;
  std::vector<Cluster> clusters;
  std::map<std::size_t, TemplateId> assignment;

  Node& route(const std::vector<std::string>& tokens) {
    Node* node = &by_length[tokens.size()];
    const std::size_t levels =
        std::min(tokens.size(), static_cast<std::size_t>(config.depth - 2));
    for (std::size_t level = 0; level < levels; ++level) {
      std::string key = has_digit(tokens[level]) ? std::string(kWildcard) : tokens[level];
      auto it = node->children.find(key);
      if (it == node->children.end()) {
        if (key != kWildcard && node->children.size() >= config.max_children) {
          key = std::string(kWildcard);
        }
        it = node->children.find(key);
        if (it == node->children.end()) {
          it = node->children.emplace(std::move(key), std::make_unique<Node>()).first;
        }
      }
      node = it->second.get();
    }
    return *node;
  }

  TemplateId add(std::size_t line_no, const std::vector<std::string>& tokens) {
    Node& leaf = route(tokens);
    std::optional<TemplateId> best;
    double best_sim = -1.0;
    std::size_t best_params = 0;
    for (TemplateId id : leaf.clusters) {
      const auto& tmpl = clusters[id].tokens;
      std::size_t same = 0;
      std::size_t params = 0;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tmpl[i] == kWildcard) {
          ++params;
        } else if (tmpl[i] == tokens[i]) {
          ++same;
        }
      }
      const double sim = tokens.empty() ? 1.0 : static_cast<double>(same) / tokens.size();
      if (sim > best_sim || (sim == best_sim && params > best_params)) {
        best = id;
        best_sim = sim;
        best_params = params;
      }
    }
    TemplateId id;
    if (best && best_sim >= config.similarity_threshold) {
      id = *best;
      auto& tmpl = clusters[id].tokens;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tmpl[i] != tokens[i]) tmpl[i] = std::string(kWildcard);
      }
    } else {
      id = static_cast<TemplateId>(clusters.size());
      clusters.push_back(Cluster{tokens, 0});
      leaf.clusters.push_back(id);
    }
    ++clusters[id].support;
    assignment[line_no] = id;
    return id;
  }
};

DrainParser::DrainParser(DrainConfig config) : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = config;
}
DrainParser::~DrainParser() = default;
DrainParser::DrainParser(DrainParser&&) noexcept = default;
DrainParser& DrainParser::operator=(DrainParser&&) noexcept = default;

TemplateId DrainParser::add(std::size_t line_no, std::string_view content) {
  return impl_->add(line_no, split_whitespace(content));
}

ParseResult DrainParser::result() const {
  ParseResult out;
  for (std::size_t i = 0; i < impl_->clusters.size(); ++i) {
    out.templates.push_back(make_template(static_cast<TemplateId>(i), impl_->clusters[i].tokens,
                                          impl_->clusters[i].support));
  }
  out.assignment = impl_->assignment;
  return out;
}

ParseResult drain_parse(std::span<const RawLogRecord> records, const DrainConfig& config) {
  DrainParser parser(config);
  for (const auto& r : records) parser.add(r.line_no, r.content);
  return parser.result();
}

// ---- Spell --------------------------------------------------------------

namespace {

using Table = std::vector<std::vector<std::uint32_t>>;

Table lcs_table(std::span<const std::string> a, std::span<const std::string> b) {
  Table dp(a.size() + 1, std::vector<std::uint32_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] != kWildcard && a[i - 1] == b[j - 1]) {
        dp[i][j] = dp[i - 1][j - 1] + 1;
      } else {
        dp[i][j] = std::max(dp[i - 1][j], dp[i][j - 1]);
      }
    }
  }
  return dp;
}

// Rebuilds the template as the common subsequence with one wildcard for
// every gap on either side.
std::vector<std::string> merge_on_lcs(std::span<const std::string> tmpl,
                                      std::span<const std::string> message) {
  const Table dp = lcs_table(tmpl, message);
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::size_t i = tmpl.size();
  std::size_t j = message.size();
  while (i > 0 && j > 0) {
    if (tmpl[i - 1] != kWildcard && tmpl[i - 1] == message[j - 1]) {
      matches.emplace_back(i - 1, j - 1);
      --i;
      --j;
    } else if (dp[i - 1][j] >= dp[i][j - 1]) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(matches.begin(), matches.end());

  std::vector<std::string> out;
  auto push_wildcard = [&out] {
    if (out.empty() || out.back() != kWildcard) out.emplace_back(kWildcard);
  };
  std::size_t ti = 0;
  std::size_t mi = 0;
  for (auto [a, b] : matches) {
    if (a > ti || b > mi) push_wildcard();
    out.push_back(tmpl[a]);
    ti = a + 1;
    mi = b + 1;
  }
  if (ti < tmpl.size() || mi < message.size()) push_wildcard();
  return out;
}

}  // namespace

std::size_t lcs_length(std::span<const std::string> tmpl, std::span<const std::string> message) {
  return lcs_table(tmpl, message)[tmpl.size()][message.size()];
}

SpellParser::SpellParser(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("spell tau must lie in (0,1)");
}

TemplateId SpellParser::add(std::size_t line_no, std::string_view content) {
  const auto tokens = split_whitespace(content);
  const double needed = tau_ * static_cast<double>(tokens.size());
  std::optional<TemplateId> best;
  std::size_t best_len = 0;
  for (std::size_t c = 0; c < clusters_.size(); ++c) {
    const auto& cl = clusters_[c];
    if (static_cast<double>(cl.keywords) < needed || cl.keywords < best_len) continue;
    const std::size_t len = lcs_length(cl.tokens, tokens);
    if (len == 0 || static_cast<double>(len) < needed) continue;
    if (!best || len > best_len ||
        (len == best_len && cl.tokens.size() < clusters_[*best].tokens.size())) {
      best = static_cast<TemplateId>(c);
      best_len = len;
    }
  }
  TemplateId id;
  if (best) {
    id = *best;
    auto& cl = clusters_[id];
    cl.tokens = merge_on_lcs(cl.tokens, tokens);
    cl.keywords = static_cast<std::size_t>(std::count_if(
        cl.tokens.begin(), cl.tokens.end(), [](const std::string& t) { return t != kWildcard; }));
  } else {
    id = static_cast<TemplateId>(clusters_.size());
    Cluster cl;
    cl.tokens = tokens;
    cl.keywords = tokens.size();
    clusters_.push_back(std::move(cl));
  }
  ++clusters_[id].support;
  assignment_[line_no] = id;
  return id;
}

ParseResult SpellParser::result() const {
  ParseResult out;
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    out.templates.push_back(
        make_template(static_cast<TemplateId>(i), clusters_[i].tokens, clusters_[i].support));
  }
  out.assignment = assignment_;
  return out;
}

ParseResult spell_parse(std::span<const RawLogRecord> records, double tau) {
  SpellParser parser(tau);
  for (const auto& r : records) parser.add(r.line_no, r.content);
  return parser.result();
}

// ---- template utilities -------------------------------------------------

double template_similarity(const Template& tmpl, std::span<const std::string> message_tokens) {
  const std::size_t denom = std::max(tmpl.tokens.size(), message_tokens.size());
  if (denom == 0) return 1.0;
  const std::size_t n = std::min(tmpl.tokens.size(), message_tokens.size());
  std::size_t matched = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tmpl.tokens[i].wildcard || tmpl.tokens[i].text == message_tokens[i]) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(denom);
}

TemplateId match_to_ground_truth(std::span<const std::string> message_tokens,
                                 std::span<const Template> gt_templates) {
  if (gt_templates.empty()) throw std::invalid_argument("ground-truth template list is empty");
  const Template* best = nullptr;
  double best_sim = -1.0;
  for (const auto& t : gt_templates) {
    const double sim = template_similarity(t, message_tokens);
    if (sim > best_sim || (sim == best_sim && t.id < best->id)) {
      best = &t;
      best_sim = sim;
    }
  }
  return best->id;
}

TemplateId match_to_ground_truth(std::string_view content, std::span<const Template> gt_templates) {
  return match_to_ground_truth(split_whitespace(content), gt_templates);
}

std::vector<std::uint32_t> seq_to_count_vector(const LogSequence& sequence,
                                               std::span<const RawLogRecord> records,
                                               const std::map<std::size_t, TemplateId>& assignment,
                                               std::size_t n_templates) {
  std::vector<std::uint32_t> counts(n_templates, 0);
  for (std::size_t idx : sequence.members) {
    const std::size_t line = records[idx].line_no;
    auto it = assignment.find(line);
    if (it == assignment.end()) throw DataError("record has no template assignment", line);
    if (it->second >= n_templates) {
      throw DataError("template id " + std::to_string(it->second) + " out of range", line);
    }
    ++counts[it->second];
  }
  return counts;
}

// ---- CSV ----------------------------------------------------------------

std::string csv_quote(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  return fields;
}

namespace {

template <typename Int>
Int parse_unsigned(const std::string& s, std::size_t line_no, const char* what) {
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(std::string("bad ") + what + " '" + s + "'", line_no);
  }
  return value;
}

}  // namespace

void write_templates_csv(const std::filesystem::path& path, std::span<const Template> templates) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,rendered_template,support\n";
  for (const auto& t : templates) out << t.id << ',' << csv_quote(t.render()) << ',' << t.support << '\n';
}

std::vector<Template> read_templates_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Template> templates;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("id,")) continue;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const DataError& e) {
      throw DataError(e.what(), line_no);
    }
    if (f.size() != 3) throw DataError("expected 3 CSV fields", line_no);
    const auto id = parse_unsigned<TemplateId>(f[0], line_no, "template id");
    const auto support = parse_unsigned<std::size_t>(f[2], line_no, "support");
    templates.push_back(Template::from_rendered(id, f[1], support));
  }
  std::sort(templates.begin(), templates.end(),
            [](const Template& a, const Template& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < templates.size(); ++i) {
    if (templates[i].id != i) throw DataError("template ids must be 0..n-1 without gaps");
  }
  return templates;
}

void write_assignment_csv(const std::filesystem::path& path,
                          const std::map<std::size_t, TemplateId>& assignment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "line_no,template_id\n";
  for (const auto& [line, id] : assignment) out << line << ',' << id << '\n';
}

std::map<std::size_t, TemplateId> read_assignment_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::size_t, TemplateId> assignment;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("line_no")) continue;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw DataError("expected 2 CSV fields", line_no);
    assignment[parse_unsigned<std::size_t>(f[0], line_no, "line number")] =
        parse_unsigned<TemplateId>(f[1], line_no, "template id");
  }
  return assignment;
}

ParseResult read_parse_result(const std::filesystem::path& templates_csv,
                              const std::filesystem::path& assignment_csv) {
  ParseResult out;
  out.templates = read_templates_csv(templates_csv);
  out.assignment = read_assignment_csv(assignment_csv);
  for (const auto& [line, id] : out.assignment) {
    if (id >= out.templates.size()) {
      throw DataError("assignment of line " + std::to_string(line) + " names unknown template " +
                      std::to_string(id));
    }
  }
  return out;
}

}  // namespace neurallog::parsers
