#include "modee/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "modee/errors.hpp"
#include "modee/params.hpp"

namespace modee {

namespace {

void require_aligned(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ValueError("prediction/gold length mismatch: " + std::to_string(a) + " vs " +
                     std::to_string(b));
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

PRF prf_from_counts(const SlotCounts& c) {
  PRF out;
  out.precision = ratio(c.correct, c.predicted);
  out.recall = ratio(c.correct, c.gold);
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

bool is_terminal_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

struct Accum {
  double p = 0, r = 0, f = 0;
  std::size_t n = 0;
  void add(const PRF& x) {
    p += x.precision;
    r += x.recall;
    f += x.f1;
    ++n;
  }
  PRF mean() const {
    if (n == 0) return {};
    const double k = static_cast<double>(n);
    return {p / k, r / k, f / k};
  }
};

SlotScores averaged_scores(std::span<const EventRecord> preds, std::span<const EventRecord> golds,
                           const std::function<PRF(std::string_view, std::string_view)>& pair) {
  require_aligned(preds.size(), golds.size());
  SlotScores out;
  std::array<Accum, kSlotCount> per_w;
  Accum overall;
  for (std::size_t d = 0; d < preds.size(); ++d) {
    Accum doc;
    for (Slot s : kSlots) {
      const auto& p = preds[d][s];
      const auto& g = golds[d][s];
      const auto w = static_cast<std::size_t>(s);
      out.counts[w].predicted += p.has_value();
      out.counts[w].gold += g.has_value();
      if (!p && !g) continue;
      const PRF score = (p && g) ? pair(*p, *g) : PRF{};
      per_w[w].add(score);
      doc.add(score);
    }
    if (doc.n > 0) overall.add(doc.mean());
  }
  for (std::size_t w = 0; w < kSlotCount; ++w) {
    out.per_w[w] = per_w[w].mean();
    out.counts[w].support = per_w[w].n;
    out.overall_counts.predicted += out.counts[w].predicted;
    out.overall_counts.gold += out.counts[w].gold;
  }
  out.overall = overall.mean();
  out.overall_counts.support = overall.n;
  return out;
}

nlohmann::json scores_json(const SlotScores& s) {
  auto prf = [](const PRF& x, const SlotCounts& c) {
    return nlohmann::json{{"p", x.precision},      {"r", x.recall},   {"f1", x.f1},
                          {"predicted", c.predicted}, {"gold", c.gold}, {"correct", c.correct},
                          {"support", c.support}};
  };
  nlohmann::json per = nlohmann::json::object();
  for (Slot slot : kSlots) {
    const auto w = static_cast<std::size_t>(slot);
    per[std::string(slot_name(slot))] = prf(s.per_w[w], s.counts[w]);
  }
  return {{"overall", prf(s.overall, s.overall_counts)}, {"per_w", per}};
}

}  // namespace

double harmonic_f1(double precision, double recall) {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

std::string normalize_answer(std::string_view s) {
  std::string lowered(s);
  for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::string out = collapse_whitespace(lowered);
  while (!out.empty() && is_terminal_punct(out.back())) out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

SlotScores exact_match_scores(std::span<const EventRecord> preds, std::span<const EventRecord> golds,
                              const ExactMatchOptions& options) {
  require_aligned(preds.size(), golds.size());
  SlotScores out;
  auto norm = [&](const std::string& v) { return options.normalize ? normalize_answer(v) : v; };
  for (std::size_t d = 0; d < preds.size(); ++d) {
    for (Slot s : kSlots) {
      const auto w = static_cast<std::size_t>(s);
      const auto& p = preds[d][s];
      const auto& g = golds[d][s];
      out.counts[w].predicted += p.has_value();
      out.counts[w].gold += g.has_value();
      if (p && g && norm(*p) == norm(*g)) ++out.counts[w].correct;
    }
  }
  Accum macro;
  for (std::size_t w = 0; w < kSlotCount; ++w) {
    out.per_w[w] = prf_from_counts(out.counts[w]);
    macro.add(out.per_w[w]);
    out.overall_counts.predicted += out.counts[w].predicted;
    out.overall_counts.gold += out.counts[w].gold;
    out.overall_counts.correct += out.counts[w].correct;
  }
  out.overall = options.macro_overall ? macro.mean() : prf_from_counts(out.overall_counts);
  return out;
}

std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PRF rouge_l(std::string_view pred, std::string_view gold) {
  const auto p = whitespace_tokens(normalize_answer(pred));
  const auto g = whitespace_tokens(normalize_answer(gold));
  if (p.empty() || g.empty()) return {};
  const std::size_t lcs = lcs_length(p, g);
  PRF out;
  out.precision = ratio(lcs, p.size());
  out.recall = ratio(lcs, g.size());
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

PRF TokenEmbeddingScorer::score(std::string_view pred, std::string_view gold) const {
  const auto p = whitespace_tokens(normalize_answer(pred));
  const auto g = whitespace_tokens(normalize_answer(gold));
  if (p.empty() || g.empty()) return {};
  auto unit = [this](const std::string& t) {
    Eigen::VectorXd v = embed(t);
    const double n = v.norm();
    if (!(n > 0.0)) throw ScorerError("zero embedding for token '" + t + "'");
    return Eigen::VectorXd(v / n);
  };
  std::vector<Eigen::VectorXd> pe, ge;
  for (const auto& t : p) pe.push_back(unit(t));
  for (const auto& t : g) ge.push_back(unit(t));
  Eigen::MatrixXd sim(pe.size(), ge.size());
  for (std::size_t i = 0; i < pe.size(); ++i) {
    for (std::size_t j = 0; j < ge.size(); ++j) {
      sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pe[i].dot(ge[j]);
    }
  }
  PRF out;
  out.precision = sim.rowwise().maxCoeff().mean();
  out.recall = sim.colwise().maxCoeff().mean();
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

Eigen::VectorXd HashStubScorer::embed(std::string_view token) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  v(static_cast<Eigen::Index>(fnv1a(token.data(), token.size()) % static_cast<std::uint64_t>(dim_))) = 1.0;
  return v;
}

SlotScores rouge_l_scores(std::span<const EventRecord> preds, std::span<const EventRecord> golds) {
  return averaged_scores(preds, golds, [](std::string_view p, std::string_view g) { return rouge_l(p, g); });
}

SlotScores embed_scores(std::span<const EventRecord> preds, std::span<const EventRecord> golds,
                        const EmbeddingScorer& scorer) {
  return averaged_scores(preds, golds,
                         [&](std::string_view p, std::string_view g) { return scorer.score(p, g); });
}

std::optional<MetricSet> metric_set_from_name(std::string_view name) {
  if (name == "em") return MetricSet::ExactMatch;
  if (name == "rouge") return MetricSet::RougeL;
  if (name == "embed") return MetricSet::Embed;
  if (name == "all") return MetricSet::All;
  return std::nullopt;
}

EvalReport evaluate_records(std::span<const EventRecord> preds, std::span<const EventRecord> golds,
                            MetricSet metrics, const EmbeddingScorer* scorer) {
  require_aligned(preds.size(), golds.size());
  EvalReport report;
  report.n_docs = preds.size();
  report.em = exact_match_scores(preds, golds);
  if (metrics == MetricSet::RougeL || metrics == MetricSet::All) {
    report.rouge_l = rouge_l_scores(preds, golds);
  }
  if (metrics == MetricSet::Embed || metrics == MetricSet::All) {
    HashStubScorer stub;
    report.embed = embed_scores(preds, golds, scorer ? *scorer : stub);
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::json j;
  j["n_docs"] = report.n_docs;
  j["parse_failures"] = report.parse_failures;
  j["em"] = scores_json(report.em);
  if (report.rouge_l) j["rouge_l"] = scores_json(*report.rouge_l);
  if (report.embed) j["embed"] = scores_json(*report.embed);
  return j.dump(2);
}

std::string report_table(const EvalReport& report) {
  struct Block {
    const char* title;
    const SlotScores* scores;
  };
  std::vector<Block> blocks{{"Exact Match", &report.em}};
  if (report.rouge_l) blocks.push_back({"ROUGE-L", &*report.rouge_l});
  if (report.embed) blocks.push_back({"Embed score", &*report.embed});

  std::ostringstream out;
  char buf[64];
  out << std::string(10, ' ');
  for (const auto& b : blocks) {
    std::snprintf(buf, sizeof(buf), " | %-20s", b.title);
    out << buf;
  }
  out << '\n' << std::string(10, ' ');
  for (std::size_t i = 0; i < blocks.size(); ++i) out << " |      P      R     F1";
  out << '\n';
  out << std::string(10 + blocks.size() * 23, '-') << '\n';

  auto row = [&](const char* label, auto get) {
    std::snprintf(buf, sizeof(buf), "%-10s", label);
    out << buf;
    for (const auto& b : blocks) {
      const PRF x = get(*b.scores);
      std::snprintf(buf, sizeof(buf), " | %6.1f %6.1f %6.1f", 100 * x.precision, 100 * x.recall,
                    100 * x.f1);
      out << buf;
    }
    out << '\n';
  };
  row("Overall", [](const SlotScores& s) { return s.overall; });
  const char* names[] = {"Where", "When", "What", "Who", "Why"};
  for (std::size_t w = 0; w < kSlotCount; ++w) {
    row(names[w], [w](const SlotScores& s) { return s.per_w[w]; });
  }
  out << "documents: " << report.n_docs << ", parse failures: " << report.parse_failures << '\n';
  return out.str();
}

}  // namespace modee
