#include "modee/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "modee/errors.hpp"
#include "modee/rng.hpp"

namespace modee {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, kSlotCount> kSlotNames = {"where", "when", "what", "who",
                                                                 "why"};
constexpr std::array<std::string_view, kTokenClassCount> kClassNames = {"WHERE", "WHEN", "WHAT",
                                                                        "WHO",   "WHY",  "NONE"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

struct LabelHit {
  Slot slot;
  std::size_t segment_start;  // index of the ';' (or 0) that opens the segment
  std::size_t value_start;
};

// Recognizes "<ws>*label<ws>*:" at position pos.
std::optional<LabelHit> match_label(std::string_view s, std::size_t segment_start, std::size_t pos) {
  while (pos < s.size() && is_space(s[pos])) ++pos;
  for (Slot slot : kSlots) {
    const std::string_view name = kSlotNames[static_cast<std::size_t>(slot)];
    if (pos + name.size() > s.size() || !iequals(s.substr(pos, name.size()), name)) continue;
    std::size_t q = pos + name.size();
    while (q < s.size() && is_space(s[q])) ++q;
    if (q < s.size() && s[q] == ':') return LabelHit{slot, segment_start, q + 1};
  }
  return std::nullopt;
}

json slot_json(const EventRecord& r) {
  json g = json::object();
  for (Slot s : kSlots) {
    const auto& v = r[s];
    g[std::string(slot_name(s))] = v ? json(*v) : json(nullptr);
  }
  return g;
}

[[noreturn]] void schema_fail(std::size_t line, const std::string& field, const std::string& what) {
  throw SchemaError(line, field, what);
}

std::string require_string(const json& rec, const char* field, std::size_t line) {
  auto it = rec.find(field);
  if (it == rec.end()) schema_fail(line, field, "missing");
  if (!it->is_string()) schema_fail(line, field, "expected a string");
  return it->get<std::string>();
}

AnnotatedDocument parse_record(const json& rec, std::size_t line, Schema schema) {
  if (!rec.is_object()) schema_fail(line, "<record>", "expected a JSON object");
  AnnotatedDocument out;
  Document& doc = out.document;
  doc.id = require_string(rec, "id", line);
  if (doc.id.empty()) schema_fail(line, "id", "must be non-empty");
  doc.title = require_string(rec, "title", line);
  doc.body = require_string(rec, "body", line);
  doc.text = require_string(rec, "text", line);
  if (doc.text.empty()) schema_fail(line, "text", "must be non-empty");

  auto g = rec.find("gold");
  if (g == rec.end() || !g->is_object()) schema_fail(line, "gold", "expected an object");
  for (auto it = g->begin(); it != g->end(); ++it) {
    if (std::find(kSlotNames.begin(), kSlotNames.end(), it.key()) == kSlotNames.end()) {
      schema_fail(line, "gold." + it.key(), "unknown slot");
    }
  }
  for (Slot s : kSlots) {
    const std::string key(slot_name(s));
    auto v = g->find(key);
    if (v == g->end()) schema_fail(line, "gold." + key, "missing (use null for absent)");
    if (v->is_null()) continue;
    if (!v->is_string()) schema_fail(line, "gold." + key, "expected string or null");
    std::string value = collapse_whitespace(v->get<std::string>());
    if (value.empty()) schema_fail(line, "gold." + key, "present slot must be non-empty");
    out.gold.set(s, std::move(value));
  }

  if (auto sp = rec.find("spans"); sp != rec.end()) {
    if (!sp->is_array()) schema_fail(line, "spans", "expected an array");
    for (std::size_t k = 0; k < sp->size(); ++k) {
      const json& e = (*sp)[k];
      const std::string field = "spans[" + std::to_string(k) + "]";
      if (!e.is_object() || !e.contains("class") || !e.contains("start") || !e.contains("end") ||
          !e["class"].is_string() || !e["start"].is_number_unsigned() ||
          !e["end"].is_number_unsigned()) {
        schema_fail(line, field, "expected {class, start, end}");
      }
      auto cls = token_class_from_name(e["class"].get<std::string>());
      if (!cls || *cls == TokenClass::None) schema_fail(line, field + ".class", "unknown class");
      Span span{*cls, e["start"].get<std::size_t>(), e["end"].get<std::size_t>()};
      if (span.start >= span.end) schema_fail(line, field, "start must be < end");
      if (span.end > doc.text.size()) schema_fail(line, field + ".end", "beyond text length");
      const auto& slot_value = out.gold[static_cast<Slot>(static_cast<int>(span.cls))];
      if (!slot_value) schema_fail(line, field, "span for an absent gold slot");
      const std::string covered =
          collapse_whitespace(std::string_view(doc.text).substr(span.start, span.end - span.start));
      if (covered.empty() || slot_value->find(covered) == std::string::npos) {
        schema_fail(line, field, "span text '" + covered + "' does not match gold slot");
      }
      out.spans.push_back(span);
    }
  }

  auto at = rec.find("argument_types");
  if (schema == Schema::ClosedDomain) {
    if (at == rec.end() || !at->is_array() || at->empty()) {
      schema_fail(line, "argument_types", "closed-domain records need a non-empty list");
    }
  }
  if (at != rec.end()) {
    if (!at->is_array()) schema_fail(line, "argument_types", "expected an array");
    for (const auto& t : *at) {
      if (!t.is_string()) schema_fail(line, "argument_types", "expected strings");
      doc.argument_types.push_back(t.get<std::string>());
    }
  }
  return out;
}

}  // namespace

std::string_view slot_name(Slot s) { return kSlotNames[static_cast<std::size_t>(s)]; }

std::string_view token_class_name(TokenClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

std::optional<TokenClass> token_class_from_name(std::string_view upper_name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (iequals(kClassNames[i], upper_name)) return static_cast<TokenClass>(i);
  }
  return std::nullopt;
}

std::size_t EventRecord::present_count() const {
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(), [](const auto& v) { return v.has_value(); }));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

EventRecord parse_5w_string(std::string_view s) {
  std::vector<LabelHit> hits;
  if (auto h = match_label(s, 0, 0)) hits.push_back(*h);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != ';') continue;
    if (auto h = match_label(s, i, i + 1)) hits.push_back(*h);
  }
  if (hits.empty()) throw ParseError("no recognizable 'label:' segment in decoder output");

  EventRecord r;
  std::array<bool, kSlotCount> seen{};
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const std::size_t end = k + 1 < hits.size() ? hits[k + 1].segment_start : s.size();
    const auto idx = static_cast<std::size_t>(hits[k].slot);
    if (seen[idx]) continue;  // first occurrence wins
    seen[idx] = true;
    std::string_view value = trim(s.substr(hits[k].value_start, end - hits[k].value_start));
    if (value.empty() || iequals(value, "none")) continue;
    r.set(hits[k].slot, std::string(value));
  }
  return r;
}

std::string render_5w_string(const EventRecord& r) {
  std::string out;
  for (Slot s : kSlots) {
    if (!out.empty()) out += "; ";
    out += slot_name(s);
    out += ':';
    out += r[s] ? *r[s] : std::string("none");
  }
  return out;
}

std::vector<AnnotatedDocument> read_corpus(std::istream& in, Schema schema) {
  std::vector<AnnotatedDocument> docs;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      schema_fail(line_no, "<record>", std::string("malformed JSON: ") + e.what());
    }
    AnnotatedDocument doc = parse_record(rec, line_no, schema);
    if (!ids.insert(doc.document.id).second) {
      schema_fail(line_no, "id", "duplicate id '" + doc.document.id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<AnnotatedDocument> load_corpus(const std::filesystem::path& path, Schema schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path.string());
  return read_corpus(in, schema);
}

std::string corpus_record_json(const AnnotatedDocument& doc) {
  json rec;
  rec["id"] = doc.document.id;
  rec["title"] = doc.document.title;
  rec["body"] = doc.document.body;
  rec["text"] = doc.document.text;
  rec["gold"] = slot_json(doc.gold);
  json spans = json::array();
  for (const auto& s : doc.spans) {
    spans.push_back({{"class", std::string(token_class_name(s.cls))}, {"start", s.start}, {"end", s.end}});
  }
  rec["spans"] = std::move(spans);
  if (!doc.document.argument_types.empty()) rec["argument_types"] = doc.document.argument_types;
  return rec.dump();
}

void write_corpus(const std::filesystem::path& path, std::span<const AnnotatedDocument> docs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path.string());
  for (const auto& d : docs) out << corpus_record_json(d) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

CorpusSplit split_corpus(std::span<const AnnotatedDocument> docs, std::array<double, 3> ratios,
                         std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValueError("split ratios must be non-negative");
  }
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) throw ValueError("split ratios must sum to 1");

  const std::size_t n = docs.size();
  // Small slack so 0.1 * 10000 does not floor to 999.
  auto alloc = [n](double r) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  const std::size_t n_val = alloc(ratios[1]);
  const std::size_t n_test = alloc(ratios[2]);
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  CorpusSplit out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& d = docs[order[k]];
    if (k < n_train) {
      out.train.push_back(d);
    } else if (k < n_train + n_val) {
      out.validation.push_back(d);
    } else {
      out.test.push_back(d);
    }
  }
  return out;
}

TokenLabeling align_labels(const AnnotatedDocument& doc, std::span<const TokenOffset> offsets) {
  TokenLabeling out;
  out.labels.assign(offsets.size(), TokenClass::None);
  // Higher class index wins; None sits above Why numerically, so track the
  // winning span class separately.
  std::vector<int> best(offsets.size(), -1);
  for (const Span& span : doc.spans) {
    bool hit = false;
    for (std::size_t t = 0; t < offsets.size(); ++t) {
      const auto lo = std::max(span.start, offsets[t].start);
      const auto hi = std::min(span.end, offsets[t].end);
      if (hi > lo) {
        hit = true;
        best[t] = std::max(best[t], static_cast<int>(span.cls));
      }
    }
    if (!hit) ++out.dropped_spans;
  }
  for (std::size_t t = 0; t < offsets.size(); ++t) {
    if (best[t] >= 0) out.labels[t] = static_cast<TokenClass>(best[t]);
  }
  return out;
}

std::string build_closed_domain_input(const Document& doc,
                                      std::span<const std::string> argument_types) {
  if (argument_types.empty()) throw ValueError("closed-domain input needs at least one argument type");
  std::string out = doc.text;
  out += " argument types: ";
  for (std::size_t i = 0; i < argument_types.size(); ++i) {
    if (i) out += "; ";
    out += argument_types[i];
  }
  return out;
}

std::string model_input_text(const Document& doc, Schema schema) {
  if (schema == Schema::ClosedDomain) return build_closed_domain_input(doc, doc.argument_types);
  return doc.text;
}

}  // namespace modee
