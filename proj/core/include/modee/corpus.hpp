#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace modee {

/// The five event slots, in output order.
enum class Slot { Where = 0, When, What, Who, Why };
inline constexpr std::size_t kSlotCount = 5;
inline constexpr std::array<Slot, kSlotCount> kSlots = {Slot::Where, Slot::When, Slot::What,
                                                        Slot::Who, Slot::Why};

/// Node classes for graph tokens: one per slot plus NONE. The numeric order is
/// also the overlap priority used by align_labels (later wins).
enum class TokenClass { Where = 0, When, What, Who, Why, None };
inline constexpr std::size_t kTokenClassCount = 6;

std::string_view slot_name(Slot s);  // "where", ...
std::string_view token_class_name(TokenClass c);  // "WHERE", ..., "NONE"
std::optional<TokenClass> token_class_from_name(std::string_view upper_name);
inline TokenClass to_token_class(Slot s) { return static_cast<TokenClass>(static_cast<int>(s)); }

struct Document {
  std::string id;
  std::string title;
  std::string body;
  // Title plus the first five sentences; the model input.
  std::string text;
  // Closed-domain records only.
  std::vector<std::string> argument_types;
};

class EventRecord {
 public:
  EventRecord() = default;

  const std::optional<std::string>& operator[](Slot s) const { return slots_[index(s)]; }
  std::optional<std::string>& operator[](Slot s) { return slots_[index(s)]; }

  EventRecord& set(Slot s, std::string value) {
    slots_[index(s)] = std::move(value);
    return *this;
  }
  bool present(Slot s) const { return slots_[index(s)].has_value(); }
  std::size_t present_count() const;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;

 private:
  static std::size_t index(Slot s) { return static_cast<std::size_t>(s); }
  std::array<std::optional<std::string>, kSlotCount> slots_;
};

struct Span {
  TokenClass cls = TokenClass::None;  // never None for a stored span
  std::size_t start = 0;              // byte offsets into Document::text
  std::size_t end = 0;
};

struct AnnotatedDocument {
  Document document;
  EventRecord gold;
  std::vector<Span> spans;
};

struct TokenOffset {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenOffset&, const TokenOffset&) = default;
};

struct TokenLabeling {
  std::vector<TokenClass> labels;
  // Spans that touched no token, typically because they fall past the
  // truncation cap.
  std::size_t dropped_spans = 0;
};

enum class Schema { OpenDomain, ClosedDomain };

/// Tolerant parse of decoder output "where:..; when:..; what:..; who:..; why:..".
/// Throws ParseError if no "label:" segment is recognized.
EventRecord parse_5w_string(std::string_view s);
std::string render_5w_string(const EventRecord& r);

/// Collapses runs of whitespace to one space and trims.
std::string collapse_whitespace(std::string_view s);

std::vector<AnnotatedDocument> load_corpus(const std::filesystem::path& path, Schema schema);
std::vector<AnnotatedDocument> read_corpus(std::istream& in, Schema schema);
void write_corpus(const std::filesystem::path& path, std::span<const AnnotatedDocument> docs);
std::string corpus_record_json(const AnnotatedDocument& doc);

struct CorpusSplit {
  std::vector<AnnotatedDocument> train;
  std::vector<AnnotatedDocument> validation;
  std::vector<AnnotatedDocument> test;
};

CorpusSplit split_corpus(std::span<const AnnotatedDocument> docs, std::array<double, 3> ratios,
                         std::uint64_t seed);

TokenLabeling align_labels(const AnnotatedDocument& doc, std::span<const TokenOffset> offsets);

std::string build_closed_domain_input(const Document& doc,
                                      std::span<const std::string> argument_types);

/// The string fed to the encoder for this document under the given schema.
std::string model_input_text(const Document& doc, Schema schema);

}  // namespace modee
