#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "modee/corpus.hpp"

namespace modee {

/// Word-level pieces with a leading "▁" marker when the piece follows
/// whitespace, so decoding restores the text up to whitespace collapsing.
/// Pieces are maximal alphanumeric runs (bytes >= 0x80 count as letters) or a
/// single punctuation byte.
struct Piece {
  std::string text;  // including the marker, if any
  TokenOffset offset;
};

std::vector<Piece> split_pieces(std::string_view text);

struct Tokenization {
  std::vector<int> token_ids;
  std::vector<TokenOffset> offsets;
  bool truncated = false;

  std::size_t size() const { return token_ids.size(); }
  friend bool operator==(const Tokenization&, const Tokenization&) = default;
};

class Vocabulary {
 public:
  // Same ids as the T5 family: pad doubles as the decoder start token.
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  Vocabulary();

  /// Pieces ordered by descending frequency, ties broken lexicographically.
  /// max_size (0 = unlimited) includes the three special tokens.
  static Vocabulary build(std::span<const std::string> texts, std::size_t max_size = 0);

  int id(std::string_view piece) const;
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(pieces_.size()); }
  int add(std::string piece);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.pieces_ == b.pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
};

/// Encoder input: pieces followed by </s>; at most cap ids in total.
Tokenization tokenize(const Vocabulary& vocab, std::string_view text, std::size_t cap);

/// Decoder target ids (pieces + </s>), capped the same way.
std::vector<int> encode_target(const Vocabulary& vocab, std::string_view text, std::size_t cap);

/// Inverse of encode_target; special tokens are dropped, unknown pieces
/// render as "<unk>".
std::string decode(const Vocabulary& vocab, std::span<const int> ids);

}  // namespace modee
