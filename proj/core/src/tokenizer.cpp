#include "modee/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "modee/errors.hpp"

namespace modee {

namespace {

constexpr std::string_view kMarker = "\xE2\x96\x81";  // U+2581

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_word(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

std::vector<Piece> split_pieces(std::string_view text) {
  std::vector<Piece> out;
  std::size_t i = 0;
  bool after_space = false;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      after_space = true;
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_word(c)) {
      while (j < text.size() && is_word(static_cast<unsigned char>(text[j]))) ++j;
    }
    Piece p;
    if (after_space) p.text = kMarker;
    p.text.append(text.substr(i, j - i));
    p.offset = {i, j};
    out.push_back(std::move(p));
    after_space = false;
    i = j;
  }
  return out;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("</s>");
  add("<unk>");
}

int Vocabulary::add(std::string piece) {
  auto it = index_.find(piece);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(pieces_.size());
  index_.emplace(piece, id);
  pieces_.push_back(std::move(piece));
  return id;
}

int Vocabulary::id(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& p : split_pieces(t)) ++counts[p.text];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [piece, n] : ranked) {
    if (max_size != 0 && static_cast<std::size_t>(v.size()) >= max_size) break;
    v.add(piece);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary: " + path.string());
  for (const auto& p : pieces_) out << p << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary: " + path.string());
  Vocabulary v;
  v.pieces_.clear();
  v.index_.clear();
  std::string line;
  while (std::getline(in, line)) v.add(line);
  if (v.size() < 3 || v.piece(kPad) != "<pad>" || v.piece(kEos) != "</s>" ||
      v.piece(kUnk) != "<unk>") {
    throw IoError("vocabulary file lacks the special tokens: " + path.string());
  }
  return v;
}

Tokenization tokenize(const Vocabulary& vocab, std::string_view text, std::size_t cap) {
  if (cap < 1) throw ValueError("tokenize: cap must be >= 1");
  const auto pieces = split_pieces(text);
  Tokenization out;
  const std::size_t keep = std::min(pieces.size(), cap - 1);
  out.truncated = pieces.size() + 1 > cap;
  out.token_ids.reserve(keep + 1);
  out.offsets.reserve(keep + 1);
  for (std::size_t i = 0; i < keep; ++i) {
    out.token_ids.push_back(vocab.id(pieces[i].text));
    out.offsets.push_back(pieces[i].offset);
  }
  const std::size_t end = keep < pieces.size() ? pieces[keep].offset.start : text.size();
  out.token_ids.push_back(Vocabulary::kEos);
  out.offsets.push_back({end, end});
  return out;
}

std::vector<int> encode_target(const Vocabulary& vocab, std::string_view text, std::size_t cap) {
  return tokenize(vocab, text, cap).token_ids;
}

std::string decode(const Vocabulary& vocab, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kEos) continue;
    if (id < 0 || id >= vocab.size()) throw ValueError("decode: id out of range");
    const std::string& p = vocab.piece(id);
    if (p.compare(0, kMarker.size(), kMarker) == 0) {
      if (!out.empty()) out += ' ';
      out.append(p, kMarker.size());
    } else {
      out += p;
    }
  }
  return out;
}

}  // namespace modee
