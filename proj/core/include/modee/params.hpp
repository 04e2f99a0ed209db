#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "modee/autodiff.hpp"
#include "modee/rng.hpp"

namespace modee {

/// Which optimizer group a parameter belongs to. Frozen parameters are held
/// outside any ParameterSet and never reach an optimizer.
enum class ModuleTag { TextEncoder, Decoder, GraphEncoder, Fusion };

std::string_view module_tag_name(ModuleTag tag);

struct NamedParameter {
  std::string name;
  ModuleTag tag;
  ad::Var var;
};

class ParameterSet {
 public:
  ad::Var add(std::string name, ModuleTag tag, ad::Matrix init);

  std::vector<NamedParameter>& entries() { return entries_; }
  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  const NamedParameter* find(std::string_view name) const;
  void zero_grad();
  /// Appends another set's entries (shared, not copied).
  void extend(const ParameterSet& other);

 private:
  std::vector<NamedParameter> entries_;
};

ad::Matrix xavier_uniform(Rng& rng, ad::Index rows, ad::Index cols);
ad::Matrix normal_matrix(Rng& rng, ad::Index rows, ad::Index cols, double stddev);

/// FNV-1a 64 over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t matrix_checksum(const ad::Matrix& m, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Named-matrix blob: "MODEEW01", count, then per entry name length, name,
/// rows, cols, row-major little-endian doubles.
struct NamedMatrix {
  std::string name;
  ad::Matrix value;
};
void write_matrices(const std::filesystem::path& path, const std::vector<NamedMatrix>& items);
std::vector<NamedMatrix> read_matrices(const std::filesystem::path& path);

}  // namespace modee
