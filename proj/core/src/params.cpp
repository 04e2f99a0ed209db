#include "modee/params.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "modee/errors.hpp"

namespace modee {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'D', 'E', 'E', 'W', '0', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated weights file: " + path.string());
  return v;
}

}  // namespace

std::string_view module_tag_name(ModuleTag tag) {
  switch (tag) {
    case ModuleTag::TextEncoder: return "text_encoder";
    case ModuleTag::Decoder: return "decoder";
    case ModuleTag::GraphEncoder: return "graph_encoder";
    case ModuleTag::Fusion: return "fusion";
  }
  return "unknown";
}

ad::Var ParameterSet::add(std::string name, ModuleTag tag, ad::Matrix init) {
  if (find(name)) throw ValueError("duplicate parameter name: " + name);
  ad::Var v = ad::parameter(std::move(init));
  entries_.push_back({std::move(name), tag, v});
  return v;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
  return n;
}

const NamedParameter* ParameterSet::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

void ParameterSet::extend(const ParameterSet& other) {
  for (const auto& e : other.entries_) {
    if (find(e.name)) throw ValueError("duplicate parameter name: " + e.name);
    entries_.push_back(e);
  }
}

ad::Matrix xavier_uniform(Rng& rng, ad::Index rows, ad::Index cols) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

ad::Matrix normal_matrix(Rng& rng, ad::Index rows, ad::Index cols, double stddev) {
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t matrix_checksum(const ad::Matrix& m, std::uint64_t h) {
  const std::int64_t shape[2] = {m.rows(), m.cols()};
  h = fnv1a(shape, sizeof(shape), h);
  return fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), h);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_matrices(const std::filesystem::path& path, const std::vector<NamedMatrix>& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weights: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, items.size());
  for (const auto& it : items) {
    put<std::uint64_t>(out, it.name.size());
    out.write(it.name.data(), static_cast<std::streamsize>(it.name.size()));
    put<std::int64_t>(out, it.value.rows());
    put<std::int64_t>(out, it.value.cols());
    out.write(reinterpret_cast<const char*>(it.value.data()),
              static_cast<std::streamsize>(it.value.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<NamedMatrix> read_matrices(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read weights: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw IoError("not a weights file: " + path.string());
  const auto count = get<std::uint64_t>(in, path);
  std::vector<NamedMatrix> items;
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedMatrix nm;
    nm.name.resize(get<std::uint64_t>(in, path));
    in.read(nm.name.data(), static_cast<std::streamsize>(nm.name.size()));
    const auto rows = get<std::int64_t>(in, path);
    const auto cols = get<std::int64_t>(in, path);
    if (rows < 0 || cols < 0) throw IoError("corrupt weights file: " + path.string());
    nm.value.resize(rows, cols);
    in.read(reinterpret_cast<char*>(nm.value.data()),
            static_cast<std::streamsize>(nm.value.size() * sizeof(double)));
    if (!in) throw IoError("truncated weights file: " + path.string());
    items.push_back(std::move(nm));
  }
  return items;
}

}  // namespace modee
