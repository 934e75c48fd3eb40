#include "attrcons/alignment.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "attrcons/errors.hpp"

namespace attrcons {
namespace {

[[noreturn]] void format_error(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && errno != ERANGE && std::isfinite(out);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> fields;
  std::string f;
  while (ss >> f) fields.push_back(std::move(f));
  return fields;
}

const EmbeddingTable& table_for(const EmbeddingTables& tables, const std::string& language) {
  auto it = tables.find(language);
  if (it == tables.end() || !it->second) {
    throw DataError("no embedding table for language \"" + language + "\"");
  }
  return *it->second;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::string language, std::size_t dim, bool lowercase_keys)
    : language_(std::move(language)), dim_(dim), lowercase_keys_(lowercase_keys) {
  if (dim_ == 0) throw DataError("embedding dimension must be positive");
}

std::string EmbeddingTable::key(std::string_view token) const {
  return lowercase_keys_ ? lowercase_utf8(token) : std::string(token);
}

bool EmbeddingTable::insert(std::string_view token, std::vector<double> vector) {
  if (vector.size() != dim_) {
    throw DataError("vector for \"" + std::string(token) + "\" has " + std::to_string(vector.size()) +
                    " entries, expected " + std::to_string(dim_));
  }
  if (!vectors_.emplace(key(token), std::move(vector)).second) {
    ++duplicates_;
    return false;
  }
  return true;
}

const std::vector<double>* EmbeddingTable::find(std::string_view token) const {
  auto it = vectors_.find(key(token));
  return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(std::istream& in, std::optional<std::size_t> expected_dim,
                               std::string language, bool lowercase_keys) {
  std::string line;
  if (!std::getline(in, line)) format_error(1, "missing header \"V d\"");
  const auto header = split_fields(line);
  long long count = 0;
  long long dim = 0;
  {
    char* end = nullptr;
    if (header.size() != 2) format_error(1, "header must be \"V d\"");
    count = std::strtoll(header[0].c_str(), &end, 10);
    if (*end != '\0' || count < 0) format_error(1, "bad vocabulary size in header");
    dim = std::strtoll(header[1].c_str(), &end, 10);
    if (*end != '\0' || dim <= 0) format_error(1, "bad dimension in header");
  }
  if (expected_dim && static_cast<std::size_t>(dim) != *expected_dim) {
    format_error(1, "header dimension " + std::to_string(dim) + " differs from expected " +
                        std::to_string(*expected_dim));
  }

  EmbeddingTable table(std::move(language), static_cast<std::size_t>(dim), lowercase_keys);
  std::size_t line_number = 1;
  long long seen = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != static_cast<std::size_t>(dim) + 1) {
      format_error(line_number, "expected token and " + std::to_string(dim) + " values, got " +
                                    std::to_string(fields.size() - 1) + " values");
    }
    std::vector<double> vec(static_cast<std::size_t>(dim));
    for (std::size_t k = 0; k < vec.size(); ++k) {
      if (!parse_double(fields[k + 1], vec[k])) {
        format_error(line_number, "non-numeric vector entry \"" + fields[k + 1] + "\"");
      }
    }
    table.insert(fields[0], std::move(vec));
    ++seen;
  }
  if (in.bad()) throw DataError("read failure after line " + std::to_string(line_number));
  if (seen != count) {
    format_error(line_number, "header declares " + std::to_string(count) + " vectors but file has " +
                                  std::to_string(seen));
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim, std::string language,
                               bool lowercase_keys) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding table " + path.string());
  try {
    return load_embeddings(in, expected_dim, std::move(language), lowercase_keys);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_embeddings(std::ostream& out,
                      const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().second.size();
  out << rows.size() << ' ' << dim << '\n';
  char buf[32];
  for (const auto& [token, vec] : rows) {
    out << token;
    for (double v : vec) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DataError("cosine of vectors with lengths " + std::to_string(u.size()) + " and " +
                    std::to_string(v.size()));
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  const double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  // Rounding can push |c| a few ulps past 1.
  return std::clamp(c, -1.0, 1.0);
}

SimilarityMatrix similarity_matrix(const Sentence& source, const Sentence& target,
                                   const EmbeddingTables& tables) {
  const EmbeddingTable& src_table = table_for(tables, source.language);
  const EmbeddingTable& tgt_table = table_for(tables, target.language);
  if (src_table.dim() != tgt_table.dim()) {
    throw DataError("embedding tables for \"" + source.language + "\" and \"" + target.language +
                    "\" have different dimensions");
  }

  auto lookup = [](const Sentence& s, const EmbeddingTable& table) {
    std::vector<const std::vector<double>*> out(s.size(), nullptr);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.tokens[i].kind != TokenKind::content) continue;
      const auto* vec = table.find(s.tokens[i].surface);
      // Zero-norm vectors carry no direction; treat them like OOV.
      if (vec && std::any_of(vec->begin(), vec->end(), [](double x) { return x != 0.0; })) {
        out[i] = vec;
      }
    }
    return out;
  };
  const auto src_vecs = lookup(source, src_table);
  const auto tgt_vecs = lookup(target, tgt_table);

  SimilarityMatrix sim{source.size(), target.size(), Matrix(source.size(), target.size()),
                       std::vector<bool>(source.size() * target.size(), true)};
  for (std::size_t i = 0; i < sim.rows; ++i) {
    if (!src_vecs[i]) continue;
    for (std::size_t j = 0; j < sim.cols; ++j) {
      if (!tgt_vecs[j]) continue;
      sim.values(i, j) = cosine(*src_vecs[i], *tgt_vecs[j]);
      sim.oov_mask[i * sim.cols + j] = false;
    }
  }
  return sim;
}

}  // namespace attrcons
