#include "attrcons/toy_model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "attrcons/errors.hpp"

namespace attrcons {
namespace {

using nlohmann::json;

constexpr std::string_view kCheckpointFormat = "attrcons-toy-model/1";

// Uniform in [-1, 1) from the top 53 bits; independent of the standard library's
// distribution implementations so checkpoints reproduce across toolchains.
double uniform_signed(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

std::string_view to_string(Activation activation) {
  return activation == Activation::identity ? "identity" : "tanh";
}

std::optional<Activation> parse_activation(std::string_view text) {
  if (text == "identity" || text == "linear") return Activation::identity;
  if (text == "tanh") return Activation::tanh;
  return std::nullopt;
}

ToyModel::ToyModel(std::vector<std::string> vocab, Matrix embedding, Matrix output_weights,
                   std::vector<double> output_bias, Activation activation, std::uint64_t seed)
    : vocab_(std::move(vocab)),
      embedding_(std::move(embedding)),
      output_weights_(std::move(output_weights)),
      output_bias_(std::move(output_bias)),
      activation_(activation),
      seed_(seed) {
  if (vocab_.size() < 2 || vocab_[kPadRow] != kPadToken || vocab_[kUnkRow] != kUnkToken) {
    throw DataError("model vocab must start with [PAD], [UNK]");
  }
  if (embedding_.rows() != vocab_.size()) throw DataError("embedding rows != vocab size");
  if (embedding_.cols() < 1) throw DataError("embedding dimension must be >= 1");
  if (output_bias_.size() < 2) throw DataError("model needs at least 2 classes");
  if (output_weights_.rows() != embedding_.cols() || output_weights_.cols() != output_bias_.size()) {
    throw DataError("output weights must be d x K");
  }
  for (double v : embedding_.row(kPadRow)) {
    if (v != 0.0) throw DataError("padding embedding row must be zero");
  }
  index_.reserve(vocab_.size());
  for (std::size_t r = 0; r < vocab_.size(); ++r) {
    if (!index_.emplace(vocab_[r], r).second) throw DataError("duplicate vocab entry " + vocab_[r]);
  }
}

ToyModel ToyModel::random(const std::vector<std::string>& tokens, std::size_t dim,
                          std::size_t classes, std::uint64_t seed, Activation activation) {
  std::vector<std::string> vocab{std::string(kPadToken), std::string(kUnkToken),
                                 std::string(kSeparatorSurface)};
  std::unordered_set<std::string> seen(vocab.begin(), vocab.end());
  for (const auto& t : tokens) {
    if (seen.insert(t).second) vocab.push_back(t);
  }
  std::mt19937_64 gen(seed);
  Matrix embedding(vocab.size(), dim);
  for (std::size_t r = 1; r < vocab.size(); ++r) {
    for (double& v : embedding.row(r)) v = uniform_signed(gen);
  }
  Matrix weights(dim, classes);
  for (double& v : weights.values()) v = uniform_signed(gen);
  std::vector<double> bias(classes);
  for (double& v : bias) v = 0.1 * uniform_signed(gen);
  return ToyModel(std::move(vocab), std::move(embedding), std::move(weights), std::move(bias),
                  activation, seed);
}

std::size_t ToyModel::row_of(const Token& token) const {
  if (token.kind == TokenKind::padding) return kPadRow;
  auto it = index_.find(token.surface);
  return it == index_.end() ? kUnkRow : it->second;
}

void ToyModel::check_input(const Matrix& embeddings, std::size_t cls) const {
  if (cls >= classes()) {
    throw DataError("class " + std::to_string(cls) + " out of range for " +
                    std::to_string(classes()) + " classes");
  }
  if (embeddings.rows() == 0 || embeddings.cols() != dim()) {
    throw DataError("embeddings must be L x " + std::to_string(dim()) + " with L >= 1");
  }
}

std::vector<double> ToyModel::pooled(const Matrix& embeddings) const {
  std::vector<double> mean(dim(), 0.0);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const auto row = embeddings.row(i);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
  }
  const double inv = 1.0 / static_cast<double>(embeddings.rows());
  for (double& m : mean) m *= inv;
  return mean;
}

double ToyModel::score(const Matrix& embeddings, std::size_t cls) const {
  check_input(embeddings, cls);
  const auto mean = pooled(embeddings);
  double s = output_bias_[cls];
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double h = activation_ == Activation::tanh ? std::tanh(mean[k]) : mean[k];
    s += h * output_weights_(k, cls);
  }
  return s;
}

Matrix ToyModel::gradient(const Matrix& embeddings, std::size_t cls) const {
  check_input(embeddings, cls);
  const double inv = 1.0 / static_cast<double>(embeddings.rows());
  std::vector<double> g(dim());
  if (activation_ == Activation::tanh) {
    const auto mean = pooled(embeddings);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double h = std::tanh(mean[k]);
      g[k] = (1.0 - h * h) * output_weights_(k, cls) * inv;
    }
  } else {
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = output_weights_(k, cls) * inv;
  }
  Matrix grad(embeddings.rows(), dim());
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    std::copy(g.begin(), g.end(), grad.row(i).begin());
  }
  return grad;
}

Matrix embed(const Sentence& sentence, const ToyModel& model) {
  Matrix out(sentence.size(), model.dim());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto src = model.embedding_matrix().row(model.row_of(sentence.tokens[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

double forward(const Matrix& embeddings, const ToyModel& model, std::size_t cls) {
  return model.score(embeddings, cls);
}

Matrix gradient(const Matrix& embeddings, const ToyModel& model, std::size_t cls) {
  return model.gradient(embeddings, cls);
}

std::size_t predict(const Matrix& embeddings, const DifferentiableScorer& model) {
  std::size_t best = 0;
  double best_score = model.score(embeddings, 0);
  for (std::size_t c = 1; c < model.classes(); ++c) {
    const double s = model.score(embeddings, c);
    if (s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

std::string model_to_json(const ToyModel& model) {
  auto rows = [](const Matrix& m) {
    json out = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      out.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return out;
  };
  json doc{{"format", kCheckpointFormat},
           {"seed", model.seed()},
           {"d", model.dim()},
           {"K", model.classes()},
           {"activation", to_string(model.activation())},
           {"vocab", model.vocab()},
           {"embedding", rows(model.embedding_matrix())},
           {"output_weights", rows(model.output_weights())},
           {"output_bias", model.output_bias()}};
  return doc.dump(1);
}

ToyModel model_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) {
      throw DataError("unsupported checkpoint format " + doc.at("format").dump());
    }
    const auto d = doc.at("d").get<std::size_t>();
    const auto k = doc.at("K").get<std::size_t>();
    const auto activation = parse_activation(doc.at("activation").get<std::string>());
    if (!activation) throw DataError("unknown activation " + doc.at("activation").dump());
    auto vocab = doc.at("vocab").get<std::vector<std::string>>();
    auto read_rows = [](const json& arr, std::size_t rows, std::size_t cols, const char* name) {
      if (!arr.is_array() || arr.size() != rows) {
        throw DataError(std::string(name) + " must have " + std::to_string(rows) + " rows");
      }
      Matrix m(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto row = arr[r].get<std::vector<double>>();
        if (row.size() != cols) {
          throw DataError(std::string(name) + " row " + std::to_string(r) + " must have " +
                          std::to_string(cols) + " entries");
        }
        std::copy(row.begin(), row.end(), m.row(r).begin());
      }
      return m;
    };
    Matrix embedding = read_rows(doc.at("embedding"), vocab.size(), d, "embedding");
    Matrix weights = read_rows(doc.at("output_weights"), d, k, "output_weights");
    auto bias = doc.at("output_bias").get<std::vector<double>>();
    if (bias.size() != k) throw DataError("output_bias must have K entries");
    return ToyModel(std::move(vocab), std::move(embedding), std::move(weights), std::move(bias),
                    *activation, doc.at("seed").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint schema error: ") + e.what());
  }
}

void save_model(const ToyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << model_to_json(model) << '\n';
}

ToyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return model_from_json(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace attrcons
