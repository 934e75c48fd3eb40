#include "attrcons/attribution.hpp"

#include <cmath>
#include <numeric>

#include "attrcons/errors.hpp"

namespace attrcons {
namespace {

using nlohmann::json;

void require(bool ok, const std::string& what) {
  if (!ok) throw DataError(what);
}

}  // namespace

std::string_view to_string(QuadratureRule rule) {
  return rule == QuadratureRule::trapezoid ? "trapezoid" : "left_riemann";
}
std::string_view to_string(NormalizationMode) { return "abs_l1"; }
std::string_view to_string(Side side) { return side == Side::source ? "source" : "target"; }
std::string_view to_string(Head head) {
  switch (head) {
    case Head::classification: return "classification";
    case Head::span_start: return "span_start";
    case Head::span_end: return "span_end";
  }
  return "classification";
}

std::optional<QuadratureRule> parse_quadrature_rule(std::string_view text) {
  if (text == "trapezoid") return QuadratureRule::trapezoid;
  if (text == "left_riemann") return QuadratureRule::left_riemann;
  return std::nullopt;
}
std::optional<NormalizationMode> parse_normalization_mode(std::string_view text) {
  if (text == "abs_l1") return NormalizationMode::abs_l1;
  return std::nullopt;
}
std::optional<Side> parse_side(std::string_view text) {
  if (text == "source") return Side::source;
  if (text == "target") return Side::target;
  return std::nullopt;
}
std::optional<Head> parse_head(std::string_view text) {
  if (text == "classification") return Head::classification;
  if (text == "span_start") return Head::span_start;
  if (text == "span_end") return Head::span_end;
  return std::nullopt;
}

Baseline make_baseline(const Sentence& sentence, const Matrix& embeddings,
                       std::span<const double> padding_row) {
  require(embeddings.rows() == sentence.size(), "embedding rows do not match sentence length");
  require(padding_row.size() == embeddings.cols(), "padding row has the wrong dimension");
  Baseline base{Matrix(embeddings.rows(), embeddings.cols())};
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto src = sentence.tokens[i].kind == TokenKind::separator ? embeddings.row(i) : padding_row;
    std::copy(src.begin(), src.end(), base.embeddings.row(i).begin());
  }
  return base;
}

Baseline make_baseline(const Sentence& sentence, const ToyModel& model) {
  return make_baseline(sentence, embed(sentence, model), model.padding_embedding());
}

Matrix integrated_gradients(const Matrix& x, const Matrix& x_prime,
                            const DifferentiableScorer& model, std::size_t cls, int steps,
                            QuadratureRule rule) {
  require(x.same_shape(x_prime), "input and baseline shapes differ");
  require(steps >= 1, "quadrature steps must be >= 1");

  const auto m = static_cast<std::size_t>(steps);
  const double h = 1.0 / static_cast<double>(m);
  Matrix delta(x.rows(), x.cols());
  for (std::size_t n = 0; n < delta.values().size(); ++n) {
    delta.values()[n] = x.values()[n] - x_prime.values()[n];
  }

  Matrix avg(x.rows(), x.cols());
  Matrix point(x.rows(), x.cols());
  const std::size_t last = rule == QuadratureRule::trapezoid ? m : m - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    const double alpha = static_cast<double>(k) * h;
    for (std::size_t n = 0; n < point.values().size(); ++n) {
      point.values()[n] = x_prime.values()[n] + alpha * delta.values()[n];
    }
    double weight = h;
    if (rule == QuadratureRule::trapezoid && (k == 0 || k == m)) weight = 0.5 * h;
    const Matrix g = model.gradient(point, cls);
    for (std::size_t n = 0; n < avg.values().size(); ++n) avg.values()[n] += weight * g.values()[n];
  }

  for (std::size_t n = 0; n < avg.values().size(); ++n) avg.values()[n] *= delta.values()[n];
  return avg;
}

std::vector<double> aggregate_attributions(const Matrix& lig) {
  std::vector<double> out(lig.rows(), 0.0);
  for (std::size_t i = 0; i < lig.rows(); ++i) {
    for (double v : lig.row(i)) out[i] += v;
  }
  return out;
}

std::vector<double> normalize_attributions(std::span<const double> raw,
                                           const std::vector<bool>& eligible, NormalizationMode) {
  require(!raw.empty(), "cannot normalize an empty attribution vector");
  require(raw.size() == eligible.size(), "eligibility mask length mismatch");
  std::vector<double> out(raw.size(), 0.0);
  double total = 0.0;
  std::size_t eligible_count = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!eligible[i]) continue;
    require(std::isfinite(raw[i]), "non-finite attribution at position " + std::to_string(i));
    total += std::abs(raw[i]);
    ++eligible_count;
  }
  require(eligible_count > 0, "no eligible positions to normalize over");
  if (total == 0.0) {
    const double u = 1.0 / static_cast<double>(eligible_count);
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = eligible[i] ? u : 0.0;
    return out;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (eligible[i]) out[i] = std::abs(raw[i]) / total;
  }
  return out;
}

std::vector<double> normalize_attributions(std::span<const double> raw, NormalizationMode mode) {
  return normalize_attributions(raw, std::vector<bool>(raw.size(), true), mode);
}

std::vector<double> normalize_attributions(std::span<const double> raw, const Sentence& sentence,
                                           NormalizationMode mode) {
  require(raw.size() == sentence.size(), "raw attributions do not match sentence length");
  std::vector<bool> mask(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    mask[i] = sentence.tokens[i].kind == TokenKind::content;
  }
  return normalize_attributions(raw, mask, mode);
}

double completeness_check(const Matrix& lig, const DifferentiableScorer& model, std::size_t cls,
                          const Matrix& x, const Matrix& x_prime) {
  double total = 0.0;
  for (double v : lig.values()) total += v;
  return std::abs(total - (model.score(x, cls) - model.score(x_prime, cls)));
}

AttributionVector attribute_sentence(const Sentence& sentence, const ToyModel& model,
                                     const AttributionOptions& options) {
  const Matrix x = embed(sentence, model);
  const Baseline base = make_baseline(sentence, x, model.padding_embedding());
  const std::size_t cls = options.forced_class ? *options.forced_class : predict(x, model);
  const Matrix lig = integrated_gradients(x, base.embeddings, model, cls, options.steps, options.rule);

  AttributionVector out;
  out.sentence = sentence;
  out.raw = aggregate_attributions(lig);
  out.normalized = normalize_attributions(out.raw, sentence, options.normalization);
  out.quadrature_steps = options.steps;
  out.rule = options.rule;
  out.target_class = cls;
  out.convergence_delta = completeness_check(lig, model, cls, x, base.embeddings);
  return out;
}

std::pair<AttributionVector, AttributionVector> attribute_pair(const ParallelPair& pair,
                                                               const ToyModel& model,
                                                               const AttributionOptions& options) {
  auto src = attribute_sentence(pair.source, model, options);
  auto tgt = attribute_sentence(pair.target, model, options);
  src.pair_id = tgt.pair_id = pair.id;
  src.side = Side::source;
  tgt.side = Side::target;
  return {std::move(src), std::move(tgt)};
}

json to_json(const AttributionVector& attr) {
  json tokens = json::array();
  json kinds = json::array();
  for (const Token& t : attr.sentence.tokens) {
    tokens.push_back(t.surface);
    kinds.push_back(to_string(t.kind));
  }
  json record{{"pair_id", attr.pair_id},
              {"side", to_string(attr.side)},
              {"head", to_string(attr.head)},
              {"language", attr.sentence.language},
              {"tokens", std::move(tokens)},
              {"kinds", std::move(kinds)},
              {"raw", attr.raw},
              {"normalized", attr.normalized},
              {"steps", attr.quadrature_steps},
              {"rule", to_string(attr.rule)},
              {"convergence_delta", attr.convergence_delta}};
  if (attr.target_class) record["class"] = *attr.target_class;
  return record;
}

AttributionVector attribution_from_json(const json& record) {
  require(record.is_object(), "record must be a JSON object");
  auto field = [&](const char* name) -> const json& {
    require(record.contains(name), std::string("missing field \"") + name + "\"");
    return record.at(name);
  };
  auto string_field = [&](const char* name) {
    const json& v = field(name);
    require(v.is_string(), std::string("\"") + name + "\" must be a string");
    return v.get<std::string>();
  };
  auto number_array = [&](const char* name) {
    const json& v = field(name);
    require(v.is_array(), std::string("\"") + name + "\" must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& x : v) {
      require(x.is_number(), std::string("\"") + name + "\" must contain only numbers");
      out.push_back(x.get<double>());
      require(std::isfinite(out.back()), std::string("\"") + name + "\" must be finite");
    }
    return out;
  };

  AttributionVector attr;
  attr.pair_id = string_field("pair_id");
  require(!attr.pair_id.empty(), "\"pair_id\" must be non-empty");
  const auto side = parse_side(string_field("side"));
  require(side.has_value(), "\"side\" must be \"source\" or \"target\"");
  attr.side = *side;
  if (record.contains("head")) {
    const auto head = parse_head(string_field("head"));
    require(head.has_value(), "\"head\" must be classification, span_start or span_end");
    attr.head = *head;
  }
  const std::string language = string_field("language");

  const json& tokens = field("tokens");
  const json& kinds = field("kinds");
  require(tokens.is_array() && kinds.is_array(), "\"tokens\" and \"kinds\" must be arrays");
  require(tokens.size() == kinds.size(), "\"tokens\" and \"kinds\" differ in length");
  std::vector<Token> toks;
  toks.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    require(tokens[i].is_string() && kinds[i].is_string(), "token entries must be strings");
    const auto kind = parse_token_kind(kinds[i].get<std::string>());
    require(kind.has_value(), "unknown token kind " + kinds[i].dump());
    toks.push_back({tokens[i].get<std::string>(), i, *kind});
  }
  attr.sentence = make_sentence(language, std::move(toks));

  attr.raw = number_array("raw");
  attr.normalized = number_array("normalized");
  require(attr.raw.size() == attr.sentence.size(), "\"raw\" length differs from token count");
  require(attr.normalized.size() == attr.sentence.size(),
          "\"normalized\" length differs from token count");
  double sum = 0.0;
  for (double v : attr.normalized) {
    require(v >= 0.0, "\"normalized\" has a negative entry");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= kDistributionTolerance, "\"normalized\" does not sum to 1");

  const json& steps = field("steps");
  require(steps.is_number_integer() && steps.get<long long>() >= 1, "\"steps\" must be an integer >= 1");
  attr.quadrature_steps = steps.get<int>();
  const auto rule = parse_quadrature_rule(string_field("rule"));
  require(rule.has_value(), "\"rule\" must be left_riemann or trapezoid");
  attr.rule = *rule;
  const json& delta = field("convergence_delta");
  require(delta.is_number() && delta.get<double>() >= 0.0,
          "\"convergence_delta\" must be a non-negative number");
  attr.convergence_delta = delta.get<double>();
  if (record.contains("class") && !record.at("class").is_null()) {
    require(record.at("class").is_number_unsigned(), "\"class\" must be a non-negative integer");
    attr.target_class = record.at("class").get<std::size_t>();
  }
  return attr;
}

}  // namespace attrcons
