#include "attrcons/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>

#include "attrcons/errors.hpp"

namespace attrcons {
namespace {

using nlohmann::json;

// ISO-639-1, sorted for binary search.
constexpr std::array<std::string_view, 184> kLanguageCodes = {
    "aa", "ab", "ae", "af", "ak", "am", "an", "ar", "as", "av", "ay", "az", "ba", "be", "bg",
    "bh", "bi", "bm", "bn", "bo", "br", "bs", "ca", "ce", "ch", "co", "cr", "cs", "cu", "cv",
    "cy", "da", "de", "dv", "dz", "ee", "el", "en", "eo", "es", "et", "eu", "fa", "ff", "fi",
    "fj", "fo", "fr", "fy", "ga", "gd", "gl", "gn", "gu", "gv", "ha", "he", "hi", "ho", "hr",
    "ht", "hu", "hy", "hz", "ia", "id", "ie", "ig", "ii", "ik", "io", "is", "it", "iu", "ja",
    "jv", "ka", "kg", "ki", "kj", "kk", "kl", "km", "kn", "ko", "kr", "ks", "ku", "kv", "kw",
    "ky", "la", "lb", "lg", "li", "ln", "lo", "lt", "lu", "lv", "mg", "mh", "mi", "mk", "ml",
    "mn", "mr", "ms", "mt", "my", "na", "nb", "nd", "ne", "ng", "nl", "nn", "no", "nr", "nv",
    "ny", "oc", "oj", "om", "or", "os", "pa", "pi", "pl", "ps", "pt", "qu", "rm", "rn", "ro",
    "ru", "rw", "sa", "sc", "sd", "se", "sg", "si", "sk", "sl", "sm", "sn", "so", "sq", "sr",
    "ss", "st", "su", "sv", "sw", "ta", "te", "tg", "th", "ti", "tk", "tl", "tn", "to", "tr",
    "ts", "tt", "tw", "ty", "ug", "uk", "ur", "uz", "ve", "vi", "vo", "wa", "wo", "xh", "yi",
    "yo", "za", "zh", "zu"};

// Decodes one UTF-8 code point at `pos`. Returns the byte length consumed, or 0 for an
// invalid sequence.
std::size_t decode_utf8(std::string_view text, std::size_t pos, char32_t& out) {
  const auto lead = static_cast<unsigned char>(text[pos]);
  std::size_t len = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    out = lead;
    return 1;
  } else if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    return 0;
  }
  if (pos + len > text.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[pos + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  out = cp;
  return len;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_unicode_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
         cp == 0x205F || cp == 0x3000;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return 'i';
    if (cp == 0x178) return 0xFF;
    const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
    const bool even_upper = (cp <= 0x137 && cp != 0x131) || (cp >= 0x14A && cp <= 0x177);
    if (odd_upper && (cp % 2 == 1)) return cp + 1;
    if (even_upper && (cp % 2 == 0)) return cp + 1;
    return cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp == 0x386) return 0x3AC;
  if (cp >= 0x388 && cp <= 0x38A) return cp + 0x25;
  if (cp == 0x38C) return 0x3CC;
  if (cp == 0x38E || cp == 0x38F) return cp + 0x3F;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = 0;
    std::size_t len = decode_utf8(text, pos, cp);
    if (len == 0) {
      current.push_back(text[pos]);
      ++pos;
      continue;
    }
    if (is_unicode_space(cp)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.append(text.substr(pos, len));
    }
    pos += len;
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

[[noreturn]] void schema_error(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

Sentence parse_side(const json& record, const char* side, std::size_t line, TokenizerPolicy policy) {
  if (!record.contains(side)) schema_error(line, std::string("missing field \"") + side + "\"");
  const json& obj = record.at(side);
  if (!obj.is_object()) schema_error(line, std::string("\"") + side + "\" must be an object");
  if (!obj.contains("lang") || !obj.at("lang").is_string()) {
    schema_error(line, std::string("missing string field \"") + side + ".lang\"");
  }
  const auto lang = obj.at("lang").get<std::string>();
  if (!is_language_code(lang)) {
    schema_error(line, std::string("unknown language code \"") + lang + "\" in " + side);
  }
  const bool has_text = obj.contains("text");
  const bool has_tokens = obj.contains("tokens");
  if (has_text == has_tokens) {
    schema_error(line, std::string(side) + " needs exactly one of \"text\" or \"tokens\"");
  }
  try {
    if (has_text) {
      if (!obj.at("text").is_string()) schema_error(line, std::string(side) + ".text must be a string");
      const auto text = obj.at("text").get<std::string>();
      if (split_whitespace(text).empty()) schema_error(line, std::string("empty text in ") + side);
      return tokenize(text, lang, policy);
    }
    const json& arr = obj.at("tokens");
    if (!arr.is_array()) schema_error(line, std::string(side) + ".tokens must be an array");
    std::vector<Token> tokens;
    tokens.reserve(arr.size());
    for (const json& item : arr) {
      Token tok;
      tok.index = tokens.size();
      if (item.is_string()) {
        tok.surface = item.get<std::string>();
      } else if (item.is_object() && item.contains("text") && item.at("text").is_string()) {
        tok.surface = item.at("text").get<std::string>();
        if (item.contains("kind")) {
          const auto kind = item.at("kind").is_string()
                                ? parse_token_kind(item.at("kind").get<std::string>())
                                : std::nullopt;
          if (!kind) schema_error(line, std::string("bad token kind in ") + side + ".tokens");
          tok.kind = *kind;
        }
      } else {
        schema_error(line, std::string(side) + ".tokens entries must be strings or {text, kind}");
      }
      tokens.push_back(std::move(tok));
    }
    return make_sentence(lang, std::move(tokens));
  } catch (const DataError& e) {
    const std::string msg = e.what();
    if (msg.rfind("line ", 0) == 0) throw;
    schema_error(line, std::string(side) + ": " + msg);
  }
}

}  // namespace

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::content: return "content";
    case TokenKind::separator: return "separator";
    case TokenKind::padding: return "padding";
  }
  return "content";
}

std::optional<TokenKind> parse_token_kind(std::string_view text) {
  if (text == "content") return TokenKind::content;
  if (text == "separator") return TokenKind::separator;
  if (text == "padding") return TokenKind::padding;
  return std::nullopt;
}

std::string_view to_string(TokenizerPolicy policy) {
  return policy == TokenizerPolicy::whitespace ? "whitespace" : "whitespace+lowercase";
}

std::optional<TokenizerPolicy> parse_tokenizer_policy(std::string_view text) {
  if (text == "whitespace") return TokenizerPolicy::whitespace;
  if (text == "whitespace+lowercase" || text == "whitespace_lowercase") {
    return TokenizerPolicy::whitespace_lowercase;
  }
  return std::nullopt;
}

bool is_language_code(std::string_view code) {
  return std::binary_search(kLanguageCodes.begin(), kLanguageCodes.end(), code);
}

std::size_t Sentence::content_count() const {
  return static_cast<std::size_t>(std::count_if(
      tokens.begin(), tokens.end(), [](const Token& t) { return t.kind == TokenKind::content; }));
}

std::string lowercase_utf8(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = 0;
    const std::size_t len = decode_utf8(text, pos, cp);
    if (len == 0) {
      out.push_back(text[pos++]);
      continue;
    }
    encode_utf8(to_lower(cp), out);
    pos += len;
  }
  return out;
}

Sentence make_sentence(std::string_view language, std::vector<Token> tokens) {
  if (!is_language_code(language)) {
    throw DataError("unknown language code \"" + std::string(language) + "\"");
  }
  bool has_content = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.index != i) throw DataError("token indices must be contiguous from 0");
    if (t.kind != TokenKind::padding && t.surface.empty()) {
      throw DataError("empty surface for token " + std::to_string(i));
    }
    has_content = has_content || t.kind == TokenKind::content;
  }
  if (!has_content) throw DataError("sentence has no content tokens");
  return Sentence{std::string(language), std::move(tokens)};
}

Sentence tokenize(std::string_view text, std::string_view language, TokenizerPolicy policy) {
  auto words = split_whitespace(text);
  if (words.empty()) throw DataError("no content tokens in text");
  std::vector<Token> tokens;
  tokens.reserve(words.size() + 2);
  tokens.push_back({std::string(kSeparatorSurface), 0, TokenKind::separator});
  for (auto& w : words) {
    std::string surface = policy == TokenizerPolicy::whitespace_lowercase ? lowercase_utf8(w) : std::move(w);
    tokens.push_back({std::move(surface), tokens.size(), TokenKind::content});
  }
  tokens.push_back({std::string(kSeparatorSurface), tokens.size(), TokenKind::separator});
  return make_sentence(language, std::move(tokens));
}

ParallelPair parse_pair(const json& record, std::size_t line, TokenizerPolicy policy) {
  if (!record.is_object()) schema_error(line, "record must be a JSON object");
  if (!record.contains("id")) schema_error(line, "missing field \"id\"");
  if (!record.at("id").is_string() || record.at("id").get_ref<const std::string&>().empty()) {
    schema_error(line, "\"id\" must be a non-empty string");
  }
  ParallelPair pair;
  pair.id = record.at("id").get<std::string>();
  pair.source = parse_side(record, "source", line, policy);
  pair.target = parse_side(record, "target", line, policy);
  if (record.contains("identity")) {
    if (!record.at("identity").is_boolean()) schema_error(line, "\"identity\" must be a boolean");
    pair.identity = record.at("identity").get<bool>();
  }
  if (pair.source.language == pair.target.language && !pair.identity) {
    schema_error(line, "source and target share language \"" + pair.source.language +
                           "\" but the record is not flagged \"identity\": true");
  }
  if (record.contains("label") && !record.at("label").is_null()) {
    const json& label = record.at("label");
    if (label.is_number_integer()) {
      pair.label = label.get<long long>();
    } else if (label.is_array() && label.size() == 2 && label[0].is_number_integer() &&
               label[1].is_number_integer()) {
      pair.label = std::pair{label[0].get<long long>(), label[1].get<long long>()};
    } else {
      schema_error(line, "\"label\" must be an integer or a [start, end] integer pair");
    }
  }
  return pair;
}

void for_each_pair(std::istream& in, TokenizerPolicy policy,
                   const std::function<void(ParallelPair&&)>& visit) {
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      schema_error(line_number, std::string("invalid JSON: ") + e.what());
    }
    visit(parse_pair(record, line_number, policy));
  }
  if (in.bad()) throw DataError("read failure after line " + std::to_string(line_number));
}

std::vector<ParallelPair> load_corpus(std::istream& in, TokenizerPolicy policy) {
  std::vector<ParallelPair> pairs;
  for_each_pair(in, policy, [&](ParallelPair&& p) { pairs.push_back(std::move(p)); });
  return pairs;
}

std::vector<ParallelPair> load_corpus(const std::filesystem::path& path, TokenizerPolicy policy) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  try {
    return load_corpus(in, policy);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json to_json(const ParallelPair& pair) {
  auto side = [](const Sentence& s) {
    json tokens = json::array();
    for (const Token& t : s.tokens) {
      if (t.kind == TokenKind::content) {
        tokens.push_back(t.surface);
      } else {
        tokens.push_back({{"text", t.surface}, {"kind", to_string(t.kind)}});
      }
    }
    return json{{"lang", s.language}, {"tokens", std::move(tokens)}};
  };
  json record{{"id", pair.id}, {"source", side(pair.source)}, {"target", side(pair.target)}};
  if (pair.identity) record["identity"] = true;
  if (pair.label) {
    if (const auto* cls = std::get_if<long long>(&*pair.label)) {
      record["label"] = *cls;
    } else {
      const auto& span = std::get<std::pair<long long, long long>>(*pair.label);
      record["label"] = json::array({span.first, span.second});
    }
  }
  return record;
}

void write_corpus(std::ostream& out, const std::vector<ParallelPair>& pairs) {
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

}  // namespace attrcons
