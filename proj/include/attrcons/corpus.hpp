#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace attrcons {

enum class TokenKind { content, separator, padding };

std::string_view to_string(TokenKind kind);
std::optional<TokenKind> parse_token_kind(std::string_view text);

struct Token {
  std::string surface;
  std::size_t index = 0;
  TokenKind kind = TokenKind::content;

  friend bool operator==(const Token&, const Token&) = default;
};

/// Surface used for the separator tokens the tokenizer inserts.
inline constexpr std::string_view kSeparatorSurface = "[SEP]";

struct Sentence {
  std::string language;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  std::size_t content_count() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Classification index, or an answer span (start, end) for extractive QA.
using TaskLabel = std::variant<long long, std::pair<long long, long long>>;

struct ParallelPair {
  std::string id;
  Sentence source;
  Sentence target;
  std::optional<TaskLabel> label;
  // Same-language pairs are only legal when this is set.
  bool identity = false;

  friend bool operator==(const ParallelPair&, const ParallelPair&) = default;
};

enum class TokenizerPolicy { whitespace, whitespace_lowercase };

std::string_view to_string(TokenizerPolicy policy);
std::optional<TokenizerPolicy> parse_tokenizer_policy(std::string_view text);

/// True for two-letter ISO-639-1 codes.
bool is_language_code(std::string_view code);

/// Splits on Unicode whitespace and wraps the result in two separator tokens.
/// Throws DataError when no content token remains.
Sentence tokenize(std::string_view text, std::string_view language, TokenizerPolicy policy);

/// Lowercases ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic letters; other
/// code points pass through unchanged. Invalid UTF-8 bytes are copied verbatim.
std::string lowercase_utf8(std::string_view text);

/// Builds a sentence from explicit tokens, checking the Sentence invariants.
Sentence make_sentence(std::string_view language, std::vector<Token> tokens);

/// Parses one JSONL record. `line_number` is 1-based and only used in messages.
ParallelPair parse_pair(const nlohmann::json& record, std::size_t line_number,
                        TokenizerPolicy policy);

/// Streams records in file order. Blank lines are skipped.
void for_each_pair(std::istream& in, TokenizerPolicy policy,
                   const std::function<void(ParallelPair&&)>& visit);

std::vector<ParallelPair> load_corpus(std::istream& in,
                                      TokenizerPolicy policy = TokenizerPolicy::whitespace);
std::vector<ParallelPair> load_corpus(const std::filesystem::path& path,
                                      TokenizerPolicy policy = TokenizerPolicy::whitespace);

/// Interchange form of a pair. Sentences are always written pre-tokenized so the
/// record reloads to an identical pair under any policy.
nlohmann::json to_json(const ParallelPair& pair);

void write_corpus(std::ostream& out, const std::vector<ParallelPair>& pairs);

}  // namespace attrcons
