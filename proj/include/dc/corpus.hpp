#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dc/tensor.hpp"
#include "dc/tokens.hpp"

namespace dc {

// ---------------------------------------------------------------------------
// Tokenization

inline constexpr std::string_view kNewlineToken = "<nl>";

// Lowercased word tokens; every punctuation character is its own token and
// each line break becomes kNewlineToken. Words are runs of ASCII letters,
// digits, apostrophes and non-ASCII bytes.
std::vector<std::string> tokenize(std::string_view text);
// Inverse of tokenize on normalized text: space-separated, newline tokens
// rendered as line breaks.
std::string detokenize(std::span<const std::string> tokens);

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
public:
    // Reserved tokens only.
    Vocabulary();

    // Tokens seen at least min_count times get ids after the reserved ones,
    // ordered by descending frequency, ties broken lexicographically.
    static Vocabulary build(std::span<const std::vector<std::string>> documents, std::size_t min_count);

    [[nodiscard]] std::size_t size() const { return tokens_.size(); }
    [[nodiscard]] TokenId id(std::string_view token) const;   // UNK when absent
    [[nodiscard]] bool contains(std::string_view token) const;
    [[nodiscard]] const std::string& token(TokenId id) const;
    [[nodiscard]] std::size_t count(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }

    [[nodiscard]] std::vector<TokenId> encode(std::span<const std::string> tokens) const;
    [[nodiscard]] std::vector<std::string> decode(std::span<const TokenId> ids) const;

    // FNV-1a over the token<TAB>id lines; identifies the id assignment.
    [[nodiscard]] std::uint64_t fingerprint() const;

    // token<TAB>id<TAB>count, one line per id in id order.
    void write_tsv(std::ostream& out) const;
    static Vocabulary read_tsv(std::istream& in);

    // Word vectors: "token v1 ... vD" per line. Rows for tokens missing from
    // the file (and reserved rows) are left at zero; the returned tensor is
    // [size(), embed_dim]. Returns the number of rows filled.
    std::size_t load_embeddings(const std::filesystem::path& path, std::size_t embed_dim);
    [[nodiscard]] const std::optional<Tensor>& embeddings() const { return embeddings_; }
    [[nodiscard]] const std::vector<bool>& embedding_rows_loaded() const { return loaded_rows_; }

private:
    void add(std::string token, std::size_t count);

    std::vector<std::string> tokens_;
    std::vector<std::size_t> counts_;
    std::map<std::string, TokenId, std::less<>> index_;
    std::optional<Tensor> embeddings_;
    std::vector<bool> loaded_rows_;
};

// ---------------------------------------------------------------------------
// Artifacts and datasets

enum class Split { train, valid, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Artifact {
    std::string id;
    std::string raw_text;
    std::vector<TokenId> tokens;
    std::optional<std::size_t> class_label;
    std::string era_tag;
    std::uint64_t vocab_fingerprint = 0;   // 0 = not yet encoded
};

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
    void validate() const;
};

// Pure function of (artifact id, seed, ratios).
Split assign_split(std::string_view artifact_id, std::uint64_t seed, const SplitRatios& ratios);

struct ContextDataset {
    std::vector<Artifact> artifacts;
    std::vector<Split> splits;                // parallel to artifacts
    std::vector<std::string> class_names;     // label id -> name

    [[nodiscard]] std::size_t num_classes() const { return class_names.size(); }
    [[nodiscard]] std::vector<const Artifact*> split(Split s) const;
    // Splits disjoint by construction; checks every class occurs in train.
    void validate() const;
};

// One manifest record: a line of JSON with keys "id", "path", "class", "era".
// "class" and "era" may be omitted; "path" is relative to the corpus dir.
struct ManifestEntry {
    std::string id;
    std::string path;
    std::string class_name;
    std::string era;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

} // namespace dc
