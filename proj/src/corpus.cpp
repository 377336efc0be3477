#include "dc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "dc/error.hpp"
#include "dc/rng.hpp"

namespace dc {

namespace {

bool is_word_byte(unsigned char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '\'' || c >= 0x80;
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

char lower(char c)
{
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string_view trim(std::string_view s)
{
    auto ws = [](unsigned char c) { return is_space(c) || c == '\n'; };
    while (!s.empty() && ws(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

constexpr std::string_view kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

} // namespace

std::vector<std::string> tokenize(std::string_view text)
{
    text = trim(text);
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.push_back(std::move(word));
            word.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            word.push_back(lower(ch));
        } else if (c == '\n') {
            flush();
            out.emplace_back(kNewlineToken);
        } else if (is_space(c)) {
            flush();
        } else {
            flush();
            out.emplace_back(1, ch);
        }
    }
    flush();
    return out;
}

std::string detokenize(std::span<const std::string> tokens)
{
    std::string out;
    bool prev_newline = true;
    for (const auto& t : tokens) {
        if (t == kNewlineToken) {
            out.push_back('\n');
            prev_newline = true;
            continue;
        }
        if (!prev_newline) {
            out.push_back(' ');
        }
        out += t;
        prev_newline = false;
    }
    return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary()
{
    for (auto r : kReserved) {
        add(std::string(r), 0);
    }
}

void Vocabulary::add(std::string token, std::size_t count)
{
    const auto id = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(token, id).second) {
        throw InputError(fmt::format("vocabulary: duplicate token '{}'", token));
    }
    tokens_.push_back(std::move(token));
    counts_.push_back(count);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> documents, std::size_t min_count)
{
    if (min_count < 1) {
        throw InputError("build_vocab: min_count must be at least 1");
    }
    if (documents.empty()) {
        throw InputError("build_vocab: empty dataset");
    }
    std::map<std::string, std::size_t, std::less<>> freq;
    for (const auto& doc : documents) {
        for (const auto& t : doc) {
            ++freq[t];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, n] : freq) {
        if (n >= min_count) {
            ranked.emplace_back(tok, n);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (auto& [tok, n] : ranked) {
        if (std::find(std::begin(kReserved), std::end(kReserved), tok) != std::end(kReserved)) {
            continue;
        }
        v.add(tok, n);
    }
    return v;
}

TokenId Vocabulary::id(std::string_view token) const
{
    auto it = index_.find(token);
    return it == index_.end() ? token::unk : it->second;
}

bool Vocabulary::contains(std::string_view token) const
{
    return index_.find(token) != index_.end();
}

const std::string& Vocabulary::token(TokenId id) const
{
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw InputError(fmt::format("vocabulary: id {} out of range [0, {})", id, tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const
{
    std::vector<TokenId> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        out.push_back(id(t));
    }
    return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const
{
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (auto i : ids) {
        out.push_back(token(i));
    }
    return out;
}

std::uint64_t Vocabulary::fingerprint() const
{
    std::uint64_t h = fnv1a64("");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        h = fnv1a64(fmt::format("{}\t{}\n", tokens_[i], i), h);
    }
    return h;
}

void Vocabulary::write_tsv(std::ostream& out) const
{
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        out << tokens_[i] << '\t' << i << '\t' << counts_[i] << '\n';
    }
}

Vocabulary Vocabulary::read_tsv(std::istream& in)
{
    Vocabulary v;
    v.tokens_.clear();
    v.counts_.clear();
    v.index_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::istringstream fields(line);
        std::string tok, id_s, count_s;
        if (!std::getline(fields, tok, '\t') || !std::getline(fields, id_s, '\t') || !std::getline(fields, count_s)) {
            throw InputError(fmt::format("vocabulary line {}: expected token<TAB>id<TAB>count", lineno));
        }
        std::size_t id = 0, count = 0;
        try {
            id = std::stoul(id_s);
            count = std::stoul(count_s);
        } catch (const std::exception&) {
            throw InputError(fmt::format("vocabulary line {}: malformed number", lineno));
        }
        if (id != v.tokens_.size()) {
            throw InputError(fmt::format("vocabulary line {}: ids must be dense and ordered, got {}", lineno, id));
        }
        v.add(tok, count);
    }
    for (std::size_t i = 0; i < std::size(kReserved); ++i) {
        if (v.tokens_.size() <= i || v.tokens_[i] != kReserved[i]) {
            throw InputError("vocabulary: reserved tokens missing or out of place");
        }
    }
    return v;
}

std::size_t Vocabulary::load_embeddings(const std::filesystem::path& path, std::size_t embed_dim)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError(fmt::format("cannot open word-vector file {}", path.string()));
    }
    Tensor table({size(), embed_dim});
    std::vector<bool> loaded(size(), false);
    std::string line;
    std::size_t lineno = 0, filled = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream fields(line);
        std::string tok;
        if (!(fields >> tok)) {
            continue;
        }
        std::vector<double> vec;
        double x;
        while (fields >> x) {
            vec.push_back(x);
        }
        if (vec.size() != embed_dim) {
            throw InputError(fmt::format("{}:{}: expected {} values for '{}', got {}", path.string(), lineno, embed_dim,
                                         tok, vec.size()));
        }
        auto it = index_.find(tok);
        if (it == index_.end() || token::is_reserved(it->second)) {
            continue;
        }
        const auto row = static_cast<std::size_t>(it->second);
        std::copy(vec.begin(), vec.end(), table.values().begin() + static_cast<std::ptrdiff_t>(row * embed_dim));
        if (!loaded[row]) {
            ++filled;
        }
        loaded[row] = true;
    }
    embeddings_ = std::move(table);
    loaded_rows_ = std::move(loaded);
    return filled;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Split s)
{
    switch (s) {
    case Split::train:
        return "train";
    case Split::valid:
        return "valid";
    case Split::test:
        return "test";
    }
    return "?";
}

Split parse_split(std::string_view s)
{
    if (s == "train") {
        return Split::train;
    }
    if (s == "valid") {
        return Split::valid;
    }
    if (s == "test") {
        return Split::test;
    }
    throw InputError(fmt::format("unknown split '{}'", s));
}

void SplitRatios::validate() const
{
    if (train <= 0.0 || valid <= 0.0 || test < 0.0 || std::abs(train + valid + test - 1.0) > 1e-9) {
        throw InputError(fmt::format("split ratios must be positive and sum to 1, got {}/{}/{}", train, valid, test));
    }
}

Split assign_split(std::string_view artifact_id, std::uint64_t seed, const SplitRatios& ratios)
{
    const std::uint64_t h = splitmix64(fnv1a64(artifact_id) ^ splitmix64(seed));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    if (u < ratios.train) {
        return Split::train;
    }
    if (u < ratios.train + ratios.valid) {
        return Split::valid;
    }
    return Split::test;
}

std::vector<const Artifact*> ContextDataset::split(Split s) const
{
    std::vector<const Artifact*> out;
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
        if (splits[i] == s) {
            out.push_back(&artifacts[i]);
        }
    }
    return out;
}

void ContextDataset::validate() const
{
    if (splits.size() != artifacts.size()) {
        throw InputError("dataset: split assignment does not cover every artifact");
    }
    std::vector<bool> seen(num_classes(), false);
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
        const auto& label = artifacts[i].class_label;
        if (label && *label >= num_classes()) {
            throw InputError(fmt::format("artifact '{}': class label {} >= {}", artifacts[i].id, *label, num_classes()));
        }
        if (label && splits[i] == Split::train) {
            seen[*label] = true;
        }
    }
    for (std::size_t c = 0; c < seen.size(); ++c) {
        if (!seen[c]) {
            throw InputError(fmt::format("dataset: class '{}' has no training artifact", class_names[c]));
        }
    }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError(fmt::format("cannot open manifest {}", path.string()));
    }
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.id = j.at("id").get<std::string>();
            e.path = j.at("path").get<std::string>();
            e.class_name = j.value("class", std::string{});
            e.era = j.value("era", std::string{});
            if (e.id.empty()) {
                throw InputError("empty id");
            }
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw InputError(fmt::format("{}:{}: malformed manifest record ({})", path.string(), lineno, ex.what()));
        } catch (const InputError& ex) {
            throw InputError(fmt::format("{}:{}: {}", path.string(), lineno, ex.what()));
        }
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw InputError(fmt::format("cannot write manifest {}", path.string()));
    }
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["path"] = e.path;
        j["class"] = e.class_name;
        j["era"] = e.era;
        out << j.dump() << '\n';
    }
}

} // namespace dc
