#include "kprune/core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

namespace kprune {

namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

std::string offset_suffix(std::optional<std::uint64_t> offset) {
    if (!offset) return {};
    return " (byte offset " + std::to_string(*offset) + ")";
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xffu));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t at) {
    return static_cast<std::uint32_t>(in[at]) | (static_cast<std::uint32_t>(in[at + 1]) << 8) |
           (static_cast<std::uint32_t>(in[at + 2]) << 16) | (static_cast<std::uint32_t>(in[at + 3]) << 24);
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

struct Header {
    std::uint32_t a;
    std::uint32_t b;
};

// Validates magic, version and exact payload length for a 16-byte header
// followed by a*b four-byte words.
Header parse_header(const std::vector<unsigned char>& bytes, const char (&magic)[5], const std::string& what) {
    if (bytes.size() < kHeaderBytes)
        throw FormatError(what + " header truncated", bytes.size());
    if (!std::equal(magic, magic + 4, bytes.begin(), [](char m, unsigned char b) { return static_cast<unsigned char>(m) == b; }))
        throw FormatError(what + " bad magic, expected \"" + std::string(magic) + "\"", 0);
    if (auto v = get_u32(bytes, 4); v != kFormatVersion)
        throw FormatError(what + " unsupported version " + std::to_string(v), 4);
    Header h{get_u32(bytes, 8), get_u32(bytes, 12)};
    return h;
}

void require_payload(const std::vector<unsigned char>& bytes, std::uint64_t words, const std::string& what) {
    const std::uint64_t expected = kHeaderBytes + 4 * words;
    if (bytes.size() < expected)
        throw FormatError(what + " payload truncated: expected " + std::to_string(expected) + " bytes, found " +
                              std::to_string(bytes.size()),
                          bytes.size());
    if (bytes.size() > expected)
        throw FormatError(what + " has trailing bytes after payload", expected);
}

std::uint32_t checked_u32(std::size_t v, const std::string& what) {
    if (v > 0xffffffffu) throw ContractError(what + " exceeds the 32-bit format limit");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

FormatError::FormatError(const std::string& what, std::optional<std::uint64_t> offset)
    : Error("format", what + offset_suffix(offset)), offset_(offset) {}

// ---------------------------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::size_t n_samples, std::size_t n_dims, std::vector<float> values)
    : n_samples_(n_samples), n_dims_(n_dims), values_(std::move(values)) {
    if (n_samples_ == 0 || n_dims_ == 0) throw ContractError("embedding matrix must have at least one row and column");
    if (values_.size() != n_samples_ * n_dims_)
        throw ContractError("embedding value count " + std::to_string(values_.size()) + " does not match shape " +
                            std::to_string(n_samples_) + "x" + std::to_string(n_dims_));
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (!std::isfinite(values_[i]))
            throw ContractError("non-finite embedding value at row " + std::to_string(i / n_dims_) + ", column " +
                                std::to_string(i % n_dims_));
}

EmbeddingMatrix EmbeddingMatrix::from_matrix(const Matrix& m) {
    std::vector<float> v(m.data.size());
    std::transform(m.data.begin(), m.data.end(), v.begin(), [](double x) { return static_cast<float>(x); });
    return {m.rows, m.cols, std::move(v)};
}

Matrix EmbeddingMatrix::to_matrix() const {
    Matrix m(n_samples_, n_dims_);
    std::copy(values_.begin(), values_.end(), m.data.begin());
    return m;
}

LabelVector::LabelVector(std::vector<std::uint32_t> class_ids, std::uint32_t n_classes,
                         std::vector<std::string> class_names)
    : ids_(std::move(class_ids)), n_classes_(n_classes), names_(std::move(class_names)) {
    if (ids_.empty()) throw ContractError("label vector must have at least one sample");
    if (n_classes_ == 0) throw ContractError("label vector must declare at least one class");
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (ids_[i] >= n_classes_)
            throw ContractError("label " + std::to_string(ids_[i]) + " at sample " + std::to_string(i) +
                                " is not below n_classes=" + std::to_string(n_classes_));
    if (!names_.empty() && names_.size() != n_classes_)
        throw ContractError("class name table has " + std::to_string(names_.size()) + " entries for " +
                            std::to_string(n_classes_) + " classes");
}

void LabelVector::require_full_coverage() const {
    std::vector<bool> seen(n_classes_, false);
    for (auto id : ids_) seen[id] = true;
    for (std::uint32_t c = 0; c < n_classes_; ++c)
        if (!seen[c]) throw FormatError("class id " + std::to_string(c) + " never occurs in the dataset");
}

// ---------------------------------------------------------------------------

std::string to_string(PruneMethod m) {
    switch (m) {
        case PruneMethod::simple: return "simple";
        case PruneMethod::hard: return "hard";
        case PruneMethod::random: return "random";
        case PruneMethod::subsample: return "subsample";
        case PruneMethod::identity: return "identity";
    }
    return "?";
}

std::string to_string(PruneScope s) { return s == PruneScope::global ? "global" : "per_cluster"; }

PruneMethod parse_prune_method(const std::string& s) {
    for (auto m : {PruneMethod::simple, PruneMethod::hard, PruneMethod::random, PruneMethod::subsample,
                   PruneMethod::identity})
        if (to_string(m) == s) return m;
    throw ContractError("unknown pruning method \"" + s + "\"");
}

PruneScope parse_prune_scope(const std::string& s) {
    if (s == "global") return PruneScope::global;
    if (s == "per_cluster") return PruneScope::per_cluster;
    throw ContractError("unknown pruning scope \"" + s + "\"");
}

std::size_t round_count(double x) {
    if (!(x >= 0.0)) throw DomainError("cannot round negative count");
    // nearbyint honours the default FE_TONEAREST mode: ties go to even.
    return static_cast<std::size_t>(std::nearbyint(x));
}

std::size_t removed_count(double fraction, std::size_t n) {
    return round_count(fraction * static_cast<double>(n));
}

void KeepList::validate() const {
    if (!(fraction_removed >= 0.0 && fraction_removed <= 1.0))
        throw FormatError("fraction_removed " + std::to_string(fraction_removed) + " outside [0,1]");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= source_n)
            throw FormatError("keep-list index " + std::to_string(indices[i]) + " out of range for source_n=" +
                              std::to_string(source_n));
        if (i > 0 && indices[i] <= indices[i - 1])
            throw FormatError("keep-list indices not strictly increasing at position " + std::to_string(i));
    }
    const bool counted = method == PruneMethod::simple || method == PruneMethod::hard || method == PruneMethod::random;
    if (counted && scope == PruneScope::global) {
        const std::size_t expect = source_n - removed_count(fraction_removed, source_n);
        if (indices.size() != expect)
            throw FormatError("keep-list has " + std::to_string(indices.size()) + " indices, expected " +
                              std::to_string(expect) + " for " + to_string(method) + " pruning");
    }
}

KeepList KeepList::identity(std::size_t n, std::string parent_digest) {
    KeepList kl;
    kl.indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) kl.indices[i] = i;
    kl.source_n = n;
    kl.method = PruneMethod::identity;
    kl.parent_digest = std::move(parent_digest);
    return kl;
}

// ---------------------------------------------------------------------------

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const std::string what = "EMB1 file " + path.string() + ":";
    const auto [rows, cols] = parse_header(bytes, "EMB1", what);
    if (rows == 0 || cols == 0) throw FormatError(what + " zero-sized shape", 8);
    const std::uint64_t count = std::uint64_t{rows} * cols;
    require_payload(bytes, count, what);
    std::vector<float> values(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t at = kHeaderBytes + 4 * i;
        values[i] = std::bit_cast<float>(get_u32(bytes, at));
        if (!std::isfinite(values[i])) throw FormatError(what + " non-finite value", at);
    }
    return {rows, cols, std::move(values)};
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    std::vector<unsigned char> out;
    out.reserve(kHeaderBytes + 4 * m.values().size());
    out.insert(out.end(), {'E', 'M', 'B', '1'});
    put_u32(out, kFormatVersion);
    put_u32(out, checked_u32(m.n_samples(), "n_samples"));
    put_u32(out, checked_u32(m.n_dims(), "n_dims"));
    for (float v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    spill(out, path);
}

LabelVector read_labels(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const std::string what = "LBL1 file " + path.string() + ":";
    const auto [n, n_classes] = parse_header(bytes, "LBL1", what);
    if (n == 0) throw FormatError(what + " empty label array", 8);
    if (n_classes == 0) throw FormatError(what + " zero classes declared", 12);
    require_payload(bytes, n, what);
    std::vector<std::uint32_t> ids(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t at = kHeaderBytes + 4 * std::size_t{i};
        ids[i] = get_u32(bytes, at);
        if (ids[i] >= n_classes)
            throw FormatError(what + " class id " + std::to_string(ids[i]) + " >= n_classes " +
                                  std::to_string(n_classes),
                              at);
    }
    std::vector<std::string> names;
    auto names_path = path;
    names_path += ".names";
    if (std::filesystem::exists(names_path)) {
        std::ifstream in(names_path);
        for (std::string line; std::getline(in, line);) names.push_back(line);
        if (names.size() != n_classes)
            throw FormatError(what + " names sidecar has " + std::to_string(names.size()) + " lines for " +
                              std::to_string(n_classes) + " classes");
    }
    LabelVector labels(std::move(ids), n_classes, std::move(names));
    labels.require_full_coverage();
    return labels;
}

void write_labels(const LabelVector& labels, const std::filesystem::path& path) {
    labels.require_full_coverage();
    std::vector<unsigned char> out;
    out.reserve(kHeaderBytes + 4 * labels.n_samples());
    out.insert(out.end(), {'L', 'B', 'L', '1'});
    put_u32(out, kFormatVersion);
    put_u32(out, checked_u32(labels.n_samples(), "n_samples"));
    put_u32(out, labels.n_classes());
    for (auto id : labels.ids()) put_u32(out, id);
    spill(out, path);
    auto names_path = path;
    names_path += ".names";
    if (!labels.class_names().empty()) {
        std::ofstream names(names_path, std::ios::trunc);
        for (const auto& name : labels.class_names()) names << name << '\n';
        if (!names) throw IoError("write failed for " + names_path.string());
    } else {
        std::filesystem::remove(names_path);
    }
}

KeepList read_keeplist(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    KeepList kl;
    try {
        const auto doc = nlohmann::json::parse(in);
        kl.indices = doc.at("indices").get<std::vector<std::size_t>>();
        kl.source_n = doc.at("source_n").get<std::size_t>();
        kl.method = parse_prune_method(doc.at("method").get<std::string>());
        kl.fraction_removed = doc.at("fraction_removed").get<double>();
        kl.seed = doc.at("seed").get<std::uint64_t>();
        kl.parent_digest = doc.at("parent_digest").get<std::string>();
        kl.scope = parse_prune_scope(doc.value("scope", std::string("global")));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("keep-list " + path.string() + ": " + e.what());
    } catch (const ContractError& e) {
        throw FormatError("keep-list " + path.string() + ": " + e.what());
    }
    kl.validate();
    return kl;
}

void write_keeplist(const KeepList& kl, const std::filesystem::path& path) {
    kl.validate();
    nlohmann::ordered_json doc;
    doc["method"] = to_string(kl.method);
    doc["scope"] = to_string(kl.scope);
    doc["fraction_removed"] = kl.fraction_removed;
    doc["seed"] = kl.seed;
    doc["source_n"] = kl.source_n;
    doc["parent_digest"] = kl.parent_digest;
    doc["indices"] = kl.indices;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(1) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

namespace {
void check_gather(std::size_t n, const KeepList& kl) {
    if (kl.source_n != n)
        throw ContractError("keep-list indexes " + std::to_string(kl.source_n) + " samples but dataset has " +
                            std::to_string(n));
    if (kl.indices.empty()) throw ContractError("keep-list selects no samples");
}
}  // namespace

EmbeddingMatrix gather(const EmbeddingMatrix& m, const KeepList& kl) {
    check_gather(m.n_samples(), kl);
    const std::size_t d = m.n_dims();
    std::vector<float> out;
    out.reserve(kl.size() * d);
    for (auto i : kl.indices) {
        if (i >= m.n_samples()) throw ContractError("keep-list index out of range");
        auto r = m.row(i);
        out.insert(out.end(), r.begin(), r.end());
    }
    return {kl.size(), d, std::move(out)};
}

LabelVector gather(const LabelVector& labels, const KeepList& kl) {
    check_gather(labels.n_samples(), kl);
    std::vector<std::uint32_t> ids;
    ids.reserve(kl.size());
    for (auto i : kl.indices) {
        if (i >= labels.n_samples()) throw ContractError("keep-list index out of range");
        ids.push_back(labels[i]);
    }
    return {std::move(ids), labels.n_classes(), labels.class_names()};
}

KeepList compose(const KeepList& outer, const KeepList& inner) {
    if (inner.source_n != outer.size())
        throw ContractError("cannot compose keep-lists: inner indexes " + std::to_string(inner.source_n) +
                            " rows, outer keeps " + std::to_string(outer.size()));
    KeepList out = inner;
    out.source_n = outer.source_n;
    out.parent_digest = outer.parent_digest;
    out.indices.clear();
    out.indices.reserve(inner.size());
    for (auto i : inner.indices) out.indices.push_back(outer.indices.at(i));
    if (out.method != PruneMethod::identity) out.method = PruneMethod::subsample;
    return out;
}

// ---------------------------------------------------------------------------

std::string bytes_digest(std::span<const std::byte> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("internal", "SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string file_digest(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    return bytes_digest(std::as_bytes(std::span(bytes)));
}

}  // namespace kprune
