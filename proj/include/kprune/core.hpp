#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kprune {

// Error hierarchy. Every error carries a short tag so the CLI can emit a
// single machine-parsable line.
class Error : public std::runtime_error {
public:
    Error(std::string tag, const std::string& what)
        : std::runtime_error(what), tag_(std::move(tag)) {}
    const std::string& tag() const noexcept { return tag_; }

private:
    std::string tag_;
};

class FormatError : public Error {
public:
    FormatError(const std::string& what, std::optional<std::uint64_t> offset = std::nullopt);
    std::optional<std::uint64_t> offset() const noexcept { return offset_; }

private:
    std::optional<std::uint64_t> offset_;
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error("domain", what) {}
};

class DegenerateInputError : public Error {
public:
    explicit DegenerateInputError(const std::string& what) : Error("degenerate", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

/// Dense row-major float64 matrix used for all internal arithmetic.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

/// N x D float32 embedding matrix, row-major. Immutable once constructed;
/// construction validates shape and finiteness.
class EmbeddingMatrix {
public:
    EmbeddingMatrix(std::size_t n_samples, std::size_t n_dims, std::vector<float> values);

    /// Narrowing conversion from float64 working precision.
    static EmbeddingMatrix from_matrix(const Matrix& m);

    std::size_t n_samples() const noexcept { return n_samples_; }
    std::size_t n_dims() const noexcept { return n_dims_; }
    std::span<const float> values() const noexcept { return values_; }
    std::span<const float> row(std::size_t i) const { return {values_.data() + i * n_dims_, n_dims_}; }
    float operator()(std::size_t i, std::size_t j) const { return values_[i * n_dims_ + j]; }

    Matrix to_matrix() const;

    bool operator==(const EmbeddingMatrix&) const = default;

private:
    std::size_t n_samples_;
    std::size_t n_dims_;
    std::vector<float> values_;
};

/// Per-sample class ids in [0, n_classes).
class LabelVector {
public:
    LabelVector(std::vector<std::uint32_t> class_ids, std::uint32_t n_classes,
                std::vector<std::string> class_names = {});

    std::size_t n_samples() const noexcept { return ids_.size(); }
    std::uint32_t n_classes() const noexcept { return n_classes_; }
    std::span<const std::uint32_t> ids() const noexcept { return ids_; }
    std::uint32_t operator[](std::size_t i) const { return ids_[i]; }
    const std::vector<std::string>& class_names() const noexcept { return names_; }

    /// Throws FormatError unless every class id appears at least once.
    void require_full_coverage() const;

    bool operator==(const LabelVector&) const = default;

private:
    std::vector<std::uint32_t> ids_;
    std::uint32_t n_classes_;
    std::vector<std::string> names_;
};

enum class PruneMethod { simple, hard, random, subsample, identity };
enum class PruneScope { global, per_cluster };

std::string to_string(PruneMethod m);
std::string to_string(PruneScope s);
PruneMethod parse_prune_method(const std::string& s);
PruneScope parse_prune_scope(const std::string& s);

/// Sorted set of retained sample indices plus the provenance of the decision.
struct KeepList {
    std::vector<std::size_t> indices;
    std::size_t source_n = 0;
    PruneMethod method = PruneMethod::identity;
    double fraction_removed = 0.0;
    std::uint64_t seed = 0;
    std::string parent_digest;
    PruneScope scope = PruneScope::global;

    std::size_t size() const noexcept { return indices.size(); }

    /// Checks ordering, range and (for global simple/hard/random) cardinality.
    void validate() const;

    static KeepList identity(std::size_t n, std::string parent_digest = {});

    bool operator==(const KeepList&) const = default;
};

/// Round half to even; the cardinality rule for every pruning operation.
std::size_t round_count(double x);

/// Number of samples removed when pruning `fraction` of `n`.
std::size_t removed_count(double fraction, std::size_t n);

EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// Reads LBL1 plus the optional `<path>.names` sidecar.
LabelVector read_labels(const std::filesystem::path& path);
void write_labels(const LabelVector& labels, const std::filesystem::path& path);

KeepList read_keeplist(const std::filesystem::path& path);
void write_keeplist(const KeepList& kl, const std::filesystem::path& path);

EmbeddingMatrix gather(const EmbeddingMatrix& m, const KeepList& kl);
LabelVector gather(const LabelVector& labels, const KeepList& kl);

/// Maps `inner` (indexing the rows selected by `outer`) back to the source of `outer`.
KeepList compose(const KeepList& outer, const KeepList& inner);

/// Lower-case hex SHA-256 of the file bytes.
std::string file_digest(const std::filesystem::path& path);
std::string bytes_digest(std::span<const std::byte> bytes);

}  // namespace kprune
