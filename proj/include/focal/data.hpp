#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace focal {

namespace token {
inline constexpr std::int32_t kBos = 256;
inline constexpr std::int32_t kEos = 257;
inline constexpr std::int32_t kPad = 258;
inline constexpr std::size_t kByteVocab = 259;
}  // namespace token

struct TokenStream {
    std::string source_id;
    std::vector<std::int32_t> tokens;
    std::uint64_t shuffle_seed = 0;
};

/// Raw bytes as ids 0..255; lossless for any byte string.
TokenStream tokenize_bytes(std::string_view text, std::string source_id = {});
/// Inverse of tokenize_bytes. Special ids are dropped; ids above kPad throw DataError.
std::string detokenize(std::span<const std::int32_t> ids);

/// Appends BOS + bytes + EOS for one document.
void append_document(TokenStream& stream, std::string_view text);

/// A file, or every regular file under a directory (sorted by path), one
/// document per file. Throws IoError when nothing can be read.
TokenStream read_corpus(const std::filesystem::path& path);

/// Deterministic pseudo-English filler of `n_words` words in sentences.
std::string word_salad(std::size_t n_words, std::uint64_t seed);

struct Batch {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::vector<std::int32_t> inputs;   // [batch_size * seq_len]
    std::vector<std::int32_t> targets;  // next token; kPad where masked
};

/// Corpus chopped into consecutive full-length sequences (remainder dropped).
/// The target of the last position is the first token of the following
/// chunk when one exists; positions whose input is EOS get a kPad target.
struct PackedSequences {
    std::size_t seq_len = 0;
    std::size_t count = 0;
    std::vector<std::int32_t> inputs;
    std::vector<std::int32_t> targets;
};

PackedSequences pack_sequences(const TokenStream& stream, std::size_t seq_len);

/// Deterministic, seekable batch source over a subset of packed sequences.
/// Each epoch visits the subset in a fresh seeded order.
class BatchIterator {
public:
    BatchIterator(std::shared_ptr<const PackedSequences> packed, std::vector<std::size_t> indices,
                  std::size_t batch_size, std::uint64_t seed);

    Batch next();
    Batch batch_at(std::uint64_t index) const;
    std::uint64_t cursor() const { return cursor_; }
    void seek(std::uint64_t cursor) { cursor_ = cursor; }
    std::size_t sequences() const { return indices_.size(); }
    std::size_t batch_size() const { return batch_size_; }
    std::size_t seq_len() const { return packed_->seq_len; }

private:
    std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

    std::shared_ptr<const PackedSequences> packed_;
    std::vector<std::size_t> indices_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::uint64_t cursor_ = 0;
    mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
    mutable std::vector<std::size_t> cached_order_;
};

/// Iterator over every packed sequence. Throws DataError when the corpus is
/// shorter than one sequence.
BatchIterator pack(const TokenStream& stream, std::size_t seq_len, std::size_t batch_size, std::uint64_t seed);

struct DataSplit {
    BatchIterator train;
    std::vector<Batch> validation;
};

/// Carves `val_batches` fixed batches from a seeded shuffle of the packed
/// corpus before training; the rest feeds the training iterator.
DataSplit split_corpus(const TokenStream& stream, std::size_t seq_len, std::size_t batch_size,
                       std::size_t val_batches, std::uint64_t seed);

/// Stable 64-bit sub-seed for a named component.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

}  // namespace focal
